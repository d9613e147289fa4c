"""Time-domain simulation of the closed loop under step disturbances.

Sign convention: uncontrollable injections ``p_u`` are positive for
generation and negative for load. A disturbance adds ``delta`` to
``p_u[node]``; since ``p_net`` is continuous, the local controllable DER
absorbs the step at once (``p_c = p_net - p_u`` jumps by ``-delta``) and
the consensus loop then redistributes it.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .control import DEFAULT_OMEGA0, ClosedLoopSystem, Scheme, SchemeConfig, system_matrix
from .errors import AmbiguousSpectrumError, DivergenceError, ValidationError
from .spectral import dominant_pole, eigendecompose, stability_margin, stability_verdict

DEFAULT_CONV_DT = 0.1
DEFAULT_CONV_XI = 1e-3


@dataclass(frozen=True)
class Disturbance:
    t: float
    node: int
    delta: float


@dataclass(frozen=True, eq=False)
class Scenario:
    system: ClosedLoopSystem
    horizon: float
    dt: float = 1e-3
    disturbances: tuple = ()
    p_u0: np.ndarray | None = None
    p_net0: np.ndarray | None = None
    omega0: float = DEFAULT_OMEGA0
    conv_dt: float = DEFAULT_CONV_DT
    conv_xi: float = DEFAULT_CONV_XI
    norm_ord: float = 2

    def __post_init__(self):
        n = self.system.n_nodes
        if not (0 < self.dt < self.conv_dt < self.horizon):
            raise ValidationError(
                f"need 0 < dt < conv_dt < horizon, got dt={self.dt}, conv_dt={self.conv_dt}, "
                f"horizon={self.horizon}"
            )
        lag = self.conv_dt / self.dt
        if abs(lag - round(lag)) > 1e-9 * lag:
            raise ValidationError("conv_dt must be an integer multiple of dt")
        if not self.conv_xi > 0:
            raise ValidationError("conv_xi must be > 0")
        p_u0 = np.zeros(n) if self.p_u0 is None else np.array(self.p_u0, dtype=float)
        if p_u0.shape != (n,):
            raise ValidationError(f"p_u0 must have length {n}")
        object.__setattr__(self, "p_u0", p_u0)
        if self.p_net0 is not None:
            p_net0 = np.array(self.p_net0, dtype=float)
            if p_net0.shape != (n,):
                raise ValidationError(f"p_net0 must have length {n}")
            if abs(p_net0.sum()) >= 1e-12:
                raise ValidationError(f"p_net0 must sum to zero, got {p_net0.sum():.3e}")
            object.__setattr__(self, "p_net0", p_net0)
        dist = tuple(d if isinstance(d, Disturbance) else Disturbance(*d) for d in self.disturbances)
        for k, d in enumerate(dist):
            if not (0 <= d.t <= self.horizon):
                raise ValidationError(f"disturbances[{k}].t outside [0, horizon]")
            if not (0 <= d.node < n):
                raise ValidationError(f"disturbances[{k}].node out of range")
            if k and d.t <= dist[k - 1].t:
                raise ValidationError(f"disturbances[{k}].t must be strictly increasing")
        object.__setattr__(self, "disturbances", dist)

    @property
    def initial_p_net(self) -> np.ndarray:
        """Explicit ``p_net0`` or the consensus equilibrium for ``p_u0``."""
        if self.p_net0 is not None:
            return self.p_net0
        gamma, p_c = steady_state_consensus(self.system.capacities, self.p_u0)
        return self.p_u0 + p_c


@dataclass(eq=False)
class Trajectory:
    t: np.ndarray
    p_net: np.ndarray
    p_c: np.ndarray
    p_u: np.ndarray
    p_c_normalized: np.ndarray
    omega: np.ndarray
    capacities: np.ndarray
    omega0: float = DEFAULT_OMEGA0
    convergence_times: list = field(default_factory=list)
    gamma_final: float = float("nan")
    gamma_expected: float = float("nan")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def frequency_hz(self) -> np.ndarray:
        # nominal rounded to 12 significant digits so 2*pi*60 reads back as 60
        f0 = float(f"{self.omega0 / (2 * math.pi):.12g}")
        return f0 + (self.omega - self.omega0) / (2 * math.pi)


def steady_state_consensus(fleet, p_u_final):
    """Consensus level and terminal DER outputs.

    With ``sum(p_net) == 0`` and equal normalised outputs,
    ``gamma = -sum(p_u) / sum(c)`` and ``p_c = gamma * c``.
    """
    caps = np.asarray(getattr(fleet, "capacities", fleet), dtype=float)
    p_u = np.asarray(p_u_final, dtype=float)
    if p_u.shape != caps.shape:
        raise ValidationError("p_u_final and capacities differ in length")
    gamma = -float(p_u.sum()) / float(caps.sum())
    return gamma, gamma * caps


def rk4_propagator(A, dt: float) -> np.ndarray:
    """One classical RK4 step for ``y' = A y`` as a matrix.

    For a linear time-invariant right-hand side the four stages collapse to
    ``I + M + M^2/2 + M^3/6 + M^4/24`` with ``M = dt * A``.
    """
    M = dt * np.asarray(A, dtype=float)
    I = np.eye(M.shape[0])
    return I + M @ (I + M @ (I / 2 + M @ (I / 6 + M / 24)))


def simulate(scenario: Scenario) -> Trajectory:
    """Integrate the scenario with fixed-step RK4 on the ``dt`` grid.

    Disturbance times are snapped to the nearest grid point; the sample at
    that instant is post-disturbance.
    """
    system = scenario.system
    n = system.n_nodes
    dt = scenario.dt
    steps = int(round(scenario.horizon / dt))
    caps = system.capacities

    try:
        report = stability_verdict(eigendecompose(system.A), system.scheme)
        if not report.stable:
            warnings.warn(f"simulating a {report.verdict.value} system", RuntimeWarning, stacklevel=2)
    except AmbiguousSpectrumError as exc:
        warnings.warn(f"stability verdict ambiguous: {exc}", RuntimeWarning, stacklevel=2)
    rho = float(np.max(np.abs(np.linalg.eigvals(system.A))))
    if rho * dt > 2.7:
        warnings.warn(f"dt*rho(A) = {rho * dt:.2f} is outside the RK4 stability region",
                      RuntimeWarning, stacklevel=2)

    events = {}
    for d in scenario.disturbances:
        events.setdefault(int(round(d.t / dt)), []).append(d)

    p_u = scenario.p_u0.copy()
    p_c0 = scenario.initial_p_net - p_u
    pc_idx = slice(0, 2 * n, 2) if system.filtered else slice(0, n)
    y = np.concatenate([[a, a] for a in p_c0]) if system.filtered else p_c0.copy()
    Phi = rk4_propagator(system.A, dt)

    Y = np.empty((steps + 1, y.size))
    PU = np.empty((steps + 1, n))
    Y[0] = y
    PU[0] = p_u
    for d in events.get(0, ()):
        Y[0, pc_idx][d.node] -= d.delta
        PU[0, d.node] += d.delta
    y = Y[0].copy()
    p_u = PU[0].copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, steps + 1):
            y = Phi @ y
            if k in events:
                for d in events[k]:
                    y[pc_idx][d.node] -= d.delta
                    p_u[d.node] += d.delta
            Y[k] = y
            PU[k] = p_u
    finite = np.all(np.isfinite(Y), axis=1)
    if not finite.all():
        k_bad = int(np.argmin(finite))
        raise DivergenceError(f"state became non-finite at t = {k_bad * dt:.6g} s", t_bad=k_bad * dt)

    t = np.arange(steps + 1) * dt
    p_c = Y[:, pc_idx]
    u = Y[:, 1::2] if system.filtered else p_c
    traj = Trajectory(
        t=t,
        p_net=p_c + PU,
        p_c=p_c,
        p_u=PU,
        p_c_normalized=p_c / caps,
        omega=scenario.omega0 + u @ system.feedback_matrix.T,
        capacities=caps,
        omega0=scenario.omega0,
    )
    bounds = [d.t for d in scenario.disturbances] + [scenario.horizon]
    traj.convergence_times = [
        detect_convergence(traj, scenario.conv_dt, scenario.conv_xi, start, end, scenario.norm_ord)
        for start, end in zip(bounds[:-1], bounds[1:])
    ]
    traj.gamma_final = float(np.mean(traj.p_c_normalized[-1]))
    traj.gamma_expected = steady_state_consensus(caps, PU[-1])[0]
    return traj


def detect_convergence(traj: Trajectory, conv_dt: float, xi: float, segment_start: float,
                       segment_end: float | None = None, norm_ord=2) -> float | None:
    """Earliest grid time ``t >= segment_start + conv_dt`` in the segment with
    ``||p_net(t) - p_net(t - conv_dt)|| <= xi``; ``None`` if never reached."""
    dt = traj.dt
    lag = int(round(conv_dt / dt))
    k0 = int(round(segment_start / dt))
    k_end = len(traj.t) - 1 if segment_end is None else min(int(round(segment_end / dt)), len(traj.t) - 1)
    if k0 + lag > k_end:
        return None
    ks = np.arange(k0 + lag, k_end + 1)
    diffs = np.linalg.norm(traj.p_net[ks] - traj.p_net[ks - lag], ord=norm_ord, axis=1)
    hit = np.flatnonzero(diffs <= xi)
    return float(traj.t[ks[hit[0]]]) if hit.size else None


@dataclass
class EquivalenceReport:
    max_steady_state_diff: float
    gamma: float
    terminal_p_c: dict
    convergence_times: dict
    margins: dict
    horizon: float
    dt: float
    trajectories: dict = field(default_factory=dict, repr=False)


def scheme_equivalence_report(B, L_W, D_p, h: float, p_u_final, xi: float = DEFAULT_CONV_XI,
                              conv_dt: float = DEFAULT_CONV_DT, dt: float | None = None,
                              horizon: float | None = None) -> EquivalenceReport:
    """Simulate O-NAPC and A-NAPC from the same imbalance and compare.

    Both runs start with ``p_net = 0`` while ``p_u = p_u_final``, i.e. the
    whole imbalance lands on the local DERs at ``t = 0``. The step ``dt`` and
    horizon default to values derived from each system's spectrum.
    """
    p_u_final = np.asarray(p_u_final, dtype=float)
    systems = {s: system_matrix(B, L_W, D_p, SchemeConfig(scheme=s, h=h))
               for s in (Scheme.O_NAPC, Scheme.A_NAPC)}
    margins, radii = {}, {}
    for s, sys_ in systems.items():
        spec = eigendecompose(sys_.A)
        margins[s] = stability_margin(spec)
        radii[s] = spec.spectral_radius
    if dt is None:
        step = 0.2 / max(radii.values())
        dt = conv_dt / max(2, math.ceil(conv_dt / step))
    if horizon is None:
        scale = max(1.0, float(np.abs(p_u_final).sum()))
        horizon = 3.0 * math.log(1e4 * scale / xi) / min(margins.values())
        horizon = max(horizon, 10 * conv_dt)
        horizon = math.ceil(horizon / dt) * dt

    def run(s):
        return simulate(Scenario(system=systems[s], horizon=horizon, dt=dt, p_u0=p_u_final,
                                 p_net0=np.zeros_like(p_u_final), conv_dt=conv_dt, conv_xi=xi))

    with ThreadPoolExecutor(max_workers=2) as pool:
        trajs = dict(zip(systems, pool.map(run, systems)))
    for s, tr in trajs.items():
        tr.convergence_times = [detect_convergence(tr, conv_dt, xi, 0.0)]
    gamma, _ = steady_state_consensus(systems[Scheme.O_NAPC].capacities, p_u_final)
    term = {s: tr.p_c[-1] for s, tr in trajs.items()}
    return EquivalenceReport(
        max_steady_state_diff=float(np.max(np.abs(term[Scheme.O_NAPC] - term[Scheme.A_NAPC]))),
        gamma=gamma,
        terminal_p_c=term,
        convergence_times={s: tr.convergence_times[0] for s, tr in trajs.items()},
        margins=margins,
        horizon=horizon,
        dt=dt,
        trajectories=trajs,
    )


TRAJECTORY_COLUMNS = ["t", "node", "p_net", "p_c", "p_c_normalized", "omega_hz"]


def trajectory_csv(traj: Trajectory) -> str:
    """Long-format rows, one per (time, node); nodes are 1-based."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    hz = traj.frequency_hz
    for k, tk in enumerate(traj.t):
        for i in range(traj.p_net.shape[1]):
            writer.writerow([repr(float(tk)), i + 1, repr(float(traj.p_net[k, i])),
                             repr(float(traj.p_c[k, i])), repr(float(traj.p_c_normalized[k, i])),
                             repr(float(hz[k, i]))])
    return buf.getvalue()


def trajectory_summary(traj: Trajectory, system: ClosedLoopSystem) -> dict:
    spec = eigendecompose(system.A)
    pole = dominant_pole(spec)
    report = stability_verdict(spec, system.scheme)
    return {
        "scheme": system.scheme.value,
        "dominant_pole_re": pole.real,
        "dominant_pole_im": pole.imag,
        "margin": report.margin,
        "gamma_final": traj.gamma_final,
        "gamma_expected": traj.gamma_expected,
        "convergence_times": traj.convergence_times,
    }
