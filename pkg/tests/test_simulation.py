import math

import numpy as np
import pytest
from scipy.linalg import expm

from gridfree import (
    DivergenceError,
    Disturbance,
    Scenario,
    Scheme,
    SchemeConfig,
    ValidationError,
    detect_convergence,
    eigendecompose,
    scheme_equivalence_report,
    simulate,
    stability_margin,
    steady_state_consensus,
    system_matrix,
)
from gridfree.simulation import rk4_propagator, trajectory_csv
from _util import UNIT2, moderate_draws

D21 = np.diag([0.5, 1.0])


def _two_node(scheme="O-NAPC", **kw):
    return system_matrix(UNIT2, UNIT2, D21, SchemeConfig(scheme, **kw))


def expm_oracle(scenario):
    """Exact piecewise solution on the same grid, disturbances at snapped times."""
    sys_ = scenario.system
    dt = scenario.dt
    steps = int(round(scenario.horizon / dt))
    events = {}
    for d in scenario.disturbances:
        events.setdefault(int(round(d.t / dt)), []).append(d)
    n = sys_.n_nodes
    p_u = scenario.p_u0.copy()
    p_c = scenario.initial_p_net - p_u
    y = np.repeat(p_c, 2) if sys_.filtered else p_c.copy()
    pc = slice(0, 2 * n, 2) if sys_.filtered else slice(0, n)
    Phi = expm(dt * sys_.A)
    out = np.empty((steps + 1, n))
    for k in range(steps + 1):
        if k:
            y = Phi @ y
        for d in events.get(k, ()):
            y[pc][d.node] -= d.delta
            p_u[d.node] += d.delta
        out[k] = y[pc] + p_u
    return out


def test_steady_state_examples():
    g, p = steady_state_consensus(np.array([2.0, 1.0]), np.zeros(2))
    assert g == 0 and np.array_equal(p, [0, 0])
    g, p = steady_state_consensus(np.array([2.0, 1.0]), np.array([-1.5, 0.0]))
    assert g == 0.5 and np.array_equal(p, [1.0, 0.5])
    case1 = np.array([1.85, 1.73, 1.15, 1.67])
    for load in (0.4, 1.0, 2.5):
        g, _ = steady_state_consensus(case1, np.full(4, -load / 4))
        assert abs(g - load / 6.40) < 1e-14


def test_rk4_propagator_matches_stagewise_rk4():
    A = _two_node().A
    dt = 0.01
    y = np.array([0.3, -0.2])
    f = lambda v: A @ v
    k1 = f(y)
    k2 = f(y + dt / 2 * k1)
    k3 = f(y + dt / 2 * k2)
    k4 = f(y + dt * k3)
    ref = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert np.abs(rk4_propagator(A, dt) @ y - ref).max() < 1e-15


def test_equilibrium_is_constant():
    sc = Scenario(system=_two_node(), horizon=2.0, dt=1e-2, p_u0=np.array([-0.6, 0.3]))
    tr = simulate(sc)
    assert np.abs(tr.p_net - tr.p_net[0]).max() < 1e-14
    assert np.abs(tr.omega - sc.omega0).max() < 1e-12
    assert tr.convergence_times == []


def test_two_node_load_step():
    sc = Scenario(system=_two_node(), horizon=12.0, dt=1e-3,
                  disturbances=[Disturbance(1.0, 0, -1.5)], conv_xi=1e-4)
    tr = simulate(sc)
    assert np.abs(tr.p_c[-1] - [1.0, 0.5]).max() < 1e-8
    assert abs(tr.gamma_final - 0.5) < 1e-8 and tr.gamma_expected == 0.5
    oracle = expm_oracle(sc)
    assert np.abs(tr.p_net - oracle).max() < 1e-8

    # scalar-mode decay: p_net(t) - p_net(inf) = dp0 exp(lambda (t - ts))
    lam, dt_c, xi = -3.0, 0.1, 1e-4
    dp0 = np.linalg.norm([0.5, -0.5])
    t_c = 1.0 + dt_c + math.log(dp0 * (1 - math.exp(lam * dt_c)) / xi) / abs(lam)
    assert abs(tr.convergence_times[0] - t_c) <= sc.dt


def test_rk4_against_expm_oracle_random():
    for n, h, s in moderate_draws(8, seed=41, n_range=(2, 4)):
        for scheme in (Scheme.O_NAPC, Scheme.A_NAPC, Scheme.APC):
            sys_ = system_matrix(s.B, s.L_W, s.D_p, SchemeConfig(scheme, h=h))
            margin = stability_margin(eigendecompose(sys_.A))
            dt = min(1e-3 / margin, 0.01)
            dt = 0.1 / math.ceil(0.1 / dt)
            rng = np.random.default_rng(n)
            sc = Scenario(system=sys_, horizon=2.0, dt=dt,
                          disturbances=[Disturbance(0.3, 0, float(rng.normal())),
                                        Disturbance(1.1, n - 1, float(rng.normal()))])
            tr = simulate(sc)
            assert np.abs(tr.p_net - expm_oracle(sc)).max() < 1e-8


def test_filtered_simulation_matches_oracle():
    sys_ = _two_node(filter_tau=0.05)
    sc = Scenario(system=sys_, horizon=8.0, dt=1e-3, disturbances=[Disturbance(0.5, 1, 0.8)])
    tr = simulate(sc)
    assert np.abs(tr.p_net - expm_oracle(sc)).max() < 1e-8
    g, p = steady_state_consensus(sys_.capacities, tr.p_u[-1])
    assert np.abs(tr.p_c[-1] - p).max() < 1e-6


def test_conservation_and_frequency_balance():
    for n, h, s in moderate_draws(6, seed=42, n_range=(3, 8)):
        for scheme in (Scheme.O_NAPC, Scheme.A_NAPC):
            sys_ = system_matrix(s.B, s.L_W, s.D_p, SchemeConfig(scheme, h=h))
            sc = Scenario(system=sys_, horizon=5.0, dt=1e-3, p_u0=np.full(n, 0.1),
                          disturbances=[Disturbance(1.0, 0, -0.7), Disturbance(2.5, n - 1, 0.4)])
            tr = simulate(sc)
            assert np.abs(tr.p_net.sum(axis=1) - tr.p_net[0].sum()).max() < 1e-9
            dev = tr.omega - sc.omega0
            if scheme is Scheme.O_NAPC:
                assert np.abs(dev.mean(axis=1)).max() < 1e-9
            else:
                assert np.abs(dev @ s.capacities).max() < 1e-9


def test_step_halving():
    sys_ = _two_node("A-NAPC")
    kw = dict(system=sys_, horizon=6.0, disturbances=[Disturbance(0.5, 0, -1.0)])
    a = simulate(Scenario(dt=2e-3, **kw)).p_c[-1]
    b = simulate(Scenario(dt=1e-3, **kw)).p_c[-1]
    assert np.abs(a - b).max() < 1e-8


def test_disturbance_at_time_zero_and_snapping():
    sc = Scenario(system=_two_node(), horizon=1.0, dt=0.01, disturbances=[Disturbance(0.0, 0, -1.0),
                                                                        Disturbance(0.2049, 1, 0.5)])
    tr = simulate(sc)
    assert tr.p_u[0, 0] == -1.0
    k = np.flatnonzero(tr.p_u[:, 1])[0]
    assert tr.t[k] == pytest.approx(0.2)


def test_divergence_reports_time():
    sys_ = system_matrix(UNIT2, UNIT2, D21, SchemeConfig("O-NAPC", h=1e6))
    with pytest.warns(RuntimeWarning, match="RK4"):
        with pytest.raises(DivergenceError) as info:
            simulate(Scenario(system=sys_, horizon=10.0, dt=1e-3, disturbances=[Disturbance(0.0, 0, 1.0)]))
    assert info.value.t_bad is not None and 0 < info.value.t_bad <= 10.0


def test_marginal_system_warns():
    sys_ = system_matrix(np.zeros((2, 2)), UNIT2, D21, SchemeConfig("O-NAPC"))
    with pytest.warns(RuntimeWarning, match="Marginal"):
        simulate(Scenario(system=sys_, horizon=1.0, dt=0.01))


@pytest.mark.parametrize("kw", [
    dict(dt=0.2, conv_dt=0.1),
    dict(conv_dt=0.15, dt=0.1),
    dict(conv_xi=0.0),
    dict(p_net0=np.array([1.0, 0.0])),
    dict(disturbances=[Disturbance(1.0, 0, 1.0), Disturbance(1.0, 1, 1.0)]),
    dict(disturbances=[Disturbance(11.0, 0, 1.0)]),
    dict(disturbances=[Disturbance(1.0, 2, 1.0)]),
])
def test_scenario_validation(kw):
    args = dict(system=_two_node(), horizon=10.0, dt=0.01)
    args.update(kw)
    with pytest.raises(ValidationError):
        Scenario(**args)


def test_detect_convergence_edge_cases():
    tr = simulate(Scenario(system=_two_node(), horizon=2.0, dt=0.01))
    assert detect_convergence(tr, 0.1, 1e-3, 0.5) == pytest.approx(0.6)
    tr.p_net = np.exp(tr.t)[:, None] * np.ones((1, 2))
    assert detect_convergence(tr, 0.1, 1e-3, 0.0) is None


def test_equivalence_report_two_node():
    rep = scheme_equivalence_report(UNIT2, UNIT2, D21, 1.0, [-1.5, 0.0])
    assert rep.gamma == 0.5
    assert rep.max_steady_state_diff < 1e-2
    for p in rep.terminal_p_c.values():
        assert np.abs(p - [1.0, 0.5]).max() < 1e-2


@pytest.mark.parametrize("k,faster", [(0.2, Scheme.A_NAPC), (5.0, Scheme.O_NAPC)])
def test_capacity_regime_decides_faster_scheme(k, faster):
    (n, h, s), = moderate_draws(1, seed=44, n_range=(4, 4))
    D = np.diag(1 / (k * s.capacities))
    rep = scheme_equivalence_report(s.B, s.L_W, D, h, np.array([-1.0, 0.0, 0.3, 0.0]) * k)
    other = Scheme.O_NAPC if faster is Scheme.A_NAPC else Scheme.A_NAPC
    assert rep.convergence_times[faster] < rep.convergence_times[other]


def test_trajectory_csv_layout():
    tr = simulate(Scenario(system=_two_node(), horizon=0.2, dt=0.01, conv_dt=0.1))
    rows = trajectory_csv(tr).splitlines()
    assert rows[0] == "t,node,p_net,p_c,p_c_normalized,omega_hz"
    assert len(rows) == 1 + 21 * 2
    assert rows[1].split(",")[:2] == ["0.0", "1"]
    assert float(rows[1].split(",")[5]) == 60.0
