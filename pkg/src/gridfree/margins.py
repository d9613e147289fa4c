"""System-level metrics and the randomized stability-margin sweeps.

The sweep uses common random numbers: sample ``s`` of a given size draws
from the same seed at every grid point, so grid points differ only in the
targeted metric. Sub-seeds derive from ``(seed, size, sample)`` alone, which
keeps results independent of worker count and scheduling.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .control import Scheme, SchemeConfig, system_matrix
from .errors import GridfreeError, ValidationError
from .network import DerFleet
from .sampling import (
    DEFAULT_EXTRA_EDGE_PROB,
    DEFAULT_RANGE,
    SampledSystem,
    log_uniform,
    nested_edge_order,
    random_connected_edges,
    random_system,
)
from .spectral import eigendecompose, stability_margin

_BASELINE_TAG = 0x6A5E


class MetricKind(str, enum.Enum):
    B_AVG = "B_AVG"
    L_SPARSE = "L_SPARSE"
    P_AVG = "P_AVG"

    @classmethod
    def parse(cls, value) -> "MetricKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(f"unknown metric {value!r}; expected b_avg, l_sparse or p_avg") from None


def b_avg(B, n_lines: int) -> float:
    """Average line susceptance, ``tr(B) / (2 n_lines)``.

    Historically called the "average impedance"; it is a mean of
    susceptances, so larger values mean electrically closer nodes.
    """
    if n_lines <= 0:
        raise ValidationError("n_lines must be positive")
    return float(np.trace(B)) / (2 * n_lines)


def l_sparse(L_W) -> float:
    """``1 - tr(L_W) / (N (N - 1))``.

    Equals the missing-edge fraction relative to the complete graph only
    for unit weights; scaling the weights changes it.
    """
    n = np.shape(L_W)[0]
    if n < 2:
        raise ValidationError("l_sparse needs at least 2 nodes")
    return 1.0 - float(np.trace(L_W)) / (n * (n - 1))


def p_avg(fleet) -> float:
    """Mean available capacity, ``tr(D_p^-1) / N``."""
    caps = fleet.capacities if isinstance(fleet, DerFleet) else np.asarray(fleet, dtype=float)
    return float(np.mean(caps))


def baseline_system(n: int, seed: int, p_extra=DEFAULT_EXTRA_EDGE_PROB) -> SampledSystem:
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, _BASELINE_TAG]))
    return random_system(rng, n, p_extra=p_extra)


def check_target(kind, target: float, n: int) -> None:
    kind = MetricKind.parse(kind)
    if not math.isfinite(target):
        raise ValidationError(f"{kind.value} target must be finite")
    if kind is MetricKind.L_SPARSE:
        hi = 1.0 - 2.0 / n
        if not (-1e-12 <= target <= hi + 1e-12):
            raise ValidationError(
                f"L_SPARSE target {target} infeasible for n={n}; must lie in [0, {hi:.6g}]"
            )
    elif target <= 0:
        raise ValidationError(f"{kind.value} target must be > 0, got {target}")


def sample_system(kind, target: float, n: int, seed, baseline: SampledSystem | None = None,
                  p_extra: float = DEFAULT_EXTRA_EDGE_PROB) -> SampledSystem:
    """Random connected system whose ``kind`` metric equals ``target``.

    Only the targeted matrix is randomised; the other two come from
    ``baseline`` (by default the fixed baseline for ``(n, seed)``).

    * ``B_AVG``: random topology and susceptances, rescaled to the target mean.
    * ``L_SPARSE``: a connected edge set of ``round(N(N-1)(1-target)/2)``
      edges with equal weights, scaled so the trace hits the target exactly.
    * ``P_AVG``: random capacities rescaled to the target mean.
    """
    kind = MetricKind.parse(kind)
    if n < 2:
        raise ValidationError("system size must be >= 2")
    check_target(kind, target, n)
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        rng = np.random.default_rng(seed)
    if baseline is None:
        base_seed = seed if isinstance(seed, (int, np.integer)) else 0
        baseline = baseline_system(n, int(base_seed), p_extra)

    if kind is MetricKind.B_AVG:
        pairs = random_connected_edges(n, rng, p_extra)
        b = log_uniform(rng, *DEFAULT_RANGE, size=len(pairs))
        b *= target / b.mean()
        lines = [(i, j, float(x)) for (i, j), x in zip(pairs, b)]
        return SampledSystem(lines=lines, links=baseline.links, capacities=baseline.capacities)
    if kind is MetricKind.L_SPARSE:
        total = n * (n - 1) * (1.0 - target) / 2.0  # required sum of weights
        m = int(min(max(round(total), n - 1), n * (n - 1) // 2))
        pairs = nested_edge_order(n, rng)[:m]
        w = total / m
        links = [(i, j, w) for i, j in pairs]
        return SampledSystem(lines=baseline.lines, links=links, capacities=baseline.capacities)
    caps = log_uniform(rng, *DEFAULT_RANGE, size=n)
    caps *= target / caps.mean()
    return SampledSystem(lines=baseline.lines, links=baseline.links, capacities=caps)


def system_margin(B, L_W, D_p, scheme, h: float) -> float:
    sys_ = system_matrix(B, L_W, D_p, SchemeConfig(scheme=scheme, h=h))
    return stability_margin(eigendecompose(sys_.A))


@dataclass
class SweepResult:
    kind: MetricKind
    size: int
    grid: np.ndarray
    schemes: list
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    excluded: dict = field(default_factory=dict)
    samples: int = 0
    seed: int = 0


def _thread_count():
    try:
        return max(1, int(os.environ.get("GRIDFREE_THREADS", "0")) or (os.cpu_count() or 1))
    except ValueError:
        return 1


def _sample_margins(kind, grid, n, s, seed, baseline, schemes, h, p_extra):
    out = np.full((len(grid), len(schemes)), np.nan)
    ss = np.random.SeedSequence([seed, n, s])
    for g, target in enumerate(grid):
        # identical stream at every grid point
        sample = sample_system(kind, target, n, np.random.default_rng(ss), baseline, p_extra)
        B, L, D = sample.B, sample.L_W, sample.D_p
        for k, scheme in enumerate(schemes):
            try:
                out[g, k] = system_margin(B, L, D, scheme, h)
            except GridfreeError:
                pass
    return out


def sweep(kind, grid, sizes, samples_per_point: int, schemes=(Scheme.O_NAPC, Scheme.A_NAPC),
          h: float = 1.0, seed: int = 0, p_extra: float = DEFAULT_EXTRA_EDGE_PROB,
          workers: int | None = None) -> list[SweepResult]:
    """Mean stability margin versus a system metric, one result per size.

    Samples that are not asymptotically stable (which the theory rules out)
    are excluded from the statistics, counted, and reported with a warning.
    """
    kind = MetricKind.parse(kind)
    grid = np.asarray([float(g) for g in grid])
    schemes = [Scheme.parse(s) for s in schemes]
    if samples_per_point < 1:
        raise ValidationError("samples_per_point must be >= 1")
    if not grid.size or not len(schemes):
        raise ValidationError("grid and schemes must be non-empty")
    for n in sizes:
        for target in grid:
            check_target(kind, target, n)
    workers = workers or _thread_count()

    results = []
    for n in sizes:
        baseline = baseline_system(n, seed, p_extra)
        args = [(kind, grid, n, s, seed, baseline, schemes, h, p_extra) for s in range(samples_per_point)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                per_sample = list(pool.map(lambda a: _sample_margins(*a), args))
        else:
            per_sample = [_sample_margins(*a) for a in args]
        stack = np.stack(per_sample)  # (samples, grid, schemes)
        res = SweepResult(kind=kind, size=n, grid=grid, schemes=schemes,
                          samples=samples_per_point, seed=seed)
        for k, scheme in enumerate(schemes):
            vals = stack[:, :, k]
            ok = np.isfinite(vals)
            excluded = (~ok).sum(axis=0)
            means = np.array([vals[ok[:, g], g].mean() if ok[:, g].any() else np.nan
                              for g in range(grid.size)])
            stds = np.array([vals[ok[:, g], g].std(ddof=1) if ok[:, g].sum() > 1 else 0.0
                             for g in range(grid.size)])
            res.mean[scheme] = means
            res.std[scheme] = stds
            res.excluded[scheme] = excluded
            if excluded.any():
                warnings.warn(f"{int(excluded.sum())} non-stable samples excluded "
                              f"(size {n}, {scheme.value})", RuntimeWarning, stacklevel=2)
        results.append(res)
    return results


SWEEP_COLUMNS = ["metric", "target", "size", "scheme", "mean_margin", "std_margin", "samples", "excluded"]


def sweep_csv(results: list[SweepResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for res in results:
        for g, target in enumerate(res.grid):
            for scheme in res.schemes:
                writer.writerow([
                    res.kind.value, repr(float(target)), res.size, scheme.value,
                    repr(float(res.mean[scheme][g])), repr(float(res.std[scheme][g])),
                    res.samples, int(res.excluded[scheme][g]),
                ])
    return buf.getvalue()


def capacity_crossover(B, L_W, capacities, h: float = 1.0) -> float:
    """Capacity scale factor ``k*`` at which O-NAPC and A-NAPC margins tie.

    Below ``k*`` (smaller capacities) A-NAPC has the larger margin, above it
    O-NAPC does. Located by bisection on ``log k``.
    """
    caps = np.asarray(capacities, dtype=float)

    def gap(logk):
        D = np.diag(1.0 / (math.exp(logk) * caps))
        return (math.log(system_margin(B, L_W, D, Scheme.A_NAPC, h))
                - math.log(system_margin(B, L_W, D, Scheme.O_NAPC, h)))

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if gap(lo) > 0:
            break
        lo *= 2
    else:
        raise ValidationError("could not bracket the crossover from below")
    for _ in range(200):
        if gap(hi) < 0:
            break
        hi *= 2
    else:
        raise ValidationError("could not bracket the crossover from above")
    return math.exp(bisect(gap, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=400))
