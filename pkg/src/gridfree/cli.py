"""``gridfree`` command-line front end.

JSON goes to stdout, diagnostics to stderr. Exit codes: 0 ok, 2 invalid
input, 3 numerical failure. Node indices in all outputs are 1-based.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from .errors import GridfreeError, ValidationError
from .margins import MetricKind, b_avg, baseline_system, l_sparse, p_avg, sample_system, sweep, sweep_csv
from .network import build_comm_laplacian, build_susceptance_laplacian
from .sampling import DEFAULT_EXTRA_EDGE_PROB
from .scenario import dump_document, load_scenario, reduce_document, scenario_document
from .simulation import simulate, trajectory_csv, trajectory_summary
from .spectral import eigendecompose, participation_factors, stability_verdict
from .vulnerability import critical_element, sensitivity_csv, sensitivity_map


def _c(z) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def _emit(obj, stream=None):
    stream = stream or sys.stdout
    stream.write(json.dumps(obj, indent=2, allow_nan=True) + "\n")


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_analyze(args) -> int:
    sf = load_scenario(args.scenario)
    sf.require_active("analyze")
    system = sf.closed_loop(args.scheme)
    spec = eigendecompose(system.A)
    report = stability_verdict(spec, system.scheme)
    order = np.lexsort((spec.eigenvalues.imag, -spec.eigenvalues.real))
    out = {
        "scheme": system.scheme.value,
        "verdict": report.verdict.value,
        "zero_count": report.zero_count,
        "all_real": report.all_real,
        "dominant_pole": _c(spec.dominant),
        "margin": report.margin if report.stable else None,
        "spectrum": [_c(spec.eigenvalues[k]) for k in order],
        "participation_factors": participation_factors(spec).tolist(),
    }
    _emit(out)
    return 0


def cmd_simulate(args) -> int:
    sf = load_scenario(args.scenario)
    sf.require_active("simulate")
    scenario = sf.scenario(args.scheme)
    traj = simulate(scenario)
    if args.out:
        _write(args.out, trajectory_csv(traj))
    _emit(trajectory_summary(traj, scenario.system))
    return 0


def cmd_margins(args) -> int:
    sf = load_scenario(args.scenario)
    sf.require_active("margins")
    B = build_susceptance_laplacian(sf.network())
    L = build_comm_laplacian(sf.comm_graph())
    _emit({"b_avg": b_avg(B, len(sf.lines)), "l_sparse": l_sparse(L), "p_avg": p_avg(sf.fleet())})
    return 0


def cmd_vuln(args) -> int:
    sf = load_scenario(args.scenario)
    sf.require_active("vuln")
    system = sf.closed_loop(args.scheme)
    spec = eigendecompose(system.A)
    report = stability_verdict(spec, system.scheme)
    if not report.stable:
        warnings.warn(f"system is {report.verdict.value}", RuntimeWarning, stacklevel=1)
    smap = sensitivity_map(system, spec, args.matrix)
    if args.out:
        _write(args.out, sensitivity_csv(smap))
    crit = critical_element(smap)
    _emit({
        "scheme": system.scheme.value,
        "matrix": smap.matrix_id.value,
        "dominant_pole": _c(smap.eigenvalue),
        "i": crit.i + 1,
        "j": crit.j + 1,
        "sensitivity": _c(crit.sensitivity),
        "rho_star": crit.rho_star,
    })
    return 0


def _floats(text, what):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"--{what}: expected comma-separated numbers, got {text!r}") from None


def cmd_sweep(args) -> int:
    kind = MetricKind.parse(args.metric)
    grid = _floats(args.grid, "grid")
    try:
        sizes = [int(x) for x in args.sizes.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"--sizes: expected comma-separated integers, got {args.sizes!r}") from None
    if not sizes or min(sizes) < 2:
        raise ValidationError("--sizes: every size must be >= 2")
    schemes = [s for s in args.schemes.split(",") if s.strip()]
    results = sweep(kind, grid, sizes, args.samples, schemes, h=args.h, seed=args.seed)
    _write(args.out, sweep_csv(results))
    if args.emit_sample:
        n = sizes[0]
        ss = np.random.SeedSequence([args.seed, n, 0])
        sample = sample_system(kind, grid[0], n, np.random.default_rng(ss),
                               baseline_system(n, args.seed, DEFAULT_EXTRA_EDGE_PROB))
        doc = scenario_document(n, sample.lines, sample.links, sample.capacities.tolist(),
                                scheme=results[0].schemes[0], h=args.h)
        _write(args.emit_sample, dump_document(doc))
    return 0


def cmd_reduce(args) -> int:
    sf = load_scenario(args.scenario)
    _write(args.out, dump_document(reduce_document(sf)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridfree", description="Droop-free microgrid control analysis.")
    sub = p.add_subparsers(dest="command", required=True)

    def scen(name, help_, func):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("scenario", help="scenario JSON file")
        sp.set_defaults(func=func)
        return sp

    sp = scen("analyze", "stability verdict, spectrum and participation factors", cmd_analyze)
    sp.add_argument("--scheme", help="override control.scheme (O-NAPC, A-NAPC, APC)")

    sp = scen("simulate", "time-domain simulation", cmd_simulate)
    sp.add_argument("--scheme")
    sp.add_argument("--out", help="trajectory CSV path")

    scen("margins", "system metrics b_avg, l_sparse, p_avg", cmd_margins)

    sp = scen("vuln", "eigenvalue sensitivity map and critical element", cmd_vuln)
    sp.add_argument("--matrix", required=True, choices=["B", "L", "D"])
    sp.add_argument("--scheme")
    sp.add_argument("--out", help="sensitivity CSV path")

    sp = scen("reduce", "Kron-reduce passive nodes", cmd_reduce)
    sp.add_argument("--out", help="reduced scenario path (default stdout)")

    sp = sub.add_parser("sweep", help="randomised stability-margin sweep")
    sp.add_argument("--metric", required=True, help="b_avg, l_sparse or p_avg")
    sp.add_argument("--grid", required=True, help="comma-separated target values")
    sp.add_argument("--sizes", required=True, help="comma-separated system sizes")
    sp.add_argument("--samples", type=int, default=50)
    sp.add_argument("--schemes", default="O_NAPC,A_NAPC")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--h", type=float, default=1.0)
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.add_argument("--emit-sample", help="write the first sample as a scenario file")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, cat, *a, **k: print(f"warning: {msg}", file=sys.stderr)
            return args.func(args)
    except GridfreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
