"""Command-line interface: ``koopfam simulate|analyze|compare|theorem2``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from scipy.optimize import linear_sum_assignment

from koopfam.config import load_system, system_to_dict
from koopfam.dmd import RANK_TOL, moving_stencil_spectrum
from koopfam.errors import ConfigError, KoopfamError, NumericalError
from koopfam.grid import TimeGrid
from koopfam.koopman import (
    algorithm1,
    algorithm2,
    bias_sweep,
    error_Ek,
    generator_estimates,
)
from koopfam.snapshots import (
    ObservableMap,
    apply_observables,
    parse_pairs,
    read_snapshots,
    sample_trajectory,
    write_snapshots,
)
from koopfam.spectral import OperatorFamily
from koopfam.systems import SpiralSystem, koopman_exact_series
from koopfam.tables import read_table, write_table

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

SWITCH_CAVEAT = (
    "each switch time is the midpoint of the intersection of all flagged stencil spans "
    "in one run; any window straddling a switch is flagged, so the raw uncertainty is "
    "+-s*dt; runs with an empty intersection (two switches within one stencil) are "
    "reported as merged"
)


def _floats(text, what):
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{what}: no values given")
    return vals


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=True)
        fh.write("\n")


def _cplx(z):
    return [float(np.real(z)), float(np.imag(z))]


# ---------------------------------------------------------------------------
# Family / spectral tables
# ---------------------------------------------------------------------------


def write_family(path, family: OperatorFamily):
    """Accumulated operators ``M_{k,0}`` as ``k,t,row,col,re,im``."""
    acc = family.accumulated
    t = family.grid.times
    n = acc.shape[1]

    def rows():
        for k in range(acc.shape[0]):
            for i in range(n):
                for j in range(n):
                    z = acc[k, i, j]
                    yield (k, t[k], i, j, float(np.real(z)), float(np.imag(z)))

    write_table(path, f"operator-family-{family.space}", ["k", "t", "row", "col", "re", "im"], rows())


def read_family(path) -> OperatorFamily:
    name, header, rows = read_table(path)
    if name not in ("operator-family-state", "operator-family-observable"):
        raise ConfigError(f"{path}: not an operator-family file (schema {name})")
    if header != ["k", "t", "row", "col", "re", "im"]:
        raise ConfigError(f"{path}: unexpected columns {header}")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric value: {exc}") from None
    k = data[:, 0].astype(int)
    N = int(k.max()) + 1
    n = int(data[:, 2].max()) + 1
    if data.shape[0] != N * n * n:
        raise ConfigError(f"{path}: expected {N * n * n} rows for {N} steps of {n}x{n} operators")
    acc = np.zeros((N, n, n), dtype=complex)
    acc[k, data[:, 2].astype(int), data[:, 3].astype(int)] = data[:, 4] + 1j * data[:, 5]
    t = np.zeros(N)
    t[k] = data[:, 1]
    dt = float(f"{(t[-1] - t[0]) / (N - 1):.12g}") if N > 1 else 1.0
    grid = TimeGrid(t[0], dt, N - 1)
    if np.all(acc.imag == 0):
        acc = acc.real
    space = name.rsplit("-", 1)[1]
    return OperatorFamily(grid=grid, steps=np.empty((0, n, n)), accumulated=acc, space=space)


def write_spectral(path, series):
    t = series.grid.times
    A, K = series.system_eigs, series.koopman_eigs

    def rows():
        for k in range(K.shape[0]):
            for b in range(K.shape[1]):
                yield (k, t[k], b, A[k, b].real, A[k, b].imag, K[k, b].real, K[k, b].imag,
                       float(series.residual_rel[k]), bool(series.switch_flag[k]))

    header = ["k", "t", "branch", "re_lambda_A", "im_lambda_A", "re_lambda_K", "im_lambda_K",
              "residual_rel", "switch_flag"]
    write_table(path, "spectral", header, rows())


def read_spectral(path):
    """Return ``(times, koopman_eigs)`` from a spectral CSV."""
    _, header, rows = read_table(path, "spectral")
    need = ["k", "t", "branch", "re_lambda_K", "im_lambda_K"]
    if any(h not in header for h in need):
        raise ConfigError(f"{path}: missing columns {[h for h in need if h not in header]}")
    ix = {h: header.index(h) for h in need}
    try:
        k = np.array([int(r[ix["k"]]) for r in rows])
        b = np.array([int(r[ix["branch"]]) for r in rows])
        lam = np.array([float(r[ix["re_lambda_K"]]) + 1j * float(r[ix["im_lambda_K"]]) for r in rows])
        t = np.array([float(r[ix["t"]]) for r in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric value: {exc}") from None
    N, m = k.max() + 1, b.max() + 1
    out = np.zeros((N, m), dtype=complex)
    out[k, b] = lam
    times = np.zeros(N)
    times[k] = t
    return times, out


def write_residuals(path, series):
    t = series.grid.times
    rows = ((k, t[k], float(series.residual_abs[k]), float(series.residual_rel[k]),
             bool(series.switch_flag[k])) for k in range(t.size))
    write_table(path, "residuals", ["k", "t", "residual_abs", "residual_rel", "switch_flag"], rows)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _x0(args, system):
    if args.x0:
        x0 = _floats(args.x0, "--x0")
    elif system.default_x0 is not None:
        x0 = list(system.default_x0)
    else:
        x0 = [1.0] * system.dim
    if len(x0) != system.dim:
        raise ConfigError(f"--x0 has {len(x0)} entries, system dimension is {system.dim}")
    return np.array(x0)


def run_simulate(args):
    system = load_system(args.system)
    try:
        grid = TimeGrid(args.t0, args.dt, args.steps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    snaps = sample_trajectory(system, _x0(args, system), grid, substeps=args.substeps)
    write_snapshots(args.out, snaps)


def run_analyze(args):
    snaps = read_snapshots(args.snapshots)
    system = load_system(args.system) if args.system else None
    if system is not None and system.dim != snaps.n_rows:
        raise ConfigError(f"snapshot file has {snaps.n_rows} rows, system dimension is {system.dim}")
    report = {"algorithm": args.algorithm, "snapshots": args.snapshots,
              "grid": {"t0": snaps.grid.t0, "dt": snaps.grid.dt, "steps": snaps.grid.steps}}

    if args.algorithm == "alg1":
        conserved = args.conserved_row
        if conserved is None and system is not None:
            conserved = system.conserved_row
        res = algorithm1(snaps, epsilon_rel=args.epsilon_rel, stencil=args.stencil,
                         rank_tol=args.rank_tol, conserved_row=conserved)
        series, family = res.series, res.family
        report.update(
            epsilon_rel=args.epsilon_rel, stencil=series.stencil, rank_tol=args.rank_tol,
            conserved_row=conserved,
            switches=[
                {"time": e.time, "first_flag_time": e.first_flag_time, "bracket": list(e.bracket),
                 "k_first": e.k_first, "k_last": e.k_last, "merged": e.merged}
                for e in res.switches
            ],
            switch_times=[e.time for e in res.switches],
            caveat=SWITCH_CAVEAT,
            generators=[
                {"t_start": g.t_start, "t_end": g.t_end,
                 "eigenvalues": [_cplx(z) for z in g.eigenvalues] if np.all(np.isfinite(g.A)) else None}
                for g in generator_estimates(res)
            ],
        )
    elif args.algorithm == "alg2":
        if args.pairs:
            pairs = parse_pairs(args.pairs)
        elif system is not None and system.observable_pairs:
            pairs = system.observable_pairs
        else:
            raise ConfigError("alg2 needs --pairs (e.g. '(0,1)') or a system with observable pairs")
        obs = ObservableMap(pairs, snaps.n_rows)
        series, family = algorithm2(apply_observables(obs, snaps))
        report.update(pairs=[list(p) for p in pairs], observables=list(obs.labels))
    else:
        s = args.stencil if args.stencil is not None else 2
        series, family = moving_stencil_spectrum(snaps, s, rank_tol=args.rank_tol)
        report.update(stencil=s, rank_tol=args.rank_tol)

    write_spectral(args.out, series)
    if args.residuals_out:
        write_residuals(args.residuals_out, series)
    if args.family_out:
        write_family(args.family_out, family)
    if args.report_out:
        _write_json(args.report_out, report)


def _exact_exponents(system, family, pairs):
    t = family.grid.times
    if family.space == "observable":
        blocks = {tuple(b.pair): b for b in system.blocks}
        cols = []
        for p in pairs:
            b = blocks[p]
            cols += [b.alpha(t, t[0]) + 0j, -1j * b.beta(t, t[0])]
        obs = ObservableMap(pairs, system.dim)
        cols += [np.zeros(t.size, dtype=complex)] * len(obs.passthrough)
        return np.stack(cols, axis=1)
    return np.array([s.eigenvalues for s in koopman_exact_series(system, t, t[0])])


def run_compare(args):
    system = load_system(args.system)
    family = read_family(args.family)
    obs = None
    pairs = None
    if family.space == "observable":
        pairs = parse_pairs(args.pairs) if args.pairs else system.observable_pairs
        if not pairs:
            raise ConfigError("observable-space family needs --pairs or a system with observable pairs")
        if not isinstance(system, SpiralSystem):
            raise ConfigError("observable-space comparison needs a spiral system")
        obs = ObservableMap(pairs, system.dim)
    Ek = error_Ek(family, system, obs)
    t = family.grid.times
    write_table(args.out, "error-ek", ["k", "t", "E_k"], ((k, t[k], float(Ek[k])) for k in range(t.size)))
    summary = {"max_E_k": float(np.max(Ek)), "mean_E_k": float(np.mean(Ek)),
               "argmax_t": float(t[int(np.argmax(Ek))]), "steps": int(t.size - 1),
               "system": system_to_dict(system)}
    if args.spectral:
        times, lam = read_spectral(args.spectral)
        if times.size != t.size:
            raise ConfigError("spectral file and family file have different step counts")
        exact = _exact_exponents(system, family, pairs)
        if exact.shape != lam.shape:
            raise ConfigError(f"spectral file has {lam.shape[1]} branches, oracle {exact.shape[1]}")
        dev = np.empty(t.size)
        for k in range(t.size):
            # Exponents are compared modulo 2*pi*i: branches leaving an
            # eigenvalue collision may legitimately differ by a full turn.
            diff = lam[k][:, None] - exact[k][None, :]
            diff = diff - 2j * np.pi * np.round(diff.imag / (2 * np.pi))
            cost = np.abs(diff)
            r, c = linear_sum_assignment(cost)
            dev[k] = cost[r, c].max()
        summary["max_eigenvalue_deviation"] = float(dev.max())
    if args.report_out:
        _write_json(args.report_out, summary)


def run_theorem2(args):
    system = load_system(args.system)
    if not (isinstance(system, SpiralSystem) and system.is_single_block):
        raise ConfigError("theorem2 needs a single 2x2 spiral-block system (e.g. cont-frequency)")
    dts = _floats(args.dt_sweep, "--dt-sweep")
    times = _floats(args.eval_times, "--eval-times")
    sweep = bias_sweep(system, dts, times, x0=_x0(args, system) if args.x0 else None,
                       frequency_drift_term=not args.no_drift_term)

    def rows():
        for i, dt in enumerate(sweep.dts):
            for j, t in enumerate(sweep.times):
                yield (dt, t, sweep.measured_re[i, j], sweep.predicted_re[i, j],
                       sweep.measured_arg[i, j], sweep.predicted_arg[i, j],
                       sweep.error_re[i, j], sweep.error_arg[i, j], sweep.order_re, sweep.order_arg)

    header = ["dt", "t", "measured_re", "predicted_re", "measured_arg", "predicted_arg",
              "error_re", "error_arg", "order_re", "order_arg"]
    write_table(args.out, "bias-sweep", header, rows())
    if args.report_out:
        _write_json(args.report_out, {
            "dts": sweep.dts.tolist(), "times": sweep.times.tolist(),
            "order_re": sweep.order_re, "order_arg": sweep.order_arg,
            "max_error_re": sweep.error_re.max(axis=1).tolist(),
            "max_error_arg": sweep.error_arg.max(axis=1).tolist(),
        })


def build_parser():
    p = argparse.ArgumentParser(prog="koopfam", description="Koopman spectra of non-autonomous linear systems.")
    sub = p.add_subparsers(dest="command", required=True)

    def system_arg(sp, required=True):
        sp.add_argument("--system", required=required,
                        help="catalog name, inline JSON object, or path to a JSON file")

    sp = sub.add_parser("simulate", help="sample an oracle trajectory to a snapshot CSV")
    system_arg(sp)
    sp.add_argument("--t0", type=float, default=0.0)
    sp.add_argument("--dt", type=float, default=0.01)
    sp.add_argument("--steps", type=int, default=1000)
    sp.add_argument("--x0", help="comma-separated initial state (default: the system's)")
    sp.add_argument("--substeps", type=int, default=100, help="RK4 sub-steps for systems without a closed form")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=run_simulate)

    sp = sub.add_parser("analyze", help="run a spectral algorithm on a snapshot CSV")
    sp.add_argument("--snapshots", required=True)
    system_arg(sp, required=False)
    sp.add_argument("--algorithm", choices=("alg1", "alg2", "dmd-moving"), default="alg1")
    sp.add_argument("--epsilon-rel", type=float, default=1e-6)
    sp.add_argument("--stencil", type=int)
    sp.add_argument("--rank-tol", type=float, default=RANK_TOL)
    sp.add_argument("--pairs", help="observable pairs for alg2, e.g. '(0,2),(1,3)'")
    sp.add_argument("--conserved-row", type=int)
    sp.add_argument("--out", required=True, help="spectral CSV")
    sp.add_argument("--residuals-out")
    sp.add_argument("--family-out", help="accumulated operator family CSV (input of compare)")
    sp.add_argument("--report-out", help="JSON report (switch times for alg1)")
    sp.set_defaults(func=run_analyze)

    sp = sub.add_parser("compare", help="E_k of an operator family against the exact oracle")
    system_arg(sp)
    sp.add_argument("--family", required=True)
    sp.add_argument("--spectral", help="spectral CSV for the eigenvalue deviation")
    sp.add_argument("--pairs")
    sp.add_argument("--out", required=True)
    sp.add_argument("--report-out")
    sp.set_defaults(func=run_compare)

    sp = sub.add_parser("theorem2", help="moving-stencil bias sweep over dt")
    system_arg(sp)
    sp.add_argument("--dt-sweep", default="0.04,0.02,0.01,0.005")
    sp.add_argument("--eval-times", default="0.3,0.5,0.7,1.2")
    sp.add_argument("--x0")
    sp.add_argument("--no-drift-term", action="store_true",
                    help="drop the omega'^2 term from the predicted argument")
    sp.add_argument("--out", required=True)
    sp.add_argument("--report-out")
    sp.set_defaults(func=run_theorem2)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"koopfam: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"koopfam: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except KoopfamError as exc:  # pragma: no cover - all subclasses handled above
        print(f"koopfam: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"koopfam: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
