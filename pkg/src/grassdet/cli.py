"""Command-line driver: generate inputs, optimize, scan and self-check.

Reports are flat ``key = value`` text plus one line per iteration, and
CSV for the scan grid, so fixtures stay diff-able.  Under
``--deterministic`` the report omits wall-clock timings and fixes all
reduction orders, making repeated runs bitwise identical.
"""

from __future__ import annotations

import argparse
import math
import sys
from itertools import combinations

import numpy as np

from . import blocked as blk
from . import metrics
from .alternating import optimize_alternating, optimize_hybrid
from .cisd import expand_cisd, parse_cisd, serialize_cisd
from .geometry import BlockedStiefelPoint, StiefelPoint, subspace_distance
from .kernels import EvalCounters, overlap_f
from .models import (
    HubbardDimerSpec,
    dominant_start,
    generate_h2_model,
    h2_angle_point,
    hubbard_dimer_fci,
    random_ci,
    random_cisd,
)
from .newton import ToleranceOptions, assemble_system, optimize as newton_optimize
from .thouless import optimize_thouless
from .wavefunction import (
    CIWaveFunction,
    ParseError,
    parse_wavefunction,
    serialize_wavefunction,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_PARSE_ERROR = 2
EXIT_NO_CONVERGENCE = 3


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grassdet",
        description="Best Slater-determinant approximation of CI wave functions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="optimize the overlap with a wave-function file")
    p_opt.add_argument("input", help="WFN v1 or CISD v1 file")
    p_opt.add_argument("--alg", choices=("absil", "thouless", "alternating", "hybrid"),
                       default="absil")
    p_opt.add_argument("--tol-grad", type=float, default=1e-8)
    p_opt.add_argument("--tol-step", type=float, default=1e-10)
    p_opt.add_argument("--max-iter", type=int, default=20)
    p_opt.add_argument("--max-sweeps", type=int, default=500)
    p_opt.add_argument("--deterministic", action="store_true",
                       help="fixed-order reductions, timing-free report")
    p_opt.add_argument("--threads", type=int, default=1)
    p_opt.add_argument("--force", action="store_true",
                       help="lift the orbital-count guard of the full transformation")
    p_opt.add_argument("--naive-counts", action="store_true",
                       help="evaluate one determinant per tensor entry (cost accounting)")
    p_opt.add_argument("--start", default="dominant",
                       help="'dominant' or a file with a determinant / U matrix")
    p_opt.add_argument("--freeze", default="",
                       help="comma-separated orbital indices to freeze")
    p_opt.add_argument("--energies", default="",
                       help="E0,E1,EHF to print the correlation-energy bound")
    p_opt.add_argument("-o", "--output", default="", help="write the report to a file")
    p_opt.set_defaults(func=cmd_optimize)

    p_gen = sub.add_parser("generate", help="emit model wave-function files")
    gen_sub = p_gen.add_subparsers(dest="kind", required=True)
    g_h2 = gen_sub.add_parser("h2", help="two-configuration model state")
    g_h2.add_argument("--c0", type=float, required=True)
    g_h2.add_argument("-o", "--output", default="")
    g_h2.set_defaults(func=cmd_generate_h2)
    g_hub = gen_sub.add_parser("hubbard", help="Hubbard-dimer FCI ground state")
    g_hub.add_argument("--t", type=float, default=1.0)
    g_hub.add_argument("--u", type=float, default=1.0)
    g_hub.add_argument("-o", "--output", default="")
    g_hub.set_defaults(func=cmd_generate_hubbard)
    g_rnd = gen_sub.add_parser("random", help="reproducible random CI state")
    g_rnd.add_argument("--norb", type=int, required=True)
    g_rnd.add_argument("--nelec", type=int, required=True)
    g_rnd.add_argument("--terms", type=int, required=True)
    g_rnd.add_argument("--seed", type=int, required=True)
    g_rnd.add_argument("-o", "--output", default="")
    g_rnd.set_defaults(func=cmd_generate_random)
    g_cisd = gen_sub.add_parser("cisd", help="reproducible random restricted CISD state")
    g_cisd.add_argument("--dims", required=True, help="per-irrep orbital counts, e.g. 3,2")
    g_cisd.add_argument("--nocc", required=True, help="per-irrep occupations, e.g. 2,1")
    g_cisd.add_argument("--seed", type=int, required=True)
    g_cisd.add_argument("--amplitude", type=float, default=0.1)
    g_cisd.add_argument("-o", "--output", default="")
    g_cisd.set_defaults(func=cmd_generate_cisd)

    p_scan = sub.add_parser("scan", help="overlap surface of the two-angle model family")
    p_scan.add_argument("--c0", type=float, required=True)
    p_scan.add_argument("--grid", type=int, default=101)
    p_scan.add_argument("-o", "--output", default="")
    p_scan.set_defaults(func=cmd_scan)

    p_check = sub.add_parser("check", help="run the internal validation battery")
    p_check.add_argument("--only", default="",
                         help="run a single check: derivatives|equivalence|paths|plucker")
    p_check.add_argument("--seed", type=int, default=20)
    p_check.add_argument("--inject-fault", action="store_true",
                         help="flip a Jacobian sign to demonstrate failure detection")
    p_check.set_defaults(func=cmd_check)
    return parser


def _emit(lines, path: str) -> None:
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_input(path: str):
    """Returns ('wfn', CIWaveFunction) or ('cisd', CISDWaveFunction)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    head = text.lstrip().split(None, 2)
    if head[:2] == ["CISD", "1"]:
        return "cisd", parse_cisd(text)
    return "wfn", parse_wavefunction(text)


def _start_point(arg: str, wf: CIWaveFunction) -> StiefelPoint:
    if arg == "dominant":
        return dominant_start(wf)
    with open(arg, "r", encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("WFN"):
        start_wf = parse_wavefunction(text)
        if start_wf.n_terms != 1:
            raise ParseError("start file must hold a single determinant")
        occ = next(iter(start_wf.terms))
        return StiefelPoint.from_occupation(wf.n_spin_orbitals, occ)
    mat = np.loadtxt(arg, ndmin=2)
    return StiefelPoint.from_matrix(mat, orthonormalize=True)


def cmd_optimize(args) -> int:
    kind, loaded = _load_input(args.input)
    opts = ToleranceOptions(
        tol_grad=args.tol_grad, tol_step=args.tol_step, max_iter=args.max_iter,
        naive=args.naive_counts, threads=args.threads,
        deterministic=args.deterministic, max_sweeps=args.max_sweeps)
    lines = [f"input = {args.input}", f"format = {kind}", f"algorithm = {args.alg}"]

    if kind == "cisd" and args.alg == "absil" and not args.freeze:
        cisd = loaded
        blocks = tuple(
            StiefelPoint.from_occupation(dim, tuple(range(1, n + 1)))
            for dim, n in zip(cisd.block_dims, cisd.n_per_irrep))
        point = BlockedStiefelPoint(blocks, tuple(("s", k + 1)
                                                  for k in range(cisd.n_irreps)))
        report = blk.optimize_cisd(point, cisd, opts)
        norm = cisd.norm()
        lines += _report_lines(report, norm, args.deterministic)
        final = report.final_point
        mats = [b.u for b in final.blocks]
        for k, mat in enumerate(mats, start=1):
            lines.append(f"final_U_irrep_{k} =")
            lines += _matrix_lines(mat)
        _emit(lines, args.output)
        return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE

    wf = loaded if kind == "wfn" else expand_cisd(loaded)
    wf = wf.normalized()
    frozen = [int(x) for x in args.freeze.split(",") if x.strip()]
    start = _start_point(args.start, wf)

    if frozen:
        reduction = blk.freeze_core(wf, start, frozen)
        inner_wf, inner_start = reduction.wavefunction.normalized(), reduction.point
    else:
        reduction = None
        inner_wf, inner_start = wf, start

    report = _run_algorithm(args.alg, inner_start, inner_wf, opts, args.force)
    lines += _report_lines(report, 1.0, args.deterministic)
    final = report.final_point
    if reduction is not None:
        final = reduction.lift(final)
        lines.append(f"frozen = {','.join(str(p) for p in frozen)}")
    lines.append("final_U =")
    lines += _matrix_lines(final.u)
    f_norm = abs(overlap_f(final.u, wf))
    triple = metrics.distances(min(f_norm, 1.0))
    lines.append(f"overlap = {f_norm!r}")
    lines.append(f"d_fs = {triple.d_fs!r}")
    lines.append(f"d_acfc = {triple.d_acfc!r}")
    lines.append(f"d_brlcm = {triple.d_brlcm!r}")
    if args.energies:
        e0, e1, ehf = (float(x) for x in args.energies.split(","))
        bound = metrics.correlation_energy_bound(e0, e1, ehf)
        lines.append(f"energy_bound = {bound!r}")
        lines.append(f"bound_satisfied = {triple.d_brlcm <= bound + 1e-12}")
    _emit(lines, args.output)
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def _run_algorithm(alg: str, start: StiefelPoint, wf: CIWaveFunction,
                   opts: ToleranceOptions, force: bool):
    if alg == "absil":
        return newton_optimize(start, wf, opts)
    if alg == "thouless":
        occ = _nearest_determinant(start, wf)
        return optimize_thouless(wf, occ, opts, force=force)
    if alg == "alternating":
        return optimize_alternating(start, wf, opts)
    return optimize_hybrid(start, wf, opts)


def _nearest_determinant(start: StiefelPoint, wf: CIWaveFunction):
    """Occupation whose unit-column determinant is closest to ``start``."""
    best, best_d = None, float("inf")
    for occ in combinations(range(1, wf.n_spin_orbitals + 1), wf.n_electrons):
        cand = StiefelPoint.from_occupation(wf.n_spin_orbitals, occ)
        d = subspace_distance(cand, start)
        if d < best_d:
            best, best_d = occ, d
    return best


def _report_lines(report, norm: float, deterministic: bool):
    lines = [f"converged = {report.converged}", f"reason = {report.reason}"]
    lines.append(f"iterations = {report.n_iterations}")
    for rec in report.iterations:
        step = "-" if rec.step_norm is None else repr(rec.step_norm)
        row = (f"iter {rec.index} f {rec.f / norm!r} grad {rec.grad_norm!r} "
               f"step {step} dets {rec.n_det_evals}")
        if not deterministic:
            row += f" wall {rec.wall_time:.6f}"
        lines.append(row)
    lines.append(f"f_final = {report.f_final / norm!r}")
    lines.append(f"grad_norm_final = {report.grad_norm_final!r}")
    lines.append(f"n_det_evals = {report.counters.n_det_evals}")
    lines.append(f"degenerate = {report.degenerate}")
    if report.character is not None:
        lines.append(f"character = {report.character}")
    return lines


def _matrix_lines(mat: np.ndarray):
    return ["  " + " ".join(repr(float(x)) for x in row) for row in mat]


def cmd_generate_h2(args) -> int:
    wf = generate_h2_model(args.c0)
    _emit([serialize_wavefunction(wf).rstrip("\n")], args.output)
    return EXIT_OK


def cmd_generate_hubbard(args) -> int:
    wf = hubbard_dimer_fci(HubbardDimerSpec(t=args.t, u=args.u))
    _emit([serialize_wavefunction(wf).rstrip("\n")], args.output)
    return EXIT_OK


def cmd_generate_random(args) -> int:
    wf = random_ci(args.norb, args.nelec, args.terms, args.seed)
    _emit([serialize_wavefunction(wf).rstrip("\n")], args.output)
    return EXIT_OK


def cmd_generate_cisd(args) -> int:
    dims = tuple(int(x) for x in args.dims.split(","))
    nocc = tuple(int(x) for x in args.nocc.split(","))
    wf = random_cisd(dims, nocc, args.seed, amplitude=args.amplitude)
    _emit([serialize_cisd(wf).rstrip("\n")], args.output)
    return EXIT_OK


def cmd_scan(args) -> int:
    wf = generate_h2_model(args.c0).normalized()
    grid = np.linspace(-math.pi / 2, math.pi / 2, args.grid)
    lines = ["k_alpha,k_beta,f"]
    for ka in grid:
        for kb in grid:
            f = overlap_f(h2_angle_point(ka, kb).u, wf)
            lines.append(f"{float(ka)!r},{float(kb)!r},{float(f)!r}")
    _emit(lines, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# self-check battery
# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    checks = {
        "derivatives": _check_derivatives,
        "equivalence": _check_equivalence,
        "paths": _check_paths,
        "plucker": _check_plucker,
    }
    if args.only:
        if args.only not in checks:
            print(f"unknown check {args.only!r}", file=sys.stderr)
            return EXIT_CHECK_FAILED
        checks = {args.only: checks[args.only]}
    failed = False
    for name, fn in checks.items():
        deviation, tol = fn(args)
        ok = deviation < tol
        failed = failed or not ok
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name}: max deviation {deviation:.3e} (tolerance {tol:.1e})")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _check_derivatives(args):
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for k in range(3):
        wf = random_ci(6, 3, 12, seed=args.seed + k)
        point = StiefelPoint.random(6, 3, rng)
        system = assemble_system(point, wf)
        jac = system.jacobian
        if args.inject_fault and k == 0:
            jac = -jac
        fd = _fd_projected_gradient(point, wf)
        worst = max(worst, float(np.max(np.abs(jac - fd))))
        eta = rng.standard_normal(point.u.shape)
        eta -= point.u @ (point.u.T @ eta)
        hv = (system.hessian @ eta.ravel()).reshape(point.u.shape)
        hv_fd = _fd_hessian_vec(point, wf, eta)
        worst = max(worst, float(np.max(np.abs(hv - hv_fd))) / max(1.0, float(np.max(np.abs(hv)))))
    return worst, 1e-6


def _fd_projected_gradient(point, wf, h=1e-5):
    u = point.u
    m, n = u.shape
    grad = np.zeros((m, n))
    nrm = wf.norm()
    for p in range(m):
        for q in range(n):
            up, um = u.copy(), u.copy()
            up[p, q] += h
            um[p, q] -= h
            fp = sum(c * np.linalg.det(up[np.asarray(occ) - 1, :])
                     for occ, c in wf.terms.items())
            fm = sum(c * np.linalg.det(um[np.asarray(occ) - 1, :])
                     for occ, c in wf.terms.items())
            grad[p, q] = (fp - fm) / (2 * h)
    pi = np.eye(m) - u @ u.T
    return pi @ grad


def _fd_hessian_vec(point, wf, eta, h=1e-5):
    from .kernels import overlap_gradient

    u = point.u

    def proj_grad(x):
        pi = np.eye(x.shape[0]) - x @ np.linalg.inv(x.T @ x) @ x.T
        return pi @ overlap_gradient(x, wf)

    d = (proj_grad(u + h * eta) - proj_grad(u - h * eta)) / (2 * h)
    pi = np.eye(u.shape[0]) - u @ u.T
    return pi @ d


def _check_equivalence(args):
    worst = 0.0
    opts = ToleranceOptions(tol_grad=1e-13, tol_step=1e-14, max_iter=3)
    for k in range(2):
        wf = random_ci(6, 3, 10, seed=args.seed + 100 + k)
        ra = newton_optimize(dominant_start(wf), wf, opts)
        rt = optimize_thouless(wf, wf.dominant(), opts)
        for pa, pt in zip(ra.points, rt.points):
            worst = max(worst, subspace_distance(pa, pt))
    return worst, 1e-10


def _check_paths(args):
    rng = np.random.default_rng(args.seed)
    cisd = random_cisd((3, 2), (2, 1), seed=args.seed, amplitude=0.12)
    wf = expand_cisd(cisd)
    from .geometry import qr_orthonormalize

    mats = [qr_orthonormalize(rng.standard_normal((d, n)))
            for d, n in zip(cisd.block_dims, cisd.n_per_irrep)]
    bsp = blk.blocked_point(wf, mats + mats)
    sys_g = assemble_system(bsp.global_point(), wf)
    sys_b = blk.blocked_assemble(bsp, wf)
    folded = blk.fold_blocked_system(sys_b, cisd.n_irreps)
    sys_c = blk.cisd_assemble(bsp, cisd)
    worst = abs(folded.f_value - sys_c.f_value)
    labels, dims, offs = blk.layout_blocks(wf)
    col_offs = np.concatenate([[0], np.cumsum([b.n for b in bsp.blocks])]).astype(int)
    m_all, n_all = bsp.global_point().u.shape
    h4 = sys_g.hessian.reshape(m_all, n_all, m_all, n_all)
    for bi in range(len(dims)):
        r = slice(offs[bi], offs[bi] + dims[bi])
        c = slice(col_offs[bi], col_offs[bi + 1])
        worst = max(worst, float(np.max(np.abs(
            sys_g.jacobian[r, c] - sys_b.jacobian[bi]))))
        for bj in range(len(dims)):
            s = slice(offs[bj], offs[bj] + dims[bj])
            d = slice(col_offs[bj], col_offs[bj + 1])
            worst = max(worst, float(np.max(np.abs(
                h4[r, c, s, d] - sys_b.hessian[(bi, bj)]))))
    for g in range(cisd.n_irreps):
        worst = max(worst, float(np.max(np.abs(folded.jacobian[g] - sys_c.jacobian[g]))))
        for g2 in range(cisd.n_irreps):
            worst = max(worst, float(np.max(np.abs(
                folded.hessian[(g, g2)] - sys_c.hessian[(g, g2)]))))
    return worst, 1e-12


def _check_plucker(args):
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(200):
        point = StiefelPoint.random(4, 2, rng)
        coeff = {occ: float(np.linalg.det(point.u[np.asarray(occ) - 1, :]))
                 for occ in combinations(range(1, 5), 2)}
        worst = max(worst, abs(metrics.plucker_residual_2e(
            coeff[(1, 2)], coeff[(3, 4)], coeff[(1, 3)],
            coeff[(2, 4)], coeff[(1, 4)], coeff[(2, 3)])))
    entangled = abs(metrics.plucker_residual_2e(0, 0, 1 / math.sqrt(2),
                                                1 / math.sqrt(2), 0, 0))
    if entangled <= 0.1:
        worst = max(worst, 1.0)
    return worst, 1e-10


if __name__ == "__main__":
    sys.exit(main())
