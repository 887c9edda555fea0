"""Newton method on the Grassmannian over the raw coefficient matrix U.

Each iteration assembles the projected linear system

    sum_{r,s} Hcal_{qs}^{pr} eta_s^r = -Jcal_q^p
    Hcal = Pi_perp . sum_I C_I H~_I        Jcal = Pi_perp . sum_I C_I G_I

extends it with the n^2 horizontality rows U^T eta = 0, solves the stack
by rank-tolerant least squares and moves along the geodesic in the
direction eta.  The CI coefficients are read from the same basis at every
iteration; only U changes.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    StiefelPoint,
    complete_basis,
    geodesic_update,
    orthonormal_complement_projector,
)
from .kernels import (
    ADJUGATE_SINGULAR_RTOL,
    EvalCounters,
    adjugate,
    compute_F,
    compute_G,
    compute_htilde_full,
    minor,
)
from .wavefunction import CIWaveFunction


@dataclass
class ToleranceOptions:
    """Knobs of the Newton loop (defaults follow the CLI flags)."""

    tol_grad: float = 1e-8
    tol_step: float = 1e-10
    max_iter: int = 20
    rcond: float = 1e-12
    naive: bool = False
    safeguard: bool = True
    threads: int = 1
    deterministic: bool = False
    max_sweeps: int = 500


@dataclass
class NewtonSystem:
    """Assembled Newton system at one point of the Stiefel manifold."""

    u: np.ndarray
    f_value: float
    jacobian: np.ndarray      # M x n, already projected
    hessian: np.ndarray       # (M n) x (M n)
    constraints: np.ndarray   # n^2 x (M n), rows U^T eta = 0

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.jacobian))


@dataclass
class SolveInfo:
    rank: int
    full_rank: bool
    horizontality: float

    @property
    def degenerate(self) -> bool:
        return not self.full_rank


@dataclass
class IterationRecord:
    index: int
    f: float
    grad_norm: float
    step_norm: float | None
    n_det_evals: int
    wall_time: float


@dataclass
class NewtonReport:
    """Per-iteration trace of one optimization run."""

    algorithm: str
    converged: bool = False
    reason: str = ""
    iterations: list[IterationRecord] = field(default_factory=list)
    points: list[StiefelPoint] = field(default_factory=list)
    final_point: StiefelPoint | None = None
    f_final: float = 0.0
    grad_norm_final: float = float("inf")
    degenerate: bool = False
    character: str | None = None
    hessian_eigenvalues: np.ndarray | None = None
    counters: EvalCounters = field(default_factory=EvalCounters)

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)


def _term_contribution(u, occ, coeff, naive, counters):
    """(f, G, H~) contribution of one CI term, each scaled by its coefficient."""
    m, n = u.shape
    if naive:
        f_i = compute_F(u, occ, counters)
        g_i = compute_G(u, occ, counters, naive=True)
        ht_i = compute_htilde_full(u, occ, counters, naive=True, f_value=f_i)
        return coeff * f_i, coeff * g_i, coeff * ht_i
    a = minor(u, occ)
    det, adj = adjugate(a, counters)
    rows = np.asarray(occ, dtype=int) - 1
    g_i = np.zeros((m, n))
    g_i[rows, :] = adj.T
    scale = max(1.0, float(np.linalg.norm(a)))
    ht_i = np.zeros((m, n, m, n))
    if abs(det) > ADJUGATE_SINGULAR_RTOL * scale**n:
        outer = np.einsum("qk,sl->qksl", adj, adj)
        d = (outer - outer.transpose(0, 3, 2, 1)) / det
        ht_i[np.ix_(rows, range(n), rows, range(n))] = d.transpose(1, 0, 3, 2)
        for q in range(n):
            ht_i[:, q, :, q] = -det * np.eye(m)
    else:
        ht_i = compute_htilde_full(u, occ, counters, naive=False, f_value=det)
    return coeff * det, coeff * g_i, coeff * ht_i


def assemble_system(point: StiefelPoint, wf: CIWaveFunction,
                    counters: EvalCounters | None = None,
                    naive: bool = False,
                    threads: int = 1,
                    deterministic: bool = True) -> NewtonSystem:
    """Build Jacobian, Hessian and constraint rows at ``point``.

    With ``naive=True`` every tensor entry is an explicit determinant
    evaluation, so ``counters`` advances by exactly
    ``n_terms * (1 + nM + (nM)^2)`` per call.  Contributions of the CI
    terms are independent; with ``threads > 1`` they are evaluated in a
    thread pool and merged in fixed chunk order when ``deterministic``,
    in completion order otherwise.
    """
    u = point.u
    m, n = u.shape
    items = list(wf.terms.items())
    f_raw = 0.0
    g_sum = np.zeros((m, n))
    ht_sum = np.zeros((m, n, m, n))

    if threads > 1 and len(items) > 1:
        chunks = [items[k::threads] for k in range(threads)]
        chunks = [c for c in chunks if c]
        sub_counters = [EvalCounters() for _ in chunks]

        def run(chunk, ctr):
            f_c = 0.0
            g_c = np.zeros((m, n))
            h_c = np.zeros((m, n, m, n))
            for occ, coeff in chunk:
                df, dg, dh = _term_contribution(u, occ, coeff, naive, ctr)
                f_c += df
                g_c += dg
                h_c += dh
            return f_c, g_c, h_c

        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run, c, ctr) for c, ctr in zip(chunks, sub_counters)]
            ordered = futures if deterministic else list(futures)
            if not deterministic:
                from concurrent.futures import as_completed

                ordered = list(as_completed(futures))
            for fut in ordered:
                df, dg, dh = fut.result()
                f_raw += df
                g_sum += dg
                ht_sum += dh
        if counters is not None:
            counters.add(sum(c.n_det_evals for c in sub_counters))
    else:
        for occ, coeff in items:
            df, dg, dh = _term_contribution(u, occ, coeff, naive, counters)
            f_raw += df
            g_sum += dg
            ht_sum += dh

    pi = orthonormal_complement_projector(point)
    jac = pi @ g_sum
    hess = np.einsum("pt,tqrs->pqrs", pi, ht_sum).reshape(m * n, m * n)
    cons = np.zeros((n, n, m, n))
    for j in range(n):
        cons[:, j, :, j] = u.T
    return NewtonSystem(u, f_raw, jac, hess, cons.reshape(n * n, m * n))


def solve_horizontal(system: NewtonSystem, rcond: float = 1e-12):
    """Minimum-norm least-squares step of the stacked Newton system.

    Returns ``(eta, SolveInfo)``.  Rank deficiency (singular values below
    ``rcond * sigma_max``) is reported through ``SolveInfo.degenerate``,
    not raised; the minimum-norm solution is returned regardless.
    """
    m, n = system.u.shape
    a = np.vstack([system.hessian, system.constraints])
    b = np.concatenate([-system.jacobian.ravel(), np.zeros(n * n)])
    x, _, rank, _ = np.linalg.lstsq(a, b, rcond=rcond)
    eta = x.reshape(m, n)
    horiz = float(np.max(np.abs(system.u.T @ eta))) if eta.size else 0.0
    # The constraint rows keep U^T eta ~ 0; clean up the leftover once so
    # the geodesic step sees an exactly horizontal direction.
    eta = eta - system.u @ (system.u.T @ eta)
    return eta, SolveInfo(rank=int(rank), full_rank=int(rank) == m * n, horizontality=horiz)


def classify_critical_point(system: NewtonSystem, tol: float | None = None):
    """Character of the point from the horizontal-Hessian spectrum.

    Returns ``(label, eigenvalues)`` where the label describes the point
    as a critical point of |f|: "maximum", "minimum", "saddle", each
    possibly suffixed by "(degenerate)" when an eigenvalue sits at zero.
    """
    u = system.u
    m, n = u.shape
    basis = complete_basis(StiefelPoint(u))[:, n:]
    hess4 = system.hessian.reshape(m, n, m, n)
    restricted = np.einsum("pa,pqrs,rb->aqbs", basis, hess4, basis)
    dim = (m - n) * n
    mat = restricted.reshape(dim, dim)
    mat = 0.5 * (mat + mat.T)
    eigs = np.linalg.eigvalsh(mat) if dim else np.zeros(0)
    sign = 1.0 if system.f_value >= 0 else -1.0
    scaled = sign * eigs
    if tol is None:
        tol = 1e-8 * max(1.0, float(np.max(np.abs(eigs))) if eigs.size else 1.0)
    degenerate = bool(np.any(np.abs(eigs) <= tol))
    if np.all(scaled < -tol):
        label = "maximum"
    elif np.all(scaled > tol):
        label = "minimum"
    elif degenerate and not (np.any(scaled > tol) and np.any(scaled < -tol)):
        label = "maximum" if np.all(scaled <= tol) else "minimum"
    else:
        label = "saddle"
    if degenerate:
        label += " (degenerate)"
    return label, eigs


def optimize(start: StiefelPoint, wf: CIWaveFunction,
             opts: ToleranceOptions | None = None) -> NewtonReport:
    """Run the Grassmann Newton loop from ``start``.

    Stops when the projected gradient norm drops below ``tol_grad``, the
    step norm below ``tol_step``, or after ``max_iter`` iterations
    (reported as non-convergence, not an exception).  A step-halving
    safeguard undoes steps that lose more than 0.5 in |f|; it never fires
    on plain Newton-friendly inputs, keeping the determinant accounting
    exact.
    """
    opts = opts or ToleranceOptions()
    report = NewtonReport(algorithm="absil")
    point = start
    prev_point = None
    prev_eta = None
    prev_f = None
    last_system = None

    for it in range(opts.max_iter):
        t0 = time.perf_counter()
        system = assemble_system(point, wf, report.counters, naive=opts.naive,
                                 threads=opts.threads, deterministic=opts.deterministic)
        if (opts.safeguard and prev_f is not None
                and abs(system.f_value) < abs(prev_f) - 0.5):
            halvings = 0
            while halvings < 5 and abs(system.f_value) < abs(prev_f) - 0.5:
                prev_eta = 0.5 * prev_eta
                point = geodesic_update(prev_point, prev_eta)
                system = assemble_system(point, wf, report.counters, naive=opts.naive,
                                         threads=opts.threads,
                                         deterministic=opts.deterministic)
                halvings += 1
        last_system = system
        report.points.append(point)
        grad_norm = system.grad_norm
        record = IterationRecord(index=it, f=system.f_value, grad_norm=grad_norm,
                                 step_norm=None,
                                 n_det_evals=report.counters.n_det_evals,
                                 wall_time=0.0)
        if grad_norm < opts.tol_grad:
            record.wall_time = time.perf_counter() - t0
            report.iterations.append(record)
            report.converged = True
            report.reason = "gradient below tolerance"
            break
        eta, info = solve_horizontal(system, rcond=opts.rcond)
        report.degenerate = report.degenerate or info.degenerate
        step_norm = float(np.linalg.norm(eta))
        record.step_norm = step_norm
        prev_point, prev_eta, prev_f = point, eta, system.f_value
        point = geodesic_update(point, eta)
        record.wall_time = time.perf_counter() - t0
        record.n_det_evals = report.counters.n_det_evals
        report.iterations.append(record)
        if step_norm < opts.tol_step:
            report.points.append(point)
            if info.degenerate and grad_norm >= opts.tol_grad:
                # Minimum-norm solution of a rank-deficient stack collapsed
                # to ~0 while the gradient is still large: a genuine stall,
                # not convergence.
                report.converged = False
                report.reason = "stalled: singular Newton system"
            else:
                report.converged = True
                report.reason = "step below tolerance"
            break
    else:
        report.reason = f"no convergence within {opts.max_iter} iterations"

    report.final_point = point
    report.f_final = (last_system.f_value if report.reason == "gradient below tolerance"
                      else _overlap_value(point, wf, report.counters))
    report.grad_norm_final = last_system.grad_norm if last_system is not None else float("inf")
    if last_system is not None:
        label, eigs = classify_critical_point(last_system)
        report.character = label
        report.hessian_eigenvalues = eigs
        if "degenerate" in label:
            report.degenerate = True
    return report


def _overlap_value(point: StiefelPoint, wf: CIWaveFunction,
                   counters: EvalCounters | None = None) -> float:
    # Raw sum, same normalization as the assembly f (coefficients as stored).
    total = 0.0
    for occ, c in wf.terms.items():
        total += c * compute_F(point.u, occ, counters)
    return total
