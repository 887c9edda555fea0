"""Cyclic one-orbital-at-a-time overlap maximization.

The overlap sum is multilinear in the columns of U, so with all columns
but one frozen it is linear in the free column:  f = g_q . x  with
``(g_q)^p = sum_I C_I (G_I)_q^p``.  The best unit column orthogonal to
the others is therefore the normalized projection of g_q onto their
orthogonal complement, which makes every update exactly maximizing and
|f| nondecreasing.  Robust but slow near the optimum; pairs naturally
with the Newton method as a hybrid.
"""

from __future__ import annotations

import time

import numpy as np

from .geometry import StiefelPoint
from .kernels import EvalCounters, compute_G, overlap_f
from .newton import (
    IterationRecord,
    NewtonReport,
    ToleranceOptions,
    assemble_system,
    classify_critical_point,
    optimize as newton_optimize,
)
from .wavefunction import CIWaveFunction

#: projected gradients below this leave the column untouched
STATIONARY_COLUMN_TOL = 1e-14


def _column_gradient(u: np.ndarray, wf: CIWaveFunction, q: int,
                     counters: EvalCounters | None = None) -> np.ndarray:
    g = np.zeros(u.shape[0])
    for occ, c in wf.terms.items():
        g += c * compute_G(u, occ, counters)[:, q - 1]
    return g


def update_orbital(point: StiefelPoint, wf: CIWaveFunction, q: int,
                   counters: EvalCounters | None = None) -> StiefelPoint:
    """Replace column ``q`` (1-based) by its exact single-column maximizer.

    The new column is oriented so the updated overlap sum is nonnegative.
    Columns whose projected gradient is below ``STATIONARY_COLUMN_TOL``
    are left unchanged.
    """
    new_point, _ = _update_orbital_value(point, wf, q, counters)
    return new_point


def _update_orbital_value(point: StiefelPoint, wf: CIWaveFunction, q: int,
                          counters: EvalCounters | None = None):
    u = point.u
    g = _column_gradient(u, wf, q, counters)
    others = np.delete(u, q - 1, axis=1)
    v = g - others @ (others.T @ g)
    norm = float(np.linalg.norm(v))
    if norm < STATIONARY_COLUMN_TOL:
        return point, None
    new_u = u.copy()
    new_u[:, q - 1] = v / norm
    return StiefelPoint(new_u), norm


def optimize_alternating(start: StiefelPoint, wf: CIWaveFunction,
                         opts: ToleranceOptions | None = None) -> NewtonReport:
    """Cyclic sweeps over all columns until the per-sweep |f| gain stalls.

    Convergence: per-sweep gain below 1e-12 (or ``max_sweeps`` reached,
    reported as non-convergence).  The final record carries the Newton
    gradient norm at the fixed point.
    """
    opts = opts or ToleranceOptions()
    gain_tol = 1e-12
    report = NewtonReport(algorithm="alternating")
    point = start
    f_prev = abs(overlap_f(point.u, wf, report.counters)) * wf.norm()
    for sweep in range(opts.max_sweeps):
        t0 = time.perf_counter()
        report.points.append(point)
        f_sweep = f_prev
        for q in range(1, point.n + 1):
            point, value = _update_orbital_value(point, wf, q, report.counters)
            if value is not None:
                f_sweep = value
        gain = abs(f_sweep) - abs(f_prev)
        f_prev = f_sweep
        report.iterations.append(IterationRecord(
            index=sweep, f=f_sweep, grad_norm=float("nan"), step_norm=gain,
            n_det_evals=report.counters.n_det_evals,
            wall_time=time.perf_counter() - t0))
        if gain < gain_tol:
            report.converged = True
            report.reason = "sweep gain below tolerance"
            break
    else:
        report.reason = f"no convergence within {opts.max_sweeps} sweeps"
    report.final_point = point
    system = assemble_system(point, wf, report.counters)
    report.f_final = system.f_value
    report.grad_norm_final = system.grad_norm
    label, eigs = classify_critical_point(system)
    report.character = label
    report.hessian_eigenvalues = eigs
    if report.iterations:
        report.iterations[-1].grad_norm = system.grad_norm
    return report


def optimize_hybrid(start: StiefelPoint, wf: CIWaveFunction,
                    opts: ToleranceOptions | None = None,
                    switch_gain: float = 1e-4) -> NewtonReport:
    """Alternating sweeps until the gain drops below ``switch_gain``, then Newton.

    The robust phase carries the iterate into the Newton basin; the
    Newton phase supplies the fast final convergence and the critical-
    point diagnostics.
    """
    opts = opts or ToleranceOptions()
    report = NewtonReport(algorithm="hybrid")
    point = start
    f_prev = abs(overlap_f(point.u, wf, report.counters)) * wf.norm()
    sweeps = 0
    for sweep in range(opts.max_sweeps):
        t0 = time.perf_counter()
        report.points.append(point)
        f_sweep = f_prev
        for q in range(1, point.n + 1):
            point, value = _update_orbital_value(point, wf, q, report.counters)
            if value is not None:
                f_sweep = value
        gain = abs(f_sweep) - abs(f_prev)
        f_prev = f_sweep
        sweeps += 1
        report.iterations.append(IterationRecord(
            index=sweep, f=f_sweep, grad_norm=float("nan"), step_norm=gain,
            n_det_evals=report.counters.n_det_evals,
            wall_time=time.perf_counter() - t0))
        if gain < switch_gain:
            break
    newton_report = newton_optimize(point, wf, opts)
    report.counters.add(newton_report.counters.n_det_evals)
    for rec in newton_report.iterations:
        report.iterations.append(IterationRecord(
            index=sweeps + rec.index, f=rec.f, grad_norm=rec.grad_norm,
            step_norm=rec.step_norm, n_det_evals=report.counters.n_det_evals,
            wall_time=rec.wall_time))
    report.points.extend(newton_report.points)
    report.converged = newton_report.converged
    report.reason = f"alternating ({sweeps} sweeps) then newton: {newton_report.reason}"
    report.final_point = newton_report.final_point
    report.f_final = newton_report.f_final
    report.grad_norm_final = newton_report.grad_norm_final
    report.degenerate = newton_report.degenerate
    report.character = newton_report.character
    report.hessian_eigenvalues = newton_report.hessian_eigenvalues
    return report
