"""Newton method in independent orbital-rotation parameters.

The determinant is written as ``exp(K^) |Phi_0>`` with the reference
occupying indices 1..n.  At the expansion point K = 0 the Jacobian and
Hessian of the overlap are plain coefficient lookups::

    J_i^a   = (-1)^(i+n) C_i^a
    H_ij^ab = -C_0                      (a = b and i = j)
              -(-1)^(i+j) C_ij^ab       (otherwise)

but they are valid only at K = 0, so after every Newton step the full CI
vector has to be re-expressed in the rotated orbital basis:
``C'_I = sum_J C_J det((U_full)_J^I)``.  That transformation touches all
C(M, n)^2 index pairs and is the reason this algorithm exists here only
as a cross-validation reference for the fixed-basis method.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import expm

from .geometry import StiefelPoint, qr_orthonormalize
from .kernels import EvalCounters, _det_batch
from .newton import IterationRecord, NewtonReport, ToleranceOptions
from .wavefunction import CIWaveFunction, reorder_sign

#: transform_ci refuses larger orbital spaces unless force=True
FULL_TRANSFORM_MAX_ORBITALS = 16


@dataclass
class OrbitalRotationSystem:
    """Jacobian and Hessian over the n(M-n) rotation parameters K_i^a."""

    jacobian: np.ndarray  # (M-n) x n, row a-n-1, column i-1
    hessian: np.ndarray   # ((M-n) n) x ((M-n) n), (a, i) flattened row-major
    c0: float

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.jacobian))


def _doubles_coefficient(wf: CIWaveFunction, i: int, j: int, a: int, b: int) -> float:
    """Antisymmetrized C_ij^ab read from ascending-order storage."""
    if i == j or a == b:
        return 0.0
    n = wf.n_electrons
    occ = tuple(sorted([x for x in range(1, n + 1) if x not in (i, j)] + [a, b]))
    sign = (1.0 if i < j else -1.0) * (1.0 if a < b else -1.0)
    return sign * wf.coefficient(occ)


def build_jac_hess(wf: CIWaveFunction, reference) -> OrbitalRotationSystem:
    """Assemble J and H at K = 0 for ``wf`` expressed over ``reference``.

    ``reference`` must be the canonical occupation (1, ..., n); use
    :func:`relabel_reference` first when it is not.  Coefficients missing
    from ``wf`` read as zero.
    """
    m, n = wf.n_spin_orbitals, wf.n_electrons
    reference = tuple(reference)
    if reference != tuple(range(1, n + 1)):
        raise ValueError("the expansion point requires the reference on indices 1..n")
    nv = m - n
    c0 = wf.coefficient(reference)
    jac = np.zeros((nv, n))
    for i in range(1, n + 1):
        for a in range(n + 1, m + 1):
            occ = tuple(sorted([x for x in range(1, n + 1) if x != i] + [a]))
            jac[a - n - 1, i - 1] = (-1.0) ** (i + n) * wf.coefficient(occ)
    hess = np.zeros((nv, n, nv, n))
    for i in range(1, n + 1):
        for a in range(n + 1, m + 1):
            for j in range(1, n + 1):
                for b in range(n + 1, m + 1):
                    if i == j and a == b:
                        hess[a - n - 1, i - 1, b - n - 1, j - 1] = -c0
                    else:
                        hess[a - n - 1, i - 1, b - n - 1, j - 1] = (
                            -((-1.0) ** (i + j)) * _doubles_coefficient(wf, i, j, a, b)
                        )
    dim = nv * n
    return OrbitalRotationSystem(jac, hess.reshape(dim, dim), c0)


def rotation_matrix(k: np.ndarray, n: int) -> np.ndarray:
    """Orthogonal M x M basis rotation exp([[0, -K^T], [K, 0]])."""
    nv = k.shape[0]
    gen = np.zeros((n + nv, n + nv))
    gen[n:, :n] = k
    gen[:n, n:] = -k.T
    return expm(gen)


def transform_ci(wf: CIWaveFunction, u_full: np.ndarray,
                 counters: EvalCounters | None = None,
                 force: bool = False,
                 naive: bool = False) -> CIWaveFunction:
    """Re-express ``wf`` in the rotated orbital basis ``phi' = phi @ U_full``.

    ``C'_I = sum_J C_J det((U_full)[J rows, I columns])``.  The cost is
    combinatorial, so orbital spaces beyond 16 spin orbitals are refused
    unless ``force`` is set.  With ``naive=True`` all C(M, n)^2 minors are
    evaluated (the instrumented Table-responding count); otherwise terms
    with zero coefficient are skipped.
    """
    m, n = wf.n_spin_orbitals, wf.n_electrons
    u_full = np.asarray(u_full, dtype=float)
    if u_full.shape != (m, m):
        raise ValueError(f"expected an {m} x {m} rotation, got {u_full.shape}")
    if m > FULL_TRANSFORM_MAX_ORBITALS and not force:
        raise ValueError(
            f"full CI transformation for M={m} > {FULL_TRANSFORM_MAX_ORBITALS} orbitals "
            "is combinatorial; pass force=True to run it anyway"
        )
    all_occ = np.array(list(combinations(range(m), n)), dtype=int)
    if naive:
        src = all_occ
        coeffs = np.array([wf.coefficient(tuple(o + 1)) for o in all_occ])
    else:
        src = np.array([np.asarray(occ, dtype=int) - 1 for occ in sorted(wf.terms)],
                       dtype=int).reshape(-1, n)
        coeffs = np.array([wf.terms[tuple(o + 1)] for o in src])
    # minors[j, i] = det(U_full[J_j, I_i])
    stack = u_full[src[:, None, :, None], all_occ[None, :, None, :]]
    minors = _det_batch(stack, counters)
    new_coeffs = coeffs @ minors
    terms = {tuple(occ + 1): float(c) for occ, c in zip(all_occ, new_coeffs) if c != 0.0}
    return CIWaveFunction(m, n, terms, wf.block_structure, wf.frozen)


def relabel_reference(wf: CIWaveFunction, reference) -> tuple[CIWaveFunction, np.ndarray]:
    """Permute orbitals so ``reference`` lands on indices 1..n.

    Returns the relabeled wave function and the M x M permutation matrix
    whose columns are the new orbitals in the old basis (so old = P @ new
    coordinates).  Coefficient signs follow the sorting parity of each
    relabeled occupation.
    """
    m, n = wf.n_spin_orbitals, wf.n_electrons
    reference = tuple(reference)
    others = [p for p in range(1, m + 1) if p not in reference]
    old_order = list(reference) + others  # new index k+1 holds old orbital old_order[k]
    new_of_old = {old: new + 1 for new, old in enumerate(old_order)}
    perm = np.zeros((m, m))
    for new, old in enumerate(old_order):
        perm[old - 1, new] = 1.0
    terms = {}
    for occ, c in wf.terms.items():
        relabeled = [new_of_old[p] for p in occ]
        new_occ, sign = reorder_sign(relabeled)
        terms[new_occ] = sign * c
    return CIWaveFunction(m, n, terms, None, wf.frozen), perm


def optimize_thouless(wf: CIWaveFunction, start,
                      opts: ToleranceOptions | None = None,
                      force: bool = False) -> NewtonReport:
    """Newton loop in rotation parameters with per-step CI transformation.

    ``start`` is the occupation index of the initial determinant.  The
    report's per-iteration points are expressed in the original orbital
    basis so they can be compared against the fixed-basis method.
    """
    opts = opts or ToleranceOptions()
    m, n = wf.n_spin_orbitals, wf.n_electrons
    if m > FULL_TRANSFORM_MAX_ORBITALS and not force:
        raise ValueError(
            f"M={m} exceeds the full-transformation guard; pass force=True to override"
        )
    report = NewtonReport(algorithm="thouless")
    current, basis = relabel_reference(wf, start)
    for it in range(opts.max_iter):
        t0 = time.perf_counter()
        system = build_jac_hess(current, tuple(range(1, n + 1)))
        report.points.append(StiefelPoint(qr_orthonormalize(basis[:, :n])))
        record = IterationRecord(index=it, f=system.c0, grad_norm=system.grad_norm,
                                 step_norm=None,
                                 n_det_evals=report.counters.n_det_evals,
                                 wall_time=0.0)
        if system.grad_norm < opts.tol_grad:
            record.wall_time = time.perf_counter() - t0
            report.iterations.append(record)
            report.converged = True
            report.reason = "gradient below tolerance"
            break
        x, _, rank, _ = np.linalg.lstsq(system.hessian, -system.jacobian.ravel(),
                                        rcond=opts.rcond)
        report.degenerate = report.degenerate or rank < x.size
        k = x.reshape(m - n, n)
        step_norm = float(np.linalg.norm(k))
        record.step_norm = step_norm
        u_full = rotation_matrix(k, n)
        current = transform_ci(current, u_full, report.counters,
                               force=True, naive=opts.naive)
        basis = basis @ u_full
        record.wall_time = time.perf_counter() - t0
        record.n_det_evals = report.counters.n_det_evals
        report.iterations.append(record)
        if step_norm < opts.tol_step:
            report.converged = True
            report.reason = "step below tolerance"
            report.points.append(StiefelPoint(qr_orthonormalize(basis[:, :n])))
            break
    else:
        report.reason = f"no convergence within {opts.max_iter} iterations"
    report.final_point = StiefelPoint(qr_orthonormalize(basis[:, :n]))
    report.f_final = current.coefficient(tuple(range(1, n + 1)))
    report.grad_norm_final = (report.iterations[-1].grad_norm
                              if report.iterations else float("inf"))
    return report
