"""Distance metrics, decomposability checks and the HF/minD decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .geometry import StiefelPoint
from .kernels import compute_F, overlap_f
from .wavefunction import CIWaveFunction

#: scale-aware decomposability threshold on the quadratic residual
PLUCKER_DECOMPOSABLE_RTOL = 1e-10


@dataclass(frozen=True)
class DistanceTriple:
    """The three overlap-based metrics between normalized states.

    d_fs is the Fubini-Study angle arccos|s|, d_acfc = sqrt(1 - |s|) and
    d_brlcm = 1 - s^2; all vanish together exactly at |overlap| = 1.
    """

    d_fs: float
    d_acfc: float
    d_brlcm: float


def distances(overlap: float) -> DistanceTriple:
    """Evaluate the metric triple for an overlap in [-1, 1] (clamped at 1e-12)."""
    s = abs(float(overlap))
    if s > 1.0 + 1e-12:
        raise ValueError(f"|overlap| = {s} exceeds 1 beyond tolerance")
    s = min(s, 1.0)
    return DistanceTriple(
        d_fs=math.acos(s),
        d_acfc=math.sqrt(1.0 - s),
        d_brlcm=1.0 - s * s,
    )


def correlation_energy_bound(e0: float, e1: float, e_hf: float) -> float:
    """Upper bound |E_corr| / E_gap = (E_HF - E0) / (E1 - E0) on d_brlcm(HF, ground)."""
    gap = e1 - e0
    if gap <= 0:
        raise ValueError("requires a positive gap E1 - E0")
    return (e_hf - e0) / gap


def plucker_residual_2e(c12: float, c34: float, c13: float,
                        c24: float, c14: float, c23: float) -> float:
    """Quadratic residual C12*C34 - C13*C24 + C14*C23 of the 2-in-4 case.

    Zero exactly on decomposable coefficient vectors; scales as lambda^2
    under a global rescaling by lambda, so verdicts should use
    :func:`is_decomposable_2e`.
    """
    return c12 * c34 - c13 * c24 + c14 * c23


def is_decomposable_2e(c12, c34, c13, c24, c14, c23,
                       rtol: float = PLUCKER_DECOMPOSABLE_RTOL) -> bool:
    scale = c12 * c12 + c34 * c34 + c13 * c13 + c24 * c24 + c14 * c14 + c23 * c23
    return abs(plucker_residual_2e(c12, c34, c13, c24, c14, c23)) < rtol * max(scale, 1e-300)


def plucker_residual_ms0(c24: float, c14: float, c23: float) -> float:
    """Residual of the M_S = 0 normalized form with the C13 >= 0 convention.

    ``C24 * sqrt(1 - (C24^2 + C14^2 + C23^2)) - C14 * C23``; callers must
    pre-normalize signs so that the implied C13 is the nonnegative root
    (the hemisphere convention is not applied silently here).
    """
    rem = 1.0 - (c24 * c24 + c14 * c14 + c23 * c23)
    if rem < -1e-12:
        raise ValueError("coefficients exceed unit norm: C24^2 + C14^2 + C23^2 > 1")
    return c24 * math.sqrt(max(rem, 0.0)) - c14 * c23


def wavefunction_plucker_residual_2e(wf: CIWaveFunction) -> float:
    """Quadratic 2-in-4 residual read off an M = 4, n = 2 wave function."""
    if wf.n_spin_orbitals != 4 or wf.n_electrons != 2:
        raise ValueError("defined for M = 4, n = 2 only")
    c = {occ: wf.coefficient(occ) for occ in combinations(range(1, 5), 2)}
    return plucker_residual_2e(c[(1, 2)], c[(3, 4)], c[(1, 3)],
                               c[(2, 4)], c[(1, 4)], c[(2, 3)])


def slater_overlap(a: StiefelPoint, b: StiefelPoint) -> float:
    """Overlap det(A^T B) between two orthonormal Slater determinants."""
    if a.u.shape != b.u.shape:
        raise ValueError("determinants must share the same M and n")
    return float(np.linalg.det(a.u.T @ b.u))


@dataclass(frozen=True)
class HFDecomposition:
    """Split of <HF|Psi> through the projector onto the optimal determinant.

    ``hf_psi = hf_mind * mind_psi + remainder`` holds exactly; the
    approximation drops the remainder, making ``ratio = hf_psi/mind_psi``
    an estimate of ``hf_mind`` whose error is reported, not asserted.
    """

    hf_psi: float
    hf_mind: float
    mind_psi: float
    product: float
    remainder: float
    ratio: float
    ratio_error: float


def hf_decomposition(hf: StiefelPoint, mind: StiefelPoint,
                     wf: CIWaveFunction) -> HFDecomposition:
    """Report both sides of the <HF|Psi> decomposition through |minD>."""
    hf_psi = overlap_f(hf.u, wf)
    mind_psi = overlap_f(mind.u, wf)
    hf_mind = slater_overlap(hf, mind)
    product = hf_mind * mind_psi
    remainder = hf_psi - product
    ratio = hf_psi / mind_psi if mind_psi != 0.0 else float("inf")
    return HFDecomposition(
        hf_psi=hf_psi, hf_mind=hf_mind, mind_psi=mind_psi,
        product=product, remainder=remainder, ratio=ratio,
        ratio_error=abs(ratio - hf_mind),
    )


def is_decomposable(wf: CIWaveFunction, tol: float = 1e-8):
    """Operational decomposability test for general n.

    Quadratic relations are only coded for the 2-in-4 case, so beyond it
    the verdict comes from optimization: the state is a single Slater
    determinant iff the maximum overlap reaches 1.  Runs the Newton
    optimizer from the dominant determinant and tests ``|f| = 1`` within
    ``tol``; returns ``(verdict, report)``.
    """
    from .models import dominant_start
    from .newton import optimize

    report = optimize(dominant_start(wf), wf.normalized())
    return abs(abs(report.f_final) - 1.0) < tol, report


def projected_remainder(hf: StiefelPoint, mind: StiefelPoint,
                        wf: CIWaveFunction) -> float:
    """<HF| Q_minD |Psi> evaluated by expanding |minD> over all determinants.

    Independent of the subtraction route in :func:`hf_decomposition`:
    Q|Psi> is formed explicitly in the determinant basis, at C(M, n)
    cost, and contracted against the HF determinant.
    """
    m, n = hf.m, hf.n
    mind_psi = overlap_f(mind.u, wf)
    nrm = wf.norm()
    total = 0.0
    for occ in combinations(range(1, m + 1), n):
        c_i = wf.coefficient(occ) / nrm
        q_component = c_i - compute_F(mind.u, occ) * mind_psi
        total += compute_F(hf.u, occ) * q_component
    return total
