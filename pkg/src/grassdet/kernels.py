"""Determinant kernels of the overlap functional.

For an orthonormal representative U and an occupation multi-index I the
overlap with the corresponding basis determinant is ``F_I = det(U|_I)``,
where ``U|_I`` keeps the rows listed in I.  First and second derivatives
of F_I with respect to the entries of U are single- and double-column
replacement determinants::

    (G_I)_q^p      = det((U <-q e_p)|_I)
    (H_I)_{qs}^pr  = det((U <-q e_p <-s e_r)|_I)

Both vanish unless the replaced rows p, r belong to I, so the fast path
works entirely on the adjugate of the n x n minor: Cramer's rule gives G,
and Jacobi's identity on second-order minors gives H.  A ``naive`` mode
instead evaluates one determinant per tensor entry (1 + nM + (nM)^2 per
multi-index), which is what the instrumented cost accounting reports.

All orbital indices (p, r) and column indices (q, s) in the public API are
1-based, matching the occupation-index convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import StiefelPoint
from .wavefunction import CIWaveFunction

#: |det| below 1e-10 * max(1, |A|_F)^n routes the adjugate to explicit
#: column-replacement determinants instead of det(A) * inv(A).
ADJUGATE_SINGULAR_RTOL = 1e-10


@dataclass
class EvalCounters:
    """Running count of n x n determinant evaluations."""

    n_det_evals: int = 0

    def add(self, k: int = 1) -> None:
        if k < 0:
            raise ValueError("counter increments must be nonnegative")
        self.n_det_evals += k


def _as_array(u) -> np.ndarray:
    if isinstance(u, StiefelPoint):
        return u.u
    return np.asarray(u, dtype=float)


def _det(a: np.ndarray, counters: EvalCounters | None) -> float:
    if counters is not None:
        counters.add(1)
    if a.shape[0] == 0:
        return 1.0
    return float(np.linalg.det(a))


def _det_batch(stack: np.ndarray, counters: EvalCounters | None) -> np.ndarray:
    if counters is not None:
        counters.add(int(np.prod(stack.shape[:-2], dtype=int)))
    return np.linalg.det(stack)


def minor(u, occ) -> np.ndarray:
    """Rows of U selected by the (1-based, ascending) multi-index ``occ``."""
    u = _as_array(u)
    rows = np.asarray(occ, dtype=int) - 1
    return u[rows, :]


def compute_F(u, occ, counters: EvalCounters | None = None) -> float:
    """F_I = det(U|_I)."""
    return _det(minor(u, occ), counters)


def adjugate(a: np.ndarray, counters: EvalCounters | None = None) -> tuple[float, np.ndarray]:
    """Determinant and classical adjugate of a square matrix.

    Returns ``(det, adj)`` with ``adj @ a = det * I``.  Uses the LU-based
    inverse when the determinant is safely nonzero, otherwise falls back
    to explicit cofactors (each one a determinant evaluation).
    """
    n = a.shape[0]
    if n == 0:
        return 1.0, np.zeros((0, 0))
    if n == 1:
        if counters is not None:
            counters.add(1)
        return float(a[0, 0]), np.ones((1, 1))
    det = _det(a, counters)
    scale = max(1.0, float(np.linalg.norm(a)))
    if abs(det) > ADJUGATE_SINGULAR_RTOL * scale**n:
        return det, det * np.linalg.inv(a)
    adj = np.empty((n, n))
    rows = np.arange(n)
    for k in range(n):
        sub_rows = rows[rows != k]
        for q in range(n):
            sub = a[np.ix_(sub_rows, rows[rows != q])]
            adj[q, k] = (-1) ** (k + q) * _det(sub, counters)
    return det, adj


def _indicator_matrix(m: int, occ) -> np.ndarray:
    """E[p - 1] = restriction of the unit vector e_p to the rows in occ."""
    occ_arr = np.asarray(occ, dtype=int)
    return (np.arange(1, m + 1)[:, None] == occ_arr[None, :]).astype(float)


def compute_G(u, occ, counters: EvalCounters | None = None,
              naive: bool = False) -> np.ndarray:
    """All single-replacement determinants (G_I)_q^p as an M x n array.

    Rows index the replacement orbital p, columns the replaced column q;
    entries with p outside I are structurally zero.
    """
    u = _as_array(u)
    m, n = u.shape
    a = minor(u, occ)
    if naive:
        e = _indicator_matrix(m, occ)
        stack = np.broadcast_to(a, (m, n, n, n)).copy()
        for q in range(n):
            stack[:, q, :, q] = e
        return _det_batch(stack, counters)
    _, adj = adjugate(a, counters)
    g = np.zeros((m, n))
    g[np.asarray(occ, dtype=int) - 1, :] = adj.T
    return g


def compute_H(u, occ, p: int, q: int, r: int, s: int,
              counters: EvalCounters | None = None) -> float:
    """Raw double-replacement determinant det((U <-q e_p <-s e_r)|_I).

    The substitutions are applied in order, so ``s == q`` leaves the
    matrix with column q equal to e_r; the projected-Hessian tensor
    replaces those diagonal entries by ``-F_I * delta_pr`` (see
    :func:`compute_htilde_full`).
    """
    u = _as_array(u)
    m = u.shape[0]
    a = minor(u, occ).copy()
    e = _indicator_matrix(m, occ)
    a[:, q - 1] = e[p - 1]
    a[:, s - 1] = e[r - 1]
    return _det(a, counters)


def compute_htilde_full(u, occ, counters: EvalCounters | None = None,
                        naive: bool = False,
                        f_value: float | None = None) -> np.ndarray:
    """The projected-Hessian tensor H~_I of shape (M, n, M, n).

    Off-diagonal (s != q) entries are the raw H_I determinants; the
    s == q entries carry the projector contribution ``-F_I * delta_pr``.
    The naive mode evaluates one determinant per (p, q, r, s) quadruple,
    (nM)^2 in total; the fast mode forms the nonzero entries from the
    adjugate of the minor via Jacobi's identity on second-order minors.
    """
    u = _as_array(u)
    m, n = u.shape
    a = minor(u, occ)
    rows = np.asarray(occ, dtype=int) - 1
    if naive:
        e = _indicator_matrix(m, occ)
        stack = np.broadcast_to(a, (m, n, m, n, n, n)).copy()
        for q in range(n):
            stack[:, q, :, :, :, q] = e[:, None, None, :]
        for s in range(n):
            stack[:, :, :, s, :, s] = e[None, None, :, :]
        t = _det_batch(stack, counters)
        f_i = compute_F(u, occ, counters) if f_value is None else f_value
    else:
        det, adj = adjugate(a, counters)
        t = np.zeros((m, n, m, n))
        scale = max(1.0, float(np.linalg.norm(a)))
        if abs(det) > ADJUGATE_SINGULAR_RTOL * scale**n:
            # Jacobi: det(A <-q e_k <-s e_l) = (adj[q,k] adj[s,l] - adj[q,l] adj[s,k]) / det
            outer = np.einsum("qk,sl->qksl", adj, adj)
            d = (outer - outer.transpose(0, 3, 2, 1)) / det
        else:
            d = np.empty((n, n, n, n))
            for q in range(n):
                for s in range(n):
                    for k in range(n):
                        for l in range(n):
                            b = a.copy()
                            b[:, q] = 0.0
                            b[k, q] = 1.0
                            b[:, s] = 0.0
                            b[l, s] = 1.0
                            d[q, k, s, l] = _det(b, counters)
        t[np.ix_(rows, range(n), rows, range(n))] = d.transpose(1, 0, 3, 2)
        f_i = det if f_value is None else f_value
    for q in range(n):
        t[:, q, :, q] = -f_i * np.eye(m)
    return t


@dataclass
class DeterminantKernels:
    """F_I and G_I for one multi-index, with the H~ tensor built lazily."""

    u: np.ndarray
    occ: tuple
    F: float = field(init=False)
    G: np.ndarray = field(init=False)
    counters: EvalCounters | None = None
    naive: bool = False

    def __post_init__(self):
        self.u = _as_array(self.u)
        if self.naive:
            self.F = compute_F(self.u, self.occ, self.counters)
            self.G = compute_G(self.u, self.occ, self.counters, naive=True)
        else:
            a = minor(self.u, self.occ)
            det, adj = adjugate(a, self.counters)
            self.F = det
            g = np.zeros(self.u.shape)
            g[np.asarray(self.occ, dtype=int) - 1, :] = adj.T
            self.G = g
        self._htilde: np.ndarray | None = None

    def htilde(self) -> np.ndarray:
        if self._htilde is None:
            self._htilde = compute_htilde_full(
                self.u, self.occ, self.counters, naive=self.naive, f_value=self.F
            )
        return self._htilde


def overlap_f(u, wf: CIWaveFunction, counters: EvalCounters | None = None) -> float:
    """Overlap sum_I C_I det(U|_I) divided by the norm of ``wf``.

    U is assumed column-orthonormal, so the determinant side needs no
    normalization.
    """
    u = _as_array(u)
    total = math.fsum(c * compute_F(u, occ, counters) for occ, c in wf.terms.items())
    return total / wf.norm()


def overlap_gradient(u, wf: CIWaveFunction,
                     counters: EvalCounters | None = None,
                     naive: bool = False) -> np.ndarray:
    """Unprojected gradient sum_I C_I G_I of the raw overlap sum.

    Coefficients are used as stored (no normalization), matching the
    linear-system assembly.
    """
    u = _as_array(u)
    g = np.zeros(u.shape)
    for occ, c in wf.terms.items():
        g += c * compute_G(u, occ, counters, naive=naive)
    return g


def relation_F_from_G(u, g0: np.ndarray, i: int, a: int) -> float:
    """F of the single excitation i->a from the reference {1..n}.

    ``g0`` is G of the reference multi-index.  Implements
    ``F_{I_i^a} = (-1)^(i+n) sum_q U_q^a (G_I0)_q^i``.
    """
    u = _as_array(u)
    n = u.shape[1]
    return (-1.0) ** (i + n) * float(np.dot(u[a - 1, :], g0[i - 1, :]))


def relation_F2_from_G(u, g_jb: np.ndarray, i: int, j: int, a: int, b: int) -> float:
    """F of the double excitation (i->a, j->b) from G of the single j->b.

    Implements ``F_{I_ij^ab} = (-1)^(i+n+(b>a)) sum_q U_q^a (G_{I_j^b})_q^i``,
    whose phase assumes the hole ordering i < j (a and b in either order).
    """
    u = _as_array(u)
    n = u.shape[1]
    if not 1 <= i < j <= n:
        raise ValueError(f"hole indices must satisfy 1 <= i < j <= n, got i={i}, j={j}")
    if a == b:
        raise ValueError("particle indices must differ")
    sign = (-1.0) ** (i + n + (1 if b > a else 0))
    return sign * float(np.dot(u[a - 1, :], g_jb[i - 1, :]))


def relation_G_from_H(u, g0: np.ndarray, htilde0: np.ndarray, i: int, a: int) -> np.ndarray:
    """G of the single excitation i->a assembled from reference kernels.

    ``htilde0`` is the reference H~ tensor; only its s != q entries (raw
    double replacements) enter.  The p == a rows come directly from the
    reference G.
    """
    u = _as_array(u)
    m, n = u.shape
    urow = u[a - 1, :]
    # sum over q' != q of U_{q'}^a * (H_I0)_{q q'}^{p i}
    full = np.einsum("pqs,s->pq", htilde0[:, :, i - 1, :], urow)
    diag = htilde0[:, np.arange(n), i - 1, np.arange(n)] * urow[None, :]
    g = (-1.0) ** (i + n) * (full - diag)
    g[a - 1, :] = (-1.0) ** (i + n) * g0[i - 1, :]
    return g
