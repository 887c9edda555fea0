"""Stiefel-matrix representation of Grassmannian points and the geodesic step.

A point of the Grassmannian Gr(n, M) is held as an M x n matrix with
orthonormal columns (a Stiefel representative).  Moving along a horizontal
direction eta (U^T eta = 0) follows the closed-form geodesic
``span(U V cos(S) + W sin(S))`` built from the thin SVD ``eta = W S V^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

ORTHONORMALITY_TOL = 1e-12


@dataclass(frozen=True)
class StiefelPoint:
    """Column-orthonormal M x n matrix representing a Slater determinant."""

    u: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(np.asarray(self.u, dtype=float))
        object.__setattr__(self, "u", u)
        if u.ndim != 2 or u.shape[0] < u.shape[1]:
            raise ValueError(f"expected a tall M x n matrix, got shape {u.shape}")
        err = orthonormality_error(u)
        if err > 1e-8:
            raise ValueError(
                f"matrix is not column-orthonormal (|U^T U - I| = {err:.2e}); "
                "use StiefelPoint.from_matrix(..., orthonormalize=True)"
            )

    @property
    def m(self) -> int:
        return self.u.shape[0]

    @property
    def n(self) -> int:
        return self.u.shape[1]

    @classmethod
    def from_matrix(cls, u, orthonormalize: bool = False) -> "StiefelPoint":
        u = np.asarray(u, dtype=float)
        if orthonormalize:
            u = qr_orthonormalize(u)
        return cls(u)

    @classmethod
    def from_occupation(cls, n_spin_orbitals: int, occ) -> "StiefelPoint":
        """Unit-column representative of the determinant occupying ``occ``."""
        u = np.zeros((n_spin_orbitals, len(occ)))
        for col, p in enumerate(occ):
            u[p - 1, col] = 1.0
        return cls(u)

    @classmethod
    def random(cls, m: int, n: int, rng: np.random.Generator) -> "StiefelPoint":
        return cls(qr_orthonormalize(rng.standard_normal((m, n))))


@dataclass(frozen=True)
class BlockedStiefelPoint:
    """Per-(spin, irrep) collection of independently orthonormal blocks.

    ``labels[k]`` is the (spin, irrep) pair of ``blocks[k]``; the global
    orbital ordering concatenates the blocks in the listed order, both for
    rows (orbitals) and columns (occupied electrons).
    """

    blocks: tuple[StiefelPoint, ...]
    labels: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if len(self.blocks) != len(self.labels):
            raise ValueError("one label per block required")

    @property
    def n_electrons(self) -> int:
        return sum(b.n for b in self.blocks)

    @property
    def n_spin_orbitals(self) -> int:
        return sum(b.m for b in self.blocks)

    def row_offsets(self) -> list[int]:
        offs, acc = [], 0
        for b in self.blocks:
            offs.append(acc)
            acc += b.m
        return offs

    def global_matrix(self) -> np.ndarray:
        """Assemble the block-diagonal global M x n representative."""
        m_tot, n_tot = self.n_spin_orbitals, self.n_electrons
        u = np.zeros((m_tot, n_tot))
        r = c = 0
        for b in self.blocks:
            u[r:r + b.m, c:c + b.n] = b.u
            r += b.m
            c += b.n
        return u

    def global_point(self) -> StiefelPoint:
        return StiefelPoint(self.global_matrix())


def orthonormality_error(u: np.ndarray) -> float:
    n = u.shape[1]
    return float(np.max(np.abs(u.T @ u - np.eye(n)))) if n else 0.0


def qr_orthonormalize(u: np.ndarray) -> np.ndarray:
    """Orthonormalize columns by QR, fixing signs so diag(R) > 0."""
    q, r = np.linalg.qr(u)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def orthonormal_complement_projector(point: StiefelPoint) -> np.ndarray:
    """Projector onto the orthogonal complement of span(U): I - U U^T."""
    u = point.u
    return np.eye(u.shape[0]) - u @ u.T


def canonical_thin_svd(a: np.ndarray):
    """Thin SVD with a deterministic sign convention.

    Singular values come out descending; the first entry of each left
    singular vector whose magnitude exceeds 1e-12 is made positive (the
    corresponding row of V^T is flipped along with it).
    """
    w, s, vt = np.linalg.svd(a, full_matrices=False)
    for j in range(w.shape[1]):
        col = w[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            w[:, j] = -col
            vt[j, :] = -vt[j, :]
    return w, s, vt


def geodesic_update(point: StiefelPoint, eta: np.ndarray,
                    horizontality_tol: float = 1e-6) -> StiefelPoint:
    """Move along the Grassmann geodesic leaving ``point`` with velocity ``eta``.

    ``eta`` must be horizontal (U^T eta = 0).  Computes the thin SVD
    ``eta = W S V^T`` and returns the re-orthonormalized representative of
    ``span(U V cos(S) + W sin(S))``.
    """
    u = point.u
    eta = np.asarray(eta, dtype=float)
    if eta.shape != u.shape:
        raise ValueError(f"direction shape {eta.shape} does not match point shape {u.shape}")
    horiz = float(np.max(np.abs(u.T @ eta))) if eta.size else 0.0
    if horiz > horizontality_tol:
        raise ValueError(f"direction is not horizontal: |U^T eta| = {horiz:.2e}")
    w, s, vt = canonical_thin_svd(eta)
    new = u @ vt.T @ np.diag(np.cos(s)) + w @ np.diag(np.sin(s))
    return StiefelPoint(qr_orthonormalize(new))


def principal_angles(a: StiefelPoint, b: StiefelPoint) -> np.ndarray:
    """Principal angles between span(A) and span(B), ascending.

    Uses the Bjorck-Golub combination of cosine- and sine-based singular
    values so that angles near 0 keep full precision (plain
    arccos(singular values) floors out around 1e-8).
    """
    if a.u.shape != b.u.shape:
        raise ValueError("points must share the same M and n")
    m = a.u.T @ b.u
    cos_vals = np.clip(np.linalg.svd(m, compute_uv=False), 0.0, 1.0)  # descending
    sin_vals = np.clip(np.linalg.svd(b.u - a.u @ m, compute_uv=False), 0.0, 1.0)
    sin_vals = sin_vals[::-1]  # pair with cos_vals: theta ascending
    angles = np.where(cos_vals ** 2 < 0.5, np.arccos(cos_vals), np.arcsin(sin_vals))
    return np.sort(angles)


def subspace_distance(a: StiefelPoint, b: StiefelPoint) -> float:
    """2-norm of the principal-angle vector; zero iff span(A) = span(B)."""
    return float(np.linalg.norm(principal_angles(a, b)))


def thouless_to_stiefel(k_matrix: np.ndarray, point: StiefelPoint) -> StiefelPoint:
    """Rotate ``point`` by the orbital-rotation parameters ``k_matrix``.

    ``k_matrix`` is the (M-n) x n block of occupied-virtual parameters,
    expressed in the basis [U, U_perp] where U_perp is the deterministic
    QR complement of U.  Returns the first n columns of
    ``exp([[0, -K^T], [K, 0]])`` mapped back to the original basis.  For
    ``point = (I; 0)`` the complement is the trivial one, so ``K`` rows are
    indexed by virtual orbitals n+1..M directly.
    """
    u = point.u
    m, n = u.shape
    k = np.asarray(k_matrix, dtype=float)
    if k.shape != (m - n, n):
        raise ValueError(f"expected K of shape {(m - n, n)}, got {k.shape}")
    basis = complete_basis(point)
    gen = np.zeros((m, m))
    gen[n:, :n] = k
    gen[:n, n:] = -k.T
    u_full = expm(gen)
    return StiefelPoint(qr_orthonormalize(basis @ u_full[:, :n]))


def complete_basis(point: StiefelPoint) -> np.ndarray:
    """Orthogonal M x M matrix whose first n columns are ``point``'s columns."""
    u = point.u
    m, n = u.shape
    q, _ = np.linalg.qr(u, mode="complete")
    # Replace the leading block by U itself (QR may flip column signs) and
    # re-orthogonalize the complement against it.
    comp = q[:, n:]
    comp = comp - u @ (u.T @ comp)
    comp = qr_orthonormalize(comp) if n < m else comp
    return np.hstack([u, comp])
