"""Shared independent oracles for the test suite.

Everything here recomputes quantities from first principles (explicit
determinants, finite differences, dense grids) without touching the
production assembly code paths it is used to check.
"""

import numpy as np
from scipy.optimize import minimize


def raw_overlap(u, wf):
    """sum_I C_I det(U|_I) by direct determinant evaluation."""
    total = 0.0
    for occ, c in wf.terms.items():
        total += c * np.linalg.det(u[np.asarray(occ, dtype=int) - 1, :])
    return total


def fd_gradient(u, wf, h=1e-5):
    """Entrywise central differences of the raw overlap sum."""
    m, n = u.shape
    grad = np.zeros((m, n))
    for p in range(m):
        for q in range(n):
            up, um = u.copy(), u.copy()
            up[p, q] += h
            um[p, q] -= h
            grad[p, q] = (raw_overlap(up, wf) - raw_overlap(um, wf)) / (2 * h)
    return grad


def fd_second(u, wf, p, q, r, s, h=1e-5):
    """Mixed second central difference of the raw overlap sum."""
    def shifted(dpq, drs):
        v = u.copy()
        v[p, q] += dpq
        v[r, s] += drs
        return raw_overlap(v, wf)

    return (shifted(h, h) - shifted(h, -h) - shifted(-h, h) + shifted(-h, -h)) / (4 * h * h)


def projected_gradient(u, wf):
    """Pi_perp grad f at a not-necessarily-orthonormal representative."""
    m = u.shape[0]
    pi = np.eye(m) - u @ np.linalg.inv(u.T @ u) @ u.T
    return pi @ fd_analytic_gradient(u, wf)


def fd_analytic_gradient(u, wf):
    """Exact gradient via adjugate scatter (independent small reimplementation)."""
    m, n = u.shape
    grad = np.zeros((m, n))
    for occ, c in wf.terms.items():
        rows = np.asarray(occ, dtype=int) - 1
        a = u[rows, :]
        det = np.linalg.det(a)
        if abs(det) > 1e-12:
            adj = det * np.linalg.inv(a)
        else:
            adj = np.zeros((n, n))
            idx = np.arange(n)
            for k in range(n):
                for q in range(n):
                    sub = a[np.ix_(idx != k, idx != q)]
                    adj[q, k] = (-1) ** (k + q) * np.linalg.det(sub)
        grad[rows, :] += c * adj.T
    return grad


def fd_projected_hessian_vec(u, wf, eta, h=1e-5):
    """Pi . central difference of the projected gradient map along eta."""
    m = u.shape[0]
    d = (projected_gradient(u + h * eta, wf) - projected_gradient(u - h * eta, wf)) / (2 * h)
    pi = np.eye(m) - u @ u.T
    return pi @ d


def two_angle_overlap_coeffs(wf):
    """(c13, c14, c23, c24) entering the spin-block two-angle overlap."""
    assert wf.n_spin_orbitals == 4 and wf.n_electrons == 2
    return (wf.coefficient((1, 3)), wf.coefficient((1, 4)),
            wf.coefficient((2, 3)), wf.coefficient((2, 4)))


def two_angle_grid_oracle(wf, n_grid=2000):
    """Max |overlap| over the spin-block family: dense grid plus polish."""
    c13, c14, c23, c24 = two_angle_overlap_coeffs(wf)

    def value(ka, kb):
        return (c13 * np.cos(ka) * np.cos(kb) + c14 * np.cos(ka) * np.sin(kb)
                + c23 * np.sin(ka) * np.cos(kb) + c24 * np.sin(ka) * np.sin(kb))

    grid = np.linspace(-np.pi / 2, np.pi / 2, n_grid)
    ka, kb = np.meshgrid(grid, grid, indexing="ij")
    f = np.abs(value(ka, kb))
    k0 = np.unravel_index(np.argmax(f), f.shape)
    x0 = np.array([grid[k0[0]], grid[k0[1]]])
    res = minimize(lambda x: -abs(value(x[0], x[1])), x0, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14})
    return max(float(f[k0]), -float(res.fun))


def expand_determinant(point):
    """Coefficients of a Slater determinant over all occupation indices."""
    from itertools import combinations

    m, n = point.u.shape
    coeffs = {}
    for occ in combinations(range(1, m + 1), n):
        coeffs[occ] = float(np.linalg.det(point.u[np.asarray(occ) - 1, :]))
    return coeffs
