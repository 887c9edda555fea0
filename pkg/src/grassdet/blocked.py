"""Spin/irrep-blocked assembly and the CISD-specialized fast path.

For a block-diagonal representative the minors factor, so every kernel is
a product of per-block kernels over the (spin, irrep) blocks, and only CI
terms whose per-block electron counts match the reference contribute.
The general blocked routines mirror the global ones block by block; the
CISD routines evaluate the same matrices from reference/single/double
block kernels and a handful of scalar intermediates, never touching the
expanded determinant list.

Projector convention: the complement projector is applied on the row
(bra) index of every block row, matching the unblocked assembly, so the
three paths agree elementwise.  The extra column-side projector that the
cross-block outer products admit only removes components annihilated by
the horizontality constraints and is omitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cisd import CISDWaveFunction, block_offsets
from .geometry import BlockedStiefelPoint, StiefelPoint
from .kernels import (
    EvalCounters,
    adjugate,
    compute_htilde_full,
    minor,
)
from .wavefunction import CIWaveFunction


@dataclass
class BlockedNewtonSystem:
    """Per-block Newton system for a product of Grassmannians.

    ``hessian[(bi, bj)]`` has shape (M_bi, n_bi, M_bj, n_bj); missing
    pairs are zero.  Cross-block row/column pairs of the ambient problem
    (eta entries coupling different blocks) are outside the blocked
    parametrization and are not represented.
    """

    labels: tuple[tuple[str, int], ...]
    us: list[np.ndarray]
    f_value: float
    jacobian: dict[int, np.ndarray]
    hessian: dict[tuple[int, int], np.ndarray]

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(j * j) for j in self.jacobian.values())))

    def solve(self, rcond: float = 1e-12):
        """Stacked least-squares step; returns (per-block eta list, full_rank)."""
        sizes = [u.shape[0] * u.shape[1] for u in self.us]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        dim = int(offsets[-1])
        n_cons = sum(u.shape[1] ** 2 for u in self.us)
        a = np.zeros((dim + n_cons, dim))
        b = np.zeros(dim + n_cons)
        for bi, jac in self.jacobian.items():
            b[offsets[bi]:offsets[bi + 1]] = -jac.ravel()
        for (bi, bj), h4 in self.hessian.items():
            mi, ni = self.us[bi].shape
            mj, nj = self.us[bj].shape
            a[offsets[bi]:offsets[bi + 1], offsets[bj]:offsets[bj + 1]] = (
                h4.reshape(mi * ni, mj * nj))
        row = dim
        for bi, u in enumerate(self.us):
            m, n = u.shape
            cons = np.zeros((n, n, m, n))
            for j in range(n):
                cons[:, j, :, j] = u.T
            a[row:row + n * n, offsets[bi]:offsets[bi + 1]] = cons.reshape(n * n, m * n)
            row += n * n
        x, _, rank, _ = np.linalg.lstsq(a, b, rcond=rcond)
        etas = []
        for bi, u in enumerate(self.us):
            m, n = u.shape
            eta = x[offsets[bi]:offsets[bi + 1]].reshape(m, n)
            eta -= u @ (u.T @ eta)
            etas.append(eta)
        return etas, int(rank) == dim


def layout_blocks(wf: CIWaveFunction):
    """(labels, dims, offsets) from a wave function's block structure."""
    if wf.block_structure is None:
        raise ValueError("wave function carries no block structure")
    labels = tuple((spin, irrep) for spin, irrep, _ in wf.block_structure)
    dims = tuple(dim for _, _, dim in wf.block_structure)
    offs, acc = [], 0
    for d in dims:
        offs.append(acc)
        acc += d
    return labels, dims, offs


def split_occupation(occ, dims, offs) -> list[tuple[int, ...]]:
    """Per-block local (1-based) occupations of a global multi-index."""
    locals_ = [[] for _ in dims]
    for p in occ:
        for blk, off in enumerate(offs):
            if off < p <= off + dims[blk]:
                locals_[blk].append(p - off)
                break
        else:
            raise ValueError(f"orbital {p} outside every block")
    return [tuple(v) for v in locals_]


def blocked_point(wf: CIWaveFunction, mats) -> BlockedStiefelPoint:
    """Wrap per-block matrices in the wave function's block order."""
    labels, dims, _ = layout_blocks(wf)
    blocks = []
    for mat, dim in zip(mats, dims):
        mat = np.asarray(mat, dtype=float)
        if mat.shape[0] != dim:
            raise ValueError(f"block has {mat.shape[0]} rows, expected {dim}")
        blocks.append(StiefelPoint(mat))
    return BlockedStiefelPoint(tuple(blocks), labels)


def _block_occupations(point: BlockedStiefelPoint):
    return tuple(b.n for b in point.blocks)


def blocked_f(point: BlockedStiefelPoint, wf: CIWaveFunction,
              counters: EvalCounters | None = None) -> float:
    """Overlap sum over occupation-compatible terms: sum_I C_I prod_b F_{I_b}.

    Terms whose per-block electron counts differ from the point's leave a
    non-square block minor and contribute zero; they are skipped.
    """
    _, dims, offs = layout_blocks(wf)
    want = _block_occupations(point)
    total = 0.0
    for occ, c in wf.terms.items():
        locals_ = split_occupation(occ, dims, offs)
        if tuple(len(v) for v in locals_) != want:
            continue
        prod = c
        for blk, loc in zip(point.blocks, locals_):
            det, _ = adjugate(minor(blk.u, loc), counters)
            prod *= det
        total += prod
    return total


def blocked_assemble(point: BlockedStiefelPoint, wf: CIWaveFunction,
                     counters: EvalCounters | None = None) -> BlockedNewtonSystem:
    """Per-block Jacobian and Hessian of the blocked overlap sum.

    Same-block Hessian blocks accumulate the per-block H~ tensors scaled
    by the other blocks' F product; cross-block pairs accumulate outer
    products of the two G kernels.  The row-side complement projector is
    applied at the end, block by block.
    """
    labels, dims, offs = layout_blocks(wf)
    if labels != point.labels:
        raise ValueError("block labels of the point do not match the wave function")
    want = _block_occupations(point)
    nb = len(dims)
    us = [b.u for b in point.blocks]
    jac = {bi: np.zeros(us[bi].shape) for bi in range(nb)}
    hess = {}
    for bi in range(nb):
        mi, ni = us[bi].shape
        for bj in range(nb):
            mj, nj = us[bj].shape
            hess[(bi, bj)] = np.zeros((mi, ni, mj, nj))
    f_total = 0.0
    for occ, c in wf.terms.items():
        locals_ = split_occupation(occ, dims, offs)
        if tuple(len(v) for v in locals_) != want:
            continue
        fs, gs, hts = [], [], []
        for blk, loc in zip(point.blocks, locals_):
            det, adj = adjugate(minor(blk.u, loc), counters)
            g = np.zeros(blk.u.shape)
            if loc:
                g[np.asarray(loc, dtype=int) - 1, :] = adj.T
            fs.append(det)
            gs.append(g)
            hts.append(compute_htilde_full(blk.u, loc, counters, f_value=det))
        f_total += c * float(np.prod(fs))
        for bi in range(nb):
            others_i = _prod_excluding(fs, (bi,))
            jac[bi] += c * others_i * gs[bi]
            hess[(bi, bi)] += c * others_i * hts[bi]
            for bj in range(nb):
                if bj == bi:
                    continue
                others_ij = _prod_excluding(fs, (bi, bj))
                hess[(bi, bj)] += c * others_ij * np.einsum(
                    "pq,rs->pqrs", gs[bi], gs[bj])
    for bi in range(nb):
        pi = np.eye(us[bi].shape[0]) - us[bi] @ us[bi].T
        jac[bi] = pi @ jac[bi]
        for bj in range(nb):
            hess[(bi, bj)] = np.einsum("pt,tqrs->pqrs", pi, hess[(bi, bj)])
    return BlockedNewtonSystem(labels, us, f_total, jac, hess)


def _prod_excluding(values, skip) -> float:
    prod = 1.0
    for k, v in enumerate(values):
        if k not in skip:
            prod *= v
    return prod


# ---------------------------------------------------------------------------
# CISD fast path
# ---------------------------------------------------------------------------


@dataclass
class CISDNewtonSystem:
    """Spatially folded Newton system for a restricted CISD wave function.

    One block per irrep, shared by both spins: the row blocks are the
    alpha rows of the spin-resolved system and the column blocks carry
    the spin sum, so solving it with eta_alpha = eta_beta reproduces the
    unfolded solve.
    """

    us: list[np.ndarray]
    f_value: float
    jacobian: dict[int, np.ndarray]
    hessian: dict[tuple[int, int], np.ndarray]

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(j * j) for j in self.jacobian.values())))

    def solve(self, rcond: float = 1e-12):
        proxy = BlockedNewtonSystem(
            labels=tuple(("s", g + 1) for g in range(len(self.us))),
            us=self.us, f_value=self.f_value,
            jacobian=self.jacobian, hessian=self.hessian)
        return proxy.solve(rcond=rcond)


@dataclass
class _IrrepKernels:
    """Resident per-irrep kernels: reference plus every single excitation."""

    u: np.ndarray
    n: int
    f0: float = 0.0
    g0: np.ndarray | None = None
    ht0: np.ndarray | None = None
    f_s: dict = field(default_factory=dict)   # (i, a) -> F
    g_s: dict = field(default_factory=dict)   # (i, a) -> G (M x n)


def _single_occ(n: int, i: int, a: int) -> tuple[int, ...]:
    return tuple(sorted([x for x in range(1, n + 1) if x != i] + [a]))


def _double_occ(n: int, i: int, j: int, a: int, b: int) -> tuple[int, ...]:
    return tuple(sorted([x for x in range(1, n + 1) if x not in (i, j)] + [a, b]))


def _irrep_kernels(u: np.ndarray, n: int,
                   counters: EvalCounters | None) -> _IrrepKernels:
    ker = _IrrepKernels(u=u, n=n)
    ref = tuple(range(1, n + 1))
    det, adj = adjugate(minor(u, ref), counters)
    ker.f0 = det
    g0 = np.zeros(u.shape)
    if n:
        g0[np.arange(n), :] = adj.T
    ker.g0 = g0
    ker.ht0 = compute_htilde_full(u, ref, counters, f_value=det)
    m = u.shape[0]
    for i in range(1, n + 1):
        for a in range(n + 1, m + 1):
            occ = _single_occ(n, i, a)
            det_s, adj_s = adjugate(minor(u, occ), counters)
            g = np.zeros(u.shape)
            g[np.asarray(occ, dtype=int) - 1, :] = adj_s.T
            ker.f_s[(i, a)] = det_s
            ker.g_s[(i, a)] = g
    return ker


def _mixed_pairs(wf: CISDWaveFunction, g1: int, g2: int):
    """Iterate ((i, a), (j, b), D) over stored entries coupling g1 and g2 (g1 != g2)."""
    for key, d in wf.doubles_mixed.items():
        k1, i, a, k2, j, b = key
        if (k1, k2) == (g1, g2):
            yield (i, a), (j, b), d
        elif (k1, k2) == (g2, g1):
            yield (j, b), (i, a), d


def _same_irrep_pairs(wf: CISDWaveFunction, g: int):
    """Ordered pairs ((i,a),(j,b),D) of the same-irrep singles products."""
    for key, d in wf.doubles_mixed.items():
        k1, i, a, k2, j, b = key
        if k1 != g or k2 != g:
            continue
        yield (i, a), (j, b), d
        if (i, a) != (j, b):
            yield (j, b), (i, a), d


def _cisd_intermediates(point: BlockedStiefelPoint, wf: CISDWaveFunction,
                        counters: EvalCounters | None):
    """Kernels plus the scalar intermediates shared by f and the matrices."""
    g = wf.n_irreps
    if len(point.blocks) == 2 * g:
        # restricted full blocked point: alpha and beta blocks must agree
        for k in range(g):
            if not np.allclose(point.blocks[k].u, point.blocks[g + k].u, atol=1e-12):
                raise ValueError("restricted CISD path requires equal alpha/beta blocks")
        mats = [point.blocks[k].u for k in range(g)]
    elif len(point.blocks) == g:
        mats = [b.u for b in point.blocks]
    else:
        raise ValueError("expected one block per irrep or per (spin, irrep)")
    for k in range(g):
        if mats[k].shape != (wf.block_dims[k], wf.n_per_irrep[k]):
            raise ValueError(
                f"irrep {k + 1}: block shape {mats[k].shape} does not match "
                f"({wf.block_dims[k]}, {wf.n_per_irrep[k]})")
    kers = [_irrep_kernels(mats[k], wf.n_per_irrep[k], counters) for k in range(g)]
    f0 = [k.f0 for k in kers]

    def fprod(excluded: tuple) -> float:
        prod = 1.0
        for gg in range(1, g + 1):
            if gg not in excluded:
                prod *= f0[gg - 1] ** 2
        return prod

    # L^g and K^{g g'} (eq-level scalars; the factor 2 counts both spins)
    l_val = np.zeros(g + 1)
    for gg in range(1, g + 1):
        ker = kers[gg - 1]
        acc = 0.0
        for (irrep, i, a), c in wf.singles.items():
            if irrep == gg:
                acc += c * ker.f_s[(i, a)]
        for (irrep, i, j, a, b), c in wf.doubles_same.items():
            if irrep == gg:
                det_d, _ = adjugate(minor(ker.u, _double_occ(ker.n, i, j, a, b)),
                                    counters)
                acc += c * det_d
        l_val[gg] = 2.0 * ker.f0 * acc
        for (i, a), (j, b), d in _same_irrep_pairs(wf, gg):
            l_val[gg] += d * ker.f_s[(i, a)] * ker.f_s[(j, b)]
    k_val = np.zeros((g + 1, g + 1))
    for g1 in range(1, g + 1):
        for g2 in range(1, g1):
            acc = 0.0
            for (i, a), (j, b), d in _mixed_pairs(wf, g1, g2):
                acc += d * kers[g1 - 1].f_s[(i, a)] * kers[g2 - 1].f_s[(j, b)]
            k_val[g1, g2] = k_val[g2, g1] = 2.0 * f0[g1 - 1] * f0[g2 - 1] * acc
    return kers, f0, fprod, l_val, k_val


def cisd_f(point: BlockedStiefelPoint, wf: CISDWaveFunction,
           counters: EvalCounters | None = None) -> float:
    """Overlap sum via the CISD intermediates: C0*Fprod + same-irrep + mixed."""
    _, _, fprod, l_val, k_val = _cisd_intermediates(point, wf, counters)
    g = wf.n_irreps
    total = wf.c0 * fprod(())
    for gg in range(1, g + 1):
        total += fprod((gg,)) * l_val[gg]
    for g1 in range(1, g + 1):
        for g2 in range(1, g1):
            total += fprod((g1, g2)) * k_val[g1, g2]
    return total


def cisd_assemble(point: BlockedStiefelPoint, wf: CISDWaveFunction,
                  counters: EvalCounters | None = None) -> CISDNewtonSystem:
    """Folded Newton system from reference and single-excitation kernels.

    Double-excitation kernels are streamed (used once each); the
    inter-irrep couplings enter through the merged coefficients D with a
    division-free accumulation, so vanishing reference minors in one
    block never poison another block's dressing.
    """
    g = wf.n_irreps
    kers, f0, fprod, l_val, k_val = _cisd_intermediates(point, wf, counters)

    # dress[g][gbar][(i, a)] = sum over (j, b) in gbar of F_s^gbar[j, b] * D
    dress = [[{} for _ in range(g + 1)] for _ in range(g + 1)]
    for g1 in range(1, g + 1):
        for g2 in range(1, g + 1):
            if g1 == g2:
                continue
            acc: dict = {}
            for (i, a), (j, b), d in _mixed_pairs(wf, g1, g2):
                acc[(i, a)] = acc.get((i, a), 0.0) + kers[g2 - 1].f_s[(j, b)] * d
            dress[g1][g2] = acc

    def ghat(gg: int, i: int, a: int) -> np.ndarray:
        ker = kers[gg - 1]
        return ker.f0 * ker.g_s[(i, a)] + ker.f_s[(i, a)] * ker.g0

    def tail(excluded: tuple) -> float:
        """L and K contributions of the irreps outside ``excluded``."""
        acc = 0.0
        for gb in range(1, g + 1):
            if gb in excluded:
                continue
            acc += fprod(excluded + (gb,)) * l_val[gb]
            for gc in range(1, gb):
                if gc in excluded:
                    continue
                acc += fprod(excluded + (gb, gc)) * k_val[gb, gc]
        return acc

    # per-irrep accumulators; "core" parts exclude the singles, which are
    # folded in with their dressed effective coefficients
    m_core, m_cross, gg_core, hh_core = {}, {}, {}, {}
    m_single, gg_single, hh_single = {}, {}, {}
    for gg in range(1, g + 1):
        ker = kers[gg - 1]
        m, n = ker.u.shape
        g0xg0 = np.einsum("pq,rs->pqrs", ker.g0, ker.g0)
        mc = wf.c0 * ker.f0 * ker.g0
        gc = wf.c0 * g0xg0
        hc = wf.c0 * ker.f0 * ker.ht0
        for (irrep, i, j, a, b), c in wf.doubles_same.items():
            if irrep != gg:
                continue
            occ_d = _double_occ(n, i, j, a, b)
            det_d, adj_d = adjugate(minor(ker.u, occ_d), counters)
            g_d = np.zeros((m, n))
            g_d[np.asarray(occ_d, dtype=int) - 1, :] = adj_d.T
            ht_d = compute_htilde_full(ker.u, occ_d, counters, f_value=det_d)
            mc += c * (ker.f0 * g_d + det_d * ker.g0)
            gc += c * (np.einsum("pq,rs->pqrs", ker.g0, g_d)
                       + np.einsum("pq,rs->pqrs", g_d, ker.g0))
            hc += c * (ker.f0 * ht_d + det_d * ker.ht0)
        ht_s_cache: dict = {}

        def ht_single(pair, ker=ker, n=n, cache=ht_s_cache):
            if pair not in cache:
                cache[pair] = compute_htilde_full(
                    ker.u, _single_occ(n, *pair), counters,
                    f_value=ker.f_s[pair])
            return cache[pair]

        for (i, a), (j, b), d in _same_irrep_pairs(wf, gg):
            fs_ia, g_ia = ker.f_s[(i, a)], ker.g_s[(i, a)]
            fs_jb, g_jb = ker.f_s[(j, b)], ker.g_s[(j, b)]
            mc += d * fs_jb * g_ia
            gc += d * np.einsum("pq,rs->pqrs", g_ia, g_jb)
            hc += d * fs_ia * ht_single((j, b))
        m_core[gg], gg_core[gg], hh_core[gg] = mc, gc, hc
        # cross blocks use M with pure (undressed) single coefficients
        mx = mc.copy()
        for (irrep, i, a), c in wf.singles.items():
            if irrep == gg:
                mx += c * ghat(gg, i, a)
        m_cross[gg] = mx
        # effective single coefficients, with all F-prefactors absorbed
        ceff: dict = {}
        for (irrep, i, a), c in wf.singles.items():
            if irrep == gg:
                ceff[(i, a)] = ceff.get((i, a), 0.0) + fprod((gg,)) * c
        for gb in range(1, g + 1):
            if gb == gg:
                continue
            scale = fprod((gg, gb)) * f0[gb - 1]
            for (i, a), val in dress[gg][gb].items():
                ceff[(i, a)] = ceff.get((i, a), 0.0) + scale * val
        ms = np.zeros((m, n))
        gs4 = np.zeros((m, n, m, n))
        hs4 = np.zeros((m, n, m, n))
        for (i, a), ce in ceff.items():
            if ce == 0.0:
                continue
            g_s = ker.g_s[(i, a)]
            f_s = ker.f_s[(i, a)]
            ms += ce * (ker.f0 * g_s + f_s * ker.g0)
            gs4 += ce * (np.einsum("pq,rs->pqrs", g_s, ker.g0)
                         + np.einsum("pq,rs->pqrs", ker.g0, g_s))
            hs4 += ce * (ker.f0 * ht_single((i, a)) + f_s * ker.ht0)
        m_single[gg], gg_single[gg], hh_single[gg] = ms, gs4, hs4

    jac = {}
    hess = {}
    for gg in range(1, g + 1):
        ker = kers[gg - 1]
        f_gg = fprod((gg,))
        tail_gg = tail((gg,))
        g0xg0 = np.einsum("pq,rs->pqrs", ker.g0, ker.g0)
        jac[gg - 1] = (f_gg * m_core[gg] + m_single[gg]
                       + tail_gg * ker.f0 * ker.g0)
        hess[(gg - 1, gg - 1)] = (
            f_gg * (hh_core[gg] + gg_core[gg]) + hh_single[gg] + gg_single[gg]
            + tail_gg * (ker.f0 * ker.ht0 + g0xg0))

    for g1 in range(1, g + 1):
        for g2 in range(1, g + 1):
            if g1 == g2:
                continue
            k1, k2 = kers[g1 - 1], kers[g2 - 1]
            f_12 = fprod((g1, g2))
            block = f_12 * k2.f0 * np.einsum("pq,rs->pqrs", m_cross[g1], k2.g0)
            block += f_12 * k1.f0 * np.einsum("pq,rs->pqrs", k1.g0, m_cross[g2])
            # Ghat-dressing by third irreps; the g2 (resp. g1) dressing is
            # carried by the explicit D^{g1 g2} pair term below
            for gbar in range(1, g + 1):
                if gbar in (g1, g2):
                    continue
                scale = fprod((g1, g2, gbar)) * f0[gbar - 1]
                for (i, a), val in dress[g1][gbar].items():
                    block += scale * k2.f0 * val * np.einsum(
                        "pq,rs->pqrs", ghat(g1, i, a), k2.g0)
                for (j, b), val in dress[g2][gbar].items():
                    block += scale * k1.f0 * val * np.einsum(
                        "pq,rs->pqrs", k1.g0, ghat(g2, j, b))
            pair = np.zeros(block.shape)
            for (i, a), (j, b), d in _mixed_pairs(wf, g1, g2):
                pair += d * np.einsum("pq,rs->pqrs", ghat(g1, i, a), ghat(g2, j, b))
            block += 0.5 * f_12 * pair
            coeff = -wf.c0 * f_12 + tail((g1, g2))
            block += coeff * k1.f0 * k2.f0 * np.einsum("pq,rs->pqrs", k1.g0, k2.g0)
            hess[(g1 - 1, g2 - 1)] = 2.0 * block

    for gg in range(1, g + 1):
        u = kers[gg - 1].u
        pi = np.eye(u.shape[0]) - u @ u.T
        jac[gg - 1] = pi @ jac[gg - 1]
        for g2 in range(1, g + 1):
            hess[(gg - 1, g2 - 1)] = np.einsum(
                "pt,tqrs->pqrs", pi, hess[(gg - 1, g2 - 1)])

    f_value = cisd_f_from(kers, fprod, l_val, k_val, wf)
    return CISDNewtonSystem([k.u for k in kers], f_value, jac, hess)


def cisd_f_from(kers, fprod, l_val, k_val, wf: CISDWaveFunction) -> float:
    g = wf.n_irreps
    total = wf.c0 * fprod(())
    for gg in range(1, g + 1):
        total += fprod((gg,)) * l_val[gg]
    for g1 in range(1, g + 1):
        for g2 in range(1, g1):
            total += fprod((g1, g2)) * k_val[g1, g2]
    return total


def fold_blocked_system(system: BlockedNewtonSystem, n_irreps: int) -> CISDNewtonSystem:
    """Spatial fold of a restricted spin-resolved system.

    Row blocks: the alpha rows; column blocks: alpha plus beta columns of
    the same irrep.  Requires the alpha/beta sub-blocks to be identical
    (checked on the Jacobian).
    """
    g = n_irreps
    if len(system.us) != 2 * g:
        raise ValueError("expected alpha and beta blocks per irrep")
    for k in range(g):
        if not np.allclose(system.jacobian[k], system.jacobian[g + k], atol=1e-10):
            raise ValueError("system is not spin-symmetric; cannot fold")
    jac = {k: system.jacobian[k].copy() for k in range(g)}
    hess = {}
    for g1 in range(g):
        for g2 in range(g):
            hess[(g1, g2)] = system.hessian[(g1, g2)] + system.hessian[(g1, g + g2)]
    return CISDNewtonSystem([system.us[k] for k in range(g)],
                            system.f_value, jac, hess)


def optimize_cisd(point: BlockedStiefelPoint, wf: CISDWaveFunction,
                  opts=None):
    """Newton loop driven entirely by the CISD fast path.

    Mirrors the unblocked optimizer: assemble the folded system, solve
    the stacked least squares, and move every irrep block along its
    geodesic (the same update is applied to both spins).
    """
    import time

    from .geometry import geodesic_update
    from .newton import IterationRecord, NewtonReport, ToleranceOptions

    opts = opts or ToleranceOptions()
    g = wf.n_irreps
    if len(point.blocks) == 2 * g:
        blocks = list(point.blocks[:g])
    else:
        blocks = list(point.blocks)
    report = NewtonReport(algorithm="cisd")
    for it in range(opts.max_iter):
        t0 = time.perf_counter()
        bsp = BlockedStiefelPoint(tuple(blocks), tuple(("s", k + 1) for k in range(g)))
        system = cisd_assemble(bsp, wf, report.counters)
        report.points.append(bsp)
        grad_norm = system.grad_norm()
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
        etas, full_rank = system.solve(rcond=opts.rcond)
        report.degenerate = report.degenerate or not full_rank
        step_norm = float(np.sqrt(sum(np.sum(e * e) for e in etas)))
        record.step_norm = step_norm
        blocks = [geodesic_update(b, e) for b, e in zip(blocks, etas)]
        record.wall_time = time.perf_counter() - t0
        record.n_det_evals = report.counters.n_det_evals
        report.iterations.append(record)
        if step_norm < opts.tol_step:
            report.converged = True
            report.reason = "step below tolerance"
            break
    else:
        report.reason = f"no convergence within {opts.max_iter} iterations"
    final = BlockedStiefelPoint(tuple(blocks), tuple(("s", k + 1) for k in range(g)))
    report.final_point = final
    report.f_final = cisd_f(final, wf, report.counters)
    report.grad_norm_final = (report.iterations[-1].grad_norm
                              if report.iterations else float("inf"))
    return report


# ---------------------------------------------------------------------------
# frozen core
# ---------------------------------------------------------------------------


@dataclass
class FrozenReduction:
    """Reduced optimization problem with the frozen orbitals removed."""

    wavefunction: CIWaveFunction
    point: StiefelPoint
    frozen: tuple[int, ...]
    active_rows: tuple[int, ...]

    def lift(self, reduced: StiefelPoint) -> StiefelPoint:
        """Re-insert frozen unit columns and rows into a reduced point."""
        m_full = len(self.frozen) + len(self.active_rows)
        n_full = len(self.frozen) + reduced.n
        u = np.zeros((m_full, n_full))
        for col, p in enumerate(self.frozen):
            u[p - 1, col] = 1.0
        rows = np.asarray(self.active_rows, dtype=int) - 1
        u[rows, len(self.frozen):] = reduced.u
        return StiefelPoint(u)


def freeze_core(wf: CIWaveFunction, point: StiefelPoint, frozen) -> FrozenReduction:
    """Project out orbitals occupied in every CI term.

    The reduced problem optimizes over the complement rows only; since
    the Jacobian entries of universally occupied orbitals vanish, the
    reduced optimum lifts back to the full optimum.  Requires every term
    of ``wf`` to contain all frozen indices and span(``point``) to
    contain the frozen unit vectors.
    """
    frozen = tuple(sorted(int(p) for p in frozen))
    if len(set(frozen)) != len(frozen):
        raise ValueError("frozen list contains repeats")
    if not frozen:
        return FrozenReduction(wf, point, (), tuple(range(1, wf.n_spin_orbitals + 1)))
    for occ in wf.terms:
        missing = [p for p in frozen if p not in occ]
        if missing:
            raise ValueError(
                f"frozen orbital {missing[0]} is not occupied in term {occ}")
    u = point.u
    for p in frozen:
        e = np.zeros(u.shape[0])
        e[p - 1] = 1.0
        residual = e - u @ (u.T @ e)
        if np.linalg.norm(residual) > 1e-8:
            raise ValueError(f"span of the start point does not contain orbital {p}")
    active_rows = tuple(p for p in range(1, wf.n_spin_orbitals + 1) if p not in frozen)
    rows = np.asarray(active_rows, dtype=int) - 1
    # active part of the span: project off the frozen directions, then
    # compress to an orthonormal basis of the remaining n - k columns
    b = u.copy()
    for p in frozen:
        b[p - 1, :] = 0.0
    w, s, _ = np.linalg.svd(b, full_matrices=False)
    keep = w[:, : u.shape[1] - len(frozen)]
    reduced_point = StiefelPoint(keep[rows, :])
    # reduced coefficients: factor the frozen orbitals to the front
    terms = {}
    pos_of = {p: k for k, p in enumerate(active_rows, start=1)}
    for occ, c in wf.terms.items():
        sign = _front_factor_sign(occ, frozen)
        reduced_occ = tuple(pos_of[p] for p in occ if p not in frozen)
        terms[reduced_occ] = sign * c
    reduced_wf = CIWaveFunction(len(active_rows), wf.n_electrons - len(frozen), terms)
    return FrozenReduction(reduced_wf, reduced_point, frozen, active_rows)


def _front_factor_sign(occ, frozen) -> int:
    """Parity of moving the frozen orbitals to the front of the wedge."""
    occ = list(occ)
    swaps = 0
    for target, p in enumerate(sorted(frozen)):
        k = occ.index(p)
        swaps += k - target
    return -1 if swaps % 2 else 1
