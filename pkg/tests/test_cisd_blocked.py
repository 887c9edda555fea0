import math

import numpy as np
import pytest

from grassdet.blocked import (
    blocked_assemble,
    blocked_f,
    blocked_point,
    cisd_assemble,
    cisd_f,
    fold_blocked_system,
    freeze_core,
    layout_blocks,
    optimize_cisd,
)
from grassdet.cisd import (
    CISDWaveFunction,
    expand_cisd,
    parse_cisd,
    reference_occupation,
    serialize_cisd,
)
from grassdet.geometry import (
    BlockedStiefelPoint,
    StiefelPoint,
    qr_orthonormalize,
    subspace_distance,
)
from grassdet.kernels import EvalCounters, overlap_f
from grassdet.models import random_ci, random_cisd, dominant_start
from grassdet.newton import ToleranceOptions, assemble_system, optimize
from grassdet.thouless import build_jac_hess, relabel_reference
from grassdet.wavefunction import CIWaveFunction

from helpers import raw_overlap

RNG = np.random.default_rng(606)


def restricted_point(wf_expanded, mats):
    return blocked_point(wf_expanded, list(mats) + list(mats))


def random_mats(dims, nocc, rng):
    return [qr_orthonormalize(rng.standard_normal((d, n)))
            for d, n in zip(dims, nocc)]


def compare_blocked_to_global(system_global, system_blocked, point, wf):
    labels, dims, offs = layout_blocks(wf)
    col_offs = np.concatenate([[0], np.cumsum([b.n for b in point.blocks])]).astype(int)
    m_all, n_all = point.global_point().u.shape
    h4 = system_global.hessian.reshape(m_all, n_all, m_all, n_all)
    worst = 0.0
    for bi in range(len(dims)):
        r = slice(offs[bi], offs[bi] + dims[bi])
        c = slice(col_offs[bi], col_offs[bi + 1])
        worst = max(worst, float(np.max(np.abs(
            system_global.jacobian[r, c] - system_blocked.jacobian[bi]))))
        for bj in range(len(dims)):
            s = slice(offs[bj], offs[bj] + dims[bj])
            d = slice(col_offs[bj], col_offs[bj + 1])
            worst = max(worst, float(np.max(np.abs(
                h4[r, c, s, d] - system_blocked.hessian[(bi, bj)]))))
    return worst


class TestCISDFormat:
    def test_round_trip(self):
        wf = random_cisd((3, 2), (2, 1), seed=4)
        text = serialize_cisd(wf)
        back = parse_cisd(text)
        assert back.c0 == wf.c0
        assert back.singles == wf.singles
        assert back.doubles_same == wf.doubles_same
        assert back.doubles_mixed == wf.doubles_mixed
        assert serialize_cisd(back) == text

    def test_restriction_enforced(self):
        text = ("CISD 1\nnorb 10\nnelec 6\nblocks 2 3 2 3 2\nrefocc 2 1\n"
                "ref 1.0\n")
        parse_cisd(text)
        bad = text.replace("blocks 2 3 2 3 2", "blocks 2 3 2 2 3")
        with pytest.raises(Exception):
            parse_cisd(bad)

    def test_symmetry_invariants(self):
        # same-irrep mixed coefficients are stored once per unordered pair
        wf = random_cisd((3,), (1,), seed=2)
        assert wf.mixed(1, 1, 2, 1, 1, 3) == wf.mixed(1, 1, 3, 1, 1, 2)


class TestExpansion:
    def test_reference_and_single_signs(self):
        wf = CISDWaveFunction((2, 1), (1, 0), c0=0.9,
                              singles={(1, 1, 2): 0.2})
        full = expand_cisd(wf)
        # layout: alpha (1,2), (3) then beta (4,5), (6); reference = {1, 4}
        assert reference_occupation(wf) == (1, 4)
        assert full.coefficient((1, 4)) == 0.9
        assert full.coefficient((2, 4)) == 0.2   # alpha single
        assert full.coefficient((1, 5)) == 0.2   # beta single

    def test_norm_matches_even_split_expansion(self):
        wf = random_cisd((3, 2), (2, 1), seed=8)
        assert abs(wf.norm() - expand_cisd(wf, mixed_split=0.5).norm()) < 1e-13


class TestBlockedF:
    def test_single_block_reduces_to_plain_overlap(self):
        wf = random_ci(5, 2, 6, seed=3)
        wf = CIWaveFunction(5, 2, wf.terms, [("a", 1, 5)])
        mat = qr_orthonormalize(RNG.standard_normal((5, 2)))
        bsp = blocked_point(wf, [mat])
        assert abs(blocked_f(bsp, wf) - raw_overlap(mat, wf)) < 1e-14

    def test_closed_shell_reference_term(self):
        cisd = CISDWaveFunction((3, 2), (2, 1), c0=0.8)
        wf = expand_cisd(cisd)
        mats = random_mats((3, 2), (2, 1), RNG)
        bsp = restricted_point(wf, mats)
        f0_sq = np.linalg.det(mats[0][:2, :]) ** 2 * np.linalg.det(mats[1][:1, :]) ** 2
        assert abs(blocked_f(bsp, wf) - 0.8 * f0_sq) < 1e-14

    def test_two_irrep_matches_unblocked(self):
        cisd = random_cisd((3, 2), (2, 1), seed=17, amplitude=0.15)
        wf = expand_cisd(cisd)
        bsp = restricted_point(wf, random_mats((3, 2), (2, 1), RNG))
        f_blocked = blocked_f(bsp, wf)
        f_global = raw_overlap(bsp.global_point().u, wf)
        assert abs(f_blocked - f_global) < 1e-13

    def test_occupation_mismatch_contributes_zero(self):
        # a term moving an electron between blocks is skipped
        wf = CIWaveFunction(4, 2, {(1, 3): 0.9, (3, 4): 0.1},
                            [("a", 1, 2), ("b", 1, 2)])
        mats = [np.array([[1.0], [0.0]]), np.array([[1.0], [0.0]])]
        bsp = blocked_point(wf, mats)
        assert abs(blocked_f(bsp, wf) - 0.9) < 1e-15


class TestBlockedAssemble:
    def test_single_block_reduces_to_general(self):
        wf = random_ci(5, 2, 6, seed=13)
        wf = CIWaveFunction(5, 2, wf.terms, [("a", 1, 5)])
        mat = qr_orthonormalize(RNG.standard_normal((5, 2)))
        bsp = blocked_point(wf, [mat])
        general = assemble_system(StiefelPoint(mat), wf)
        system = blocked_assemble(bsp, wf)
        assert np.max(np.abs(general.jacobian - system.jacobian[0])) < 1e-14
        h4 = general.hessian.reshape(5, 2, 5, 2)
        assert np.max(np.abs(h4 - system.hessian[(0, 0)])) < 1e-14

    def test_cross_block_is_outer_product_of_gradients(self):
        # two-term wave function over two 2-orbital blocks
        wf = CIWaveFunction(4, 2, {(1, 3): 0.8, (2, 4): 0.6},
                            [("a", 1, 2), ("b", 1, 2)])
        theta, phi = 0.4, -0.3
        mats = [np.array([[math.cos(theta)], [math.sin(theta)]]),
                np.array([[math.cos(phi)], [math.sin(phi)]])]
        bsp = blocked_point(wf, mats)
        system = blocked_assemble(bsp, wf)
        # by hand: F-blocks and G-blocks of each term, outer products summed
        g1 = {(1, 3): np.array([[1.0], [0.0]]), (2, 4): np.array([[0.0], [1.0]])}
        g2 = g1
        expected = np.zeros((2, 1, 2, 1))
        for occ, c in wf.terms.items():
            expected += c * np.einsum("pq,rs->pqrs", g1[occ], g2[occ])
        pi1 = np.eye(2) - mats[0] @ mats[0].T
        expected = np.einsum("pt,tqrs->pqrs", pi1, expected)
        assert np.max(np.abs(system.hessian[(0, 1)] - expected)) < 1e-14

    def test_two_irrep_agreement_with_general(self):
        cisd = random_cisd((3, 2), (2, 1), seed=17, amplitude=0.15)
        wf = expand_cisd(cisd)
        bsp = restricted_point(wf, random_mats((3, 2), (2, 1), RNG))
        general = assemble_system(bsp.global_point(), wf)
        system = blocked_assemble(bsp, wf)
        assert compare_blocked_to_global(general, system, bsp, wf) < 1e-12


class TestCISDPath:
    def test_reference_only(self):
        cisd = CISDWaveFunction((3, 2), (2, 1), c0=0.8)
        wf = expand_cisd(cisd)
        mats = random_mats((3, 2), (2, 1), RNG)
        bsp = restricted_point(wf, mats)
        f0 = [np.linalg.det(m[:n, :]) for m, n in zip(mats, (2, 1))]
        assert abs(cisd_f(bsp, cisd) - 0.8 * f0[0] ** 2 * f0[1] ** 2) < 1e-14

    def test_single_same_irrep_double_contribution(self):
        # one double in irrep 1: 2 * F0 * C * F_double times the other
        # irreps' squared reference minors
        cisd = CISDWaveFunction((4, 2), (2, 1), c0=0.9,
                                doubles_same={(1, 1, 2, 3, 4): 0.2})
        wf = expand_cisd(cisd)
        mats = random_mats((4, 2), (2, 1), RNG)
        bsp = restricted_point(wf, mats)
        f0_1 = np.linalg.det(mats[0][:2, :])
        f0_2 = mats[1][0, 0]
        f_d = np.linalg.det(mats[0][[2, 3], :])
        expected = 0.9 * f0_1 ** 2 * f0_2 ** 2 + f0_2 ** 2 * (2 * f0_1 * 0.2 * f_d)
        assert abs(cisd_f(bsp, cisd) - expected) < 1e-14

    def test_f_matches_expansion(self):
        cisd = random_cisd((3, 2), (2, 1), seed=29, amplitude=0.2)
        wf = expand_cisd(cisd)
        bsp = restricted_point(wf, random_mats((3, 2), (2, 1), RNG))
        assert abs(cisd_f(bsp, cisd) - blocked_f(bsp, wf)) < 1e-12

    def test_reference_point_is_critical_without_excitations(self):
        cisd = CISDWaveFunction((3, 2), (2, 1), c0=1.0)
        refs = [StiefelPoint.from_occupation(d, tuple(range(1, n + 1)))
                for d, n in zip((3, 2), (2, 1))]
        bsp = BlockedStiefelPoint(tuple(refs), (("s", 1), ("s", 2)))
        system = cisd_assemble(bsp, cisd)
        assert system.grad_norm() < 1e-14

    @pytest.mark.parametrize("dims,nocc,seed", [
        ((3, 2), (2, 1), 17),
        ((5, 4), (2, 2), 21),
        ((4, 3, 2), (2, 1, 1), 33),
    ])
    def test_assemble_matches_folded_general(self, dims, nocc, seed):
        cisd = random_cisd(dims, nocc, seed=seed, amplitude=0.12)
        wf = expand_cisd(cisd)
        rng = np.random.default_rng(seed)
        bsp = restricted_point(wf, random_mats(dims, nocc, rng))
        folded = fold_blocked_system(blocked_assemble(bsp, wf), len(dims))
        fast = cisd_assemble(bsp, cisd)
        assert abs(folded.f_value - fast.f_value) < 1e-12
        for g in range(len(dims)):
            assert np.max(np.abs(folded.jacobian[g] - fast.jacobian[g])) < 1e-12
            for g2 in range(len(dims)):
                assert np.max(np.abs(folded.hessian[(g, g2)]
                                     - fast.hessian[(g, g2)])) < 1e-12

    def test_merge_split_invariance(self):
        cisd = random_cisd((3, 2), (2, 1), seed=39, amplitude=0.2)
        mats = random_mats((3, 2), (2, 1), RNG)
        folded = {}
        for split in (0.0, 0.5, 1.0):
            wf = expand_cisd(cisd, mixed_split=split)
            bsp = restricted_point(wf, mats)
            folded[split] = fold_blocked_system(blocked_assemble(bsp, wf), 2)
        for split in (0.0, 1.0):
            for g in range(2):
                assert np.max(np.abs(folded[split].jacobian[g]
                                     - folded[0.5].jacobian[g])) < 1e-12
                for g2 in range(2):
                    assert np.max(np.abs(folded[split].hessian[(g, g2)]
                                         - folded[0.5].hessian[(g, g2)])) < 1e-12

    def test_matches_orbital_rotation_system_at_reference(self):
        # at the reference point of a one-irrep problem the folded CISD
        # system carries the same lower-block matrices as the
        # rotation-parameter method on the expanded wave function
        cisd = random_cisd((4,), (1,), seed=5, amplitude=0.1)
        wf = expand_cisd(cisd).normalized()
        refs = [StiefelPoint.from_occupation(4, (1,))]
        bsp = BlockedStiefelPoint(tuple(refs), (("s", 1),))
        scaled = CISDWaveFunction(cisd.block_dims, cisd.n_per_irrep,
                                  cisd.c0 / expand_cisd(cisd).norm(),
                                  {k: v / expand_cisd(cisd).norm()
                                   for k, v in cisd.singles.items()},
                                  cisd.doubles_same,
                                  {k: v / expand_cisd(cisd).norm()
                                   for k, v in cisd.doubles_mixed.items()})
        fast = cisd_assemble(bsp, scaled)
        current, _ = relabel_reference(wf, wf.dominant())
        rot = build_jac_hess(current, tuple(range(1, wf.n_electrons + 1)))
        # alpha-orbital rotations of irrep 1 sit in rows 2..4 of the fold;
        # the rotation jacobian interleaves alpha and beta, equal halves
        jac_fold = fast.jacobian[0][1:, 0]
        jac_rot_alpha = rot.jacobian[:3, 0]
        assert np.max(np.abs(jac_fold - jac_rot_alpha)) < 1e-12

    def test_kernel_count_bounded_and_below_general(self):
        cisd = random_cisd((5, 4), (2, 2), seed=21, amplitude=0.12)
        wf = expand_cisd(cisd)
        bsp = restricted_point(wf, random_mats((5, 4), (2, 2), RNG))
        ctr_fast = EvalCounters()
        cisd_assemble(bsp, cisd, ctr_fast)
        m, n = wf.n_spin_orbitals, wf.n_electrons
        n_virt = m - n
        table_bound = ((1 + n * n_virt + n * (n - 1) * n_virt * (n_virt - 1) // 4)
                       * (1 + n * m + (n * m) ** 2))
        general_cost = wf.n_terms * (1 + n * m + (n * m) ** 2)
        assert ctr_fast.n_det_evals <= table_bound
        assert ctr_fast.n_det_evals < general_cost

    def test_optimize_cisd_matches_general_iterates(self):
        cisd = random_cisd((3, 2), (2, 1), seed=51, amplitude=0.1)
        wf = expand_cisd(cisd).normalized()
        refs = [StiefelPoint.from_occupation(d, tuple(range(1, n + 1)))
                for d, n in zip((3, 2), (2, 1))]
        bsp = BlockedStiefelPoint(tuple(refs), (("s", 1), ("s", 2)))
        opts = ToleranceOptions(tol_grad=1e-12, max_iter=6)
        fast = optimize_cisd(bsp, cisd, opts)
        general = optimize(dominant_start(wf), wf, opts)
        assert fast.converged and general.converged
        n_cmp = min(len(fast.points), len(general.points))
        for k in range(n_cmp):
            blocks = list(fast.points[k].blocks)
            spin_resolved = BlockedStiefelPoint(
                tuple(blocks + blocks),
                tuple([("a", 1), ("a", 2), ("b", 1), ("b", 2)]))
            d = subspace_distance(spin_resolved.global_point(), general.points[k])
            assert d < 1e-8


class TestFreezeCore:
    def test_no_frozen_is_identity(self):
        wf = random_ci(5, 2, 6, seed=1)
        p = dominant_start(wf)
        red = freeze_core(wf, p, [])
        assert red.wavefunction is wf and red.point is p

    def test_reduced_problem_same_optimum(self):
        base = random_ci(5, 2, 8, seed=9)
        terms = {}
        for occ, c in base.terms.items():
            mapped = tuple(p if p < 2 else p + 1 for p in occ)
            terms[tuple(sorted(mapped + (2,)))] = c
        wf = CIWaveFunction(6, 3, terms)
        start = dominant_start(wf)
        red = freeze_core(wf, start, [2])
        assert red.wavefunction.n_spin_orbitals == 5
        assert red.wavefunction.n_electrons == 2
        full = optimize(start, wf)
        reduced = optimize(red.point, red.wavefunction)
        assert abs(abs(full.f_final) - abs(reduced.f_final)) < 1e-10
        # lifting the reduced optimum reproduces the full overlap
        lifted = red.lift(reduced.final_point)
        assert abs(abs(overlap_f(lifted.u, wf)) - abs(full.f_final)) < 1e-10

    def test_signed_overlap_preserved_under_lift(self):
        base = random_ci(5, 2, 8, seed=9)
        terms = {}
        for occ, c in base.terms.items():
            mapped = tuple(p if p < 3 else p + 1 for p in occ)
            terms[tuple(sorted(mapped + (3,)))] = c
        wf = CIWaveFunction(6, 3, terms)
        red = freeze_core(wf, dominant_start(wf), [3])
        for seed in range(3):
            rng = np.random.default_rng(seed)
            ur = StiefelPoint.random(5, 2, rng)
            assert abs(overlap_f(red.lift(ur).u, wf)
                       - overlap_f(ur.u, red.wavefunction)) < 1e-13

    def test_correlated_orbital_rejected(self):
        wf = random_ci(5, 2, 6, seed=2)
        with pytest.raises(ValueError, match="not occupied"):
            freeze_core(wf, dominant_start(wf), [1])
