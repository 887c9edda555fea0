import math

import numpy as np
import pytest

from grassdet.geometry import StiefelPoint
from grassdet.kernels import (
    EvalCounters,
    compute_F,
    compute_G,
    compute_H,
    compute_htilde_full,
    minor,
    overlap_f,
    overlap_gradient,
    relation_F2_from_G,
    relation_F_from_G,
    relation_G_from_H,
)
from grassdet.models import generate_h2_model, h2_angle_point, random_ci
from grassdet.wavefunction import CIWaveFunction

from helpers import fd_gradient, fd_second, raw_overlap

RNG = np.random.default_rng(77)


def reference_point(m, n):
    return StiefelPoint.from_occupation(m, tuple(range(1, n + 1)))


class TestMinorAndF:
    def test_minor_identity(self):
        p = reference_point(5, 3)
        assert np.array_equal(minor(p, (1, 2, 3)), np.eye(3))

    def test_minor_zero_row(self):
        p = reference_point(5, 3)
        sub = minor(p, (1, 2, 5))
        assert np.all(sub[2, :] == 0.0)

    def test_minor_selects_rows(self):
        u = RNG.standard_normal((4, 2))
        assert np.array_equal(minor(u, (2, 4)), u[[1, 3], :])

    def test_f_reference(self):
        assert compute_F(reference_point(5, 3), (1, 2, 3)) == 1.0

    def test_f_zero_for_unoccupied_row(self):
        assert compute_F(reference_point(5, 3), (1, 2, 4)) == 0.0

    def test_f_one_by_one(self):
        theta = 0.6
        u = np.array([[np.cos(theta)], [np.sin(theta)]])
        assert abs(compute_F(u, (2,)) - np.sin(theta)) < 1e-15

    def test_counter_increments(self):
        ctr = EvalCounters()
        compute_F(RNG.standard_normal((4, 2)), (1, 3), ctr)
        compute_F(RNG.standard_normal((4, 2)), (2, 4), ctr)
        assert ctr.n_det_evals == 2


class TestG:
    def test_reference_structure(self):
        # at U = (I; 0) the only nonzero entries sit on occupied rows
        p = reference_point(5, 2)
        g = compute_G(p, (1, 2))
        assert np.allclose(g[:2, :], np.eye(2))
        assert np.all(g[2:, :] == 0.0)

    def test_enumerated_2x2(self):
        u = RNG.standard_normal((4, 2))
        occ = (2, 3)
        g = compute_G(u, occ)
        for p in range(1, 5):
            for q in (1, 2):
                b = u[[1, 2], :].copy()
                b[:, q - 1] = [1.0 if x == p else 0.0 for x in occ]
                assert abs(g[p - 1, q - 1] - np.linalg.det(b)) < 1e-13

    def test_cramer_identity(self):
        # contracting G with U's own column q over rows returns F
        u = StiefelPoint.random(6, 3, RNG).u
        occ = (1, 3, 5)
        f = compute_F(u, occ)
        g = compute_G(u, occ)
        for q in range(3):
            contracted = float(u[:, q] @ g[:, q])
            assert abs(contracted - f) < 1e-13
        # contraction against a different column vanishes (repeated column)
        assert abs(float(u[:, 0] @ g[:, 1])) < 1e-13

    def test_matches_finite_differences(self):
        u = StiefelPoint.random(5, 2, RNG).u
        occ = (2, 4)
        wf = CIWaveFunction(5, 2, {occ: 1.0})
        g = compute_G(u, occ)
        fd = fd_gradient(u, wf)
        assert np.max(np.abs(g - fd)) < 1e-9

    def test_naive_matches_fast_and_counts(self):
        u = StiefelPoint.random(6, 3, RNG).u
        occ = (1, 4, 6)
        c_fast, c_naive = EvalCounters(), EvalCounters()
        g_fast = compute_G(u, occ, c_fast)
        g_naive = compute_G(u, occ, c_naive, naive=True)
        assert np.max(np.abs(g_fast - g_naive)) < 1e-13
        assert c_naive.n_det_evals == 18  # n * M
        assert c_fast.n_det_evals == 1

    def test_singular_minor_fallback(self):
        u = reference_point(5, 2).u  # minors with rows off the identity are singular
        occ = (1, 4)
        g_fast = compute_G(u, occ)
        g_naive = compute_G(u, occ, naive=True)
        assert np.max(np.abs(g_fast - g_naive)) < 1e-14


class TestH:
    def test_reference_double_replacement(self):
        p = reference_point(6, 3)
        # replacing columns q, s by the unit vectors already there gives 1
        assert compute_H(p, (1, 2, 3), 1, 1, 2, 2) == 1.0

    def test_diagonal_rule(self):
        u = StiefelPoint.random(6, 3, RNG).u
        occ = (2, 3, 5)
        f = compute_F(u, occ)
        t = compute_htilde_full(u, occ)
        for q in range(3):
            block = t[:, q, :, q]
            assert np.max(np.abs(block + f * np.eye(6))) < 1e-13

    def test_symmetry_pair_swap(self):
        # H_{qs}^{pr} = H_{sq}^{rp}
        u = StiefelPoint.random(6, 3, RNG).u
        occ = (1, 3, 6)
        t = compute_htilde_full(u, occ)
        assert np.max(np.abs(t - t.transpose(2, 3, 0, 1))) < 1e-13

    def test_antisymmetry_in_replacements(self):
        # swapping the two inserted unit vectors flips the sign (s != q)
        u = StiefelPoint.random(6, 3, RNG).u
        occ = (1, 3, 6)
        for (p, q, r, s) in [(1, 1, 3, 2), (3, 2, 6, 3), (6, 1, 1, 3)]:
            plus = compute_H(u, occ, p, q, r, s)
            swapped = compute_H(u, occ, r, q, p, s)
            assert abs(plus + swapped) < 1e-13

    def test_matches_second_finite_differences(self):
        u = StiefelPoint.random(5, 2, RNG).u
        occ = (2, 4)
        wf = CIWaveFunction(5, 2, {occ: 1.0})
        for (p, q, r, s) in [(1, 1, 3, 2), (2, 1, 4, 2), (4, 2, 2, 1)]:
            h_an = compute_H(u, occ, p, q, r, s)
            h_fd = fd_second(u, wf, p - 1, q - 1, r - 1, s - 1)
            assert abs(h_an - h_fd) < 1e-6

    def test_naive_matches_fast_and_counts(self):
        u = StiefelPoint.random(5, 2, RNG).u
        occ = (2, 5)
        c_naive = EvalCounters()
        t_fast = compute_htilde_full(u, occ)
        t_naive = compute_htilde_full(u, occ, c_naive, naive=True, f_value=compute_F(u, occ))
        assert np.max(np.abs(t_fast - t_naive)) < 1e-13
        assert c_naive.n_det_evals == 100  # (n M)^2


class TestOverlap:
    def test_single_determinant(self):
        wf = CIWaveFunction(5, 3, {(1, 2, 3): 1.0})
        assert overlap_f(reference_point(5, 3), wf) == 1.0

    def test_h2_closed_form(self):
        c0 = 0.85
        wf = generate_h2_model(c0)
        for ka, kb in [(0.2, -0.4), (1.1, 0.3), (-0.7, 0.9)]:
            f = overlap_f(h2_angle_point(ka, kb), wf)
            ref = c0 * math.cos(ka) * math.cos(kb) + math.sqrt(1 - c0 * c0) * math.sin(ka) * math.sin(kb)
            assert abs(f - ref) < 1e-14

    def test_dominant_determinant_start(self):
        wf = random_ci(6, 3, 10, seed=12)
        occ = wf.dominant()
        p = StiefelPoint.from_occupation(6, occ)
        assert abs(overlap_f(p, wf) - wf.coefficient(occ) / wf.norm()) < 1e-14

    def test_unnormalized_input_divided_by_norm(self):
        wf = CIWaveFunction(4, 2, {(1, 2): 3.0, (3, 4): 4.0})
        p = StiefelPoint.from_occupation(4, (1, 2))
        assert abs(overlap_f(p, wf) - 0.6) < 1e-14

    def test_abs_invariant_under_right_rotation(self):
        wf = random_ci(6, 3, 15, seed=5)
        p = StiefelPoint.random(6, 3, RNG)
        q, _ = np.linalg.qr(RNG.standard_normal((3, 3)))
        f1 = overlap_f(p, wf)
        f2 = overlap_f(StiefelPoint(p.u @ q), wf)
        assert abs(abs(f1) - abs(f2)) < 1e-12

    def test_gradient_matches_finite_differences(self):
        wf = random_ci(6, 3, 12, seed=3)
        u = StiefelPoint.random(6, 3, RNG).u
        g = overlap_gradient(u, wf)
        assert np.max(np.abs(g - fd_gradient(u, wf))) < 1e-9

    def test_block_factorization(self):
        # block-diagonal U: F of a split occupation is the product of blocks
        rng = np.random.default_rng(8)
        ua = np.linalg.qr(rng.standard_normal((3, 2)))[0]
        ub = np.linalg.qr(rng.standard_normal((3, 1)))[0]
        u = np.zeros((6, 3))
        u[:3, :2] = ua
        u[3:, 2:] = ub
        occ = (1, 3, 5)  # rows 1,3 in block A, row 5 in block B
        f_full = compute_F(u, occ)
        f_a = np.linalg.det(ua[[0, 2], :])
        f_b = ub[1, 0]
        assert abs(f_full - f_a * f_b) < 1e-13


class TestTableOneCounts:
    def test_general_row_exact(self):
        # one full Jacobian + Hessian kernel pass per term: 1 + nM + (nM)^2
        m, n = 6, 3
        u = StiefelPoint.random(m, n, RNG).u
        wf = random_ci(m, n, 7, seed=4)
        ctr = EvalCounters()
        for occ in wf.terms:
            f = compute_F(u, occ, ctr)
            compute_G(u, occ, ctr, naive=True)
            compute_htilde_full(u, occ, ctr, naive=True, f_value=f)
        per_term = 1 + n * m + (n * m) ** 2
        assert ctr.n_det_evals == wf.n_terms * per_term


class TestKernelBundle:
    def test_fields_and_lazy_tensor(self):
        from grassdet.kernels import DeterminantKernels

        u = StiefelPoint.random(6, 3, RNG).u
        occ = (2, 3, 5)
        ctr = EvalCounters()
        bundle = DeterminantKernels(u, occ, counters=ctr)
        assert abs(bundle.F - compute_F(u, occ)) < 1e-15
        assert np.max(np.abs(bundle.G - compute_G(u, occ))) < 1e-15
        evals_before_h = ctr.n_det_evals
        t = bundle.htilde()
        assert np.max(np.abs(t - compute_htilde_full(u, occ))) < 1e-15
        assert ctr.n_det_evals > evals_before_h  # built on first request
        assert bundle.htilde() is t  # cached afterwards

    def test_counter_rejects_negative(self):
        ctr = EvalCounters()
        with pytest.raises(ValueError):
            ctr.add(-1)


class TestAppendixRelations:
    def setup_method(self):
        self.m, self.n = 6, 3
        self.u = StiefelPoint.random(self.m, self.n, np.random.default_rng(19)).u
        self.ref = tuple(range(1, self.n + 1))
        self.g0 = compute_G(self.u, self.ref)
        self.ht0 = compute_htilde_full(self.u, self.ref)

    @staticmethod
    def single(n, i, a):
        return tuple(sorted([x for x in range(1, n + 1) if x != i] + [a]))

    def test_zero_when_virtual_row_vanishes(self):
        p = reference_point(self.m, self.n)
        g0 = compute_G(p, self.ref)
        for i in range(1, self.n + 1):
            for a in range(self.n + 1, self.m + 1):
                assert relation_F_from_G(p, g0, i, a) == 0.0

    def test_single_excitation_f(self):
        for i in range(1, self.n + 1):
            for a in range(self.n + 1, self.m + 1):
                direct = compute_F(self.u, self.single(self.n, i, a))
                assert abs(relation_F_from_G(self.u, self.g0, i, a) - direct) < 1e-13

    def test_double_excitation_f(self):
        for i in range(1, self.n + 1):
            for j in range(i + 1, self.n + 1):
                for a in range(self.n + 1, self.m + 1):
                    for b in range(self.n + 1, self.m + 1):
                        if a == b:
                            continue
                        occ = tuple(sorted([x for x in range(1, self.n + 1)
                                            if x not in (i, j)] + [a, b]))
                        g_jb = compute_G(self.u, self.single(self.n, j, b))
                        direct = compute_F(self.u, occ)
                        rel = relation_F2_from_G(self.u, g_jb, i, j, a, b)
                        assert abs(rel - direct) < 1e-13

    def test_single_excitation_g(self):
        for i in range(1, self.n + 1):
            for a in range(self.n + 1, self.m + 1):
                direct = compute_G(self.u, self.single(self.n, i, a))
                rel = relation_G_from_H(self.u, self.g0, self.ht0, i, a)
                assert np.max(np.abs(rel - direct)) < 1e-13
                # the p = a rows come straight from the reference G
                assert abs(rel[a - 1, 0]
                           - (-1.0) ** (i + self.n) * self.g0[i - 1, 0]) < 1e-14

    def test_hole_order_enforced(self):
        g_jb = compute_G(self.u, self.single(self.n, 1, 5))
        with pytest.raises(ValueError):
            relation_F2_from_G(self.u, g_jb, 2, 1, 5, 4)
