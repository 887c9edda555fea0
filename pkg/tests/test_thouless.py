import math

import numpy as np
import pytest

from grassdet.geometry import StiefelPoint, subspace_distance
from grassdet.kernels import EvalCounters
from grassdet.models import dominant_start, random_ci
from grassdet.newton import ToleranceOptions, assemble_system, optimize
from grassdet.thouless import (
    build_jac_hess,
    optimize_thouless,
    relabel_reference,
    rotation_matrix,
    transform_ci,
)
from grassdet.wavefunction import CIWaveFunction

from helpers import raw_overlap

RNG = np.random.default_rng(55)


class TestBuildJacHess:
    def test_reference_only(self):
        wf = CIWaveFunction(5, 2, {(1, 2): 0.7})
        system = build_jac_hess(wf, (1, 2))
        assert np.all(system.jacobian == 0.0)
        assert np.allclose(system.hessian, -0.7 * np.eye(6))

    def test_single_coefficient_phase(self):
        # n = 1: jacobian entry is (-1)^(1+1) C = +C
        wf = CIWaveFunction(3, 1, {(1,): 0.9, (2,): 0.1})
        system = build_jac_hess(wf, (1,))
        assert abs(system.jacobian[0, 0] - 0.1) < 1e-15

    def test_hessian_symmetric(self):
        wf = random_ci(6, 3, 18, seed=31)
        wf2, _ = relabel_reference(wf, wf.dominant())
        system = build_jac_hess(wf2, (1, 2, 3))
        assert np.max(np.abs(system.hessian - system.hessian.T)) == 0.0

    def test_pure_singles_newton_step(self):
        # with reference + singles only, H = -C0 I and the step solves
        # (-C0 I) K = -J exactly
        m, n = 5, 2
        terms = {(1, 2): 0.8, (1, 3): 0.1, (2, 4): -0.05}
        wf = CIWaveFunction(m, n, terms)
        system = build_jac_hess(wf, (1, 2))
        assert np.allclose(system.hessian, -0.8 * np.eye(6))
        k = np.linalg.solve(system.hessian, -system.jacobian.ravel())
        assert np.allclose(k, system.jacobian.ravel() / 0.8)

    def test_requires_canonical_reference(self):
        wf = CIWaveFunction(4, 2, {(2, 3): 1.0})
        with pytest.raises(ValueError):
            build_jac_hess(wf, (2, 3))

    def test_jac_equals_lower_block_of_projected_system(self):
        wf = random_ci(6, 3, 14, seed=9)
        current, _ = relabel_reference(wf, wf.dominant())
        ref_point = StiefelPoint.from_occupation(6, (1, 2, 3))
        system_a = assemble_system(ref_point, current)
        system_t = build_jac_hess(current, (1, 2, 3))
        assert np.max(np.abs(system_a.jacobian[3:, :] - system_t.jacobian)) == 0.0
        h4 = system_a.hessian.reshape(6, 3, 6, 3)
        sub = h4[3:, :, 3:, :].reshape(9, 9)
        assert np.max(np.abs(sub - system_t.hessian)) == 0.0
        assert abs(np.linalg.norm(system_t.jacobian)
                   - np.linalg.norm(system_a.jacobian)) < 1e-14


class TestTransform:
    def test_identity(self):
        wf = random_ci(5, 2, 6, seed=7)
        out = transform_ci(wf, np.eye(5))
        assert set(out.terms) == set(wf.terms)
        for occ, c in wf.terms.items():
            assert abs(out.terms[occ] - c) < 1e-15

    def test_two_orbital_rotation(self):
        # coefficients of an n = 1 state rotate like the orbitals
        theta = 0.3
        wf = CIWaveFunction(2, 1, {(1,): 0.6, (2,): 0.8})
        u_full = rotation_matrix(np.array([[theta]]), 1)
        out = transform_ci(wf, u_full)
        c, s = math.cos(theta), math.sin(theta)
        assert abs(out.coefficient((1,)) - (c * 0.6 + s * 0.8)) < 1e-14
        assert abs(out.coefficient((2,)) - (-s * 0.6 + c * 0.8)) < 1e-14

    def test_norm_preserved(self):
        wf = random_ci(6, 3, 12, seed=21)
        k = RNG.standard_normal((3, 3)) * 0.4
        out = transform_ci(wf, rotation_matrix(k, 3))
        assert abs(out.norm() - wf.norm()) < 1e-12

    def test_round_trip_is_identity(self):
        wf = random_ci(6, 3, 12, seed=22)
        k = RNG.standard_normal((3, 3)) * 0.4
        u_full = rotation_matrix(k, 3)
        back = transform_ci(transform_ci(wf, u_full), u_full.T)
        for occ, c in wf.terms.items():
            assert abs(back.coefficient(occ) - c) < 1e-12

    def test_overlap_consistency(self):
        # <Phi'_ref | Psi> computed two ways: transform, or minor of U_full
        wf = random_ci(5, 2, 8, seed=2)
        k = RNG.standard_normal((3, 2)) * 0.3
        u_full = rotation_matrix(k, 2)
        out = transform_ci(wf, u_full)
        direct = raw_overlap(u_full[:, :2], wf)
        assert abs(out.coefficient((1, 2)) - direct) < 1e-13

    def test_size_guard(self):
        wf = CIWaveFunction(18, 2, {(1, 2): 1.0})
        with pytest.raises(ValueError, match="force"):
            transform_ci(wf, np.eye(18))

    def test_naive_count(self):
        wf = random_ci(6, 3, 5, seed=13)
        ctr = EvalCounters()
        transform_ci(wf, np.eye(6), ctr, naive=True)
        assert ctr.n_det_evals == math.comb(6, 3) ** 2


class TestOptimizeThouless:
    def test_zero_step_at_critical_point(self):
        wf = CIWaveFunction(4, 2, {(1, 2): 0.9, (3, 4): math.sqrt(1 - 0.81)})
        report = optimize_thouless(wf, (1, 2), ToleranceOptions())
        assert report.converged and report.n_iterations == 1

    def test_iterates_match_fixed_basis_method(self):
        opts = ToleranceOptions(tol_grad=1e-13, tol_step=1e-14, max_iter=4)
        for seed in (1, 2, 11):
            wf = random_ci(6, 3, 12, seed=seed)
            report_a = optimize(dominant_start(wf), wf, opts)
            report_t = optimize_thouless(wf, wf.dominant(), opts)
            for pa, pt in zip(report_a.points, report_t.points):
                assert subspace_distance(pa, pt) < 1e-10

    def test_per_iteration_determinant_count(self):
        wf = random_ci(6, 3, 10, seed=41)
        opts = ToleranceOptions(tol_grad=1e-13, tol_step=1e-15, max_iter=3, naive=True)
        report = optimize_thouless(wf, wf.dominant(), opts)
        counts = [rec.n_det_evals for rec in report.iterations]
        deltas = [counts[0]] + [b - a for a, b in zip(counts, counts[1:])]
        full = math.comb(6, 3) ** 2
        assert all(d == full for d in deltas)

    def test_orbital_guard(self):
        wf = CIWaveFunction(18, 2, {(1, 2): 1.0})
        with pytest.raises(ValueError, match="force"):
            optimize_thouless(wf, (1, 2))
