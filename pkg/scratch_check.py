"""Scratch verification of derived conventions (not part of the package)."""
import numpy as np

from grassdet.geometry import (StiefelPoint, geodesic_update, subspace_distance,
                               thouless_to_stiefel, orthonormal_complement_projector)
from grassdet.kernels import (EvalCounters, compute_F, compute_G, compute_htilde_full,
                              overlap_f, overlap_gradient, adjugate, minor,
                              relation_F_from_G, relation_F2_from_G, relation_G_from_H)
from grassdet.newton import assemble_system, solve_horizontal, optimize, ToleranceOptions
from grassdet.models import random_ci, generate_h2_model, h2_angle_point, hubbard_dimer_fci, HubbardDimerSpec, dominant_start

rng = np.random.default_rng(7)

# --- 1. gradient of f vs FD
M, n = 6, 3
wf = random_ci(M, n, 15, seed=3)
U = StiefelPoint.random(M, n, rng)
g = overlap_gradient(U.u, wf)
h = 1e-5
fd = np.zeros((M, n))
for p in range(M):
    for q in range(n):
        up = U.u.copy(); up[p, q] += h
        um = U.u.copy(); um[p, q] -= h
        fp = sum(c * np.linalg.det(minor(up, occ)) for occ, c in wf.terms.items())
        fm = sum(c * np.linalg.det(minor(um, occ)) for occ, c in wf.terms.items())
        fd[p, q] = (fp - fm) / (2 * h)
print("grad vs fd:", np.max(np.abs(g - fd)))

# --- 2. naive vs fast G and Htilde
occ = list(wf.terms)[0]
c1, c2 = EvalCounters(), EvalCounters()
g_fast = compute_G(U.u, occ, c1)
g_naive = compute_G(U.u, occ, c2, naive=True)
print("G fast vs naive:", np.max(np.abs(g_fast - g_naive)), "counts:", c1.n_det_evals, c2.n_det_evals)
t_fast = compute_htilde_full(U.u, occ)
t_naive = compute_htilde_full(U.u, occ, naive=True)
print("Htilde fast vs naive:", np.max(np.abs(t_fast - t_naive)))

# --- 3. Newton system vs FD of projected gradient map
sys_ = assemble_system(U, wf)
eta_test = rng.standard_normal((M, n))
eta_test -= U.u @ (U.u.T @ eta_test)
def proj_grad(x):
    pi = np.eye(M) - x @ np.linalg.inv(x.T @ x) @ x.T
    return pi @ overlap_gradient(x, wf)
lhs_fd = (proj_grad(U.u + h * eta_test) - proj_grad(U.u - h * eta_test)) / (2 * h)
pi0 = orthonormal_complement_projector(U)
lhs_fd = pi0 @ lhs_fd
lhs_an = (sys_.hessian @ eta_test.ravel()).reshape(M, n)
print("Hessian-vec vs fd:", np.max(np.abs(lhs_fd - lhs_an)) / max(1, np.max(np.abs(lhs_an))))
jac_fd = pi0 @ fd
print("Jacobian vs fd:", np.max(np.abs(jac_fd - sys_.jacobian)))

# --- 4. geodesic vs thouless equivalence at reference
U0 = StiefelPoint.from_occupation(M, tuple(range(1, n + 1)))
K = rng.standard_normal((M - n, n)) * 0.3
eta = np.zeros((M, n)); eta[n:, :] = K
p_geo = geodesic_update(U0, eta)
p_thou = thouless_to_stiefel(K, U0)
print("geodesic vs thouless:", subspace_distance(p_geo, p_thou))

# --- 5. H2 model surface
wfh = generate_h2_model(0.9)
for ka, kb in [(0.3, -0.2), (1.0, 0.5)]:
    pt = h2_angle_point(ka, kb)
    f = overlap_f(pt, wfh)
    ref = 0.9 * np.cos(ka) * np.cos(kb) + np.sqrt(1 - 0.81) * np.sin(ka) * np.sin(kb)
    print("h2 surface:", abs(f - ref))

# --- 6. Newton on H2 from perturbed start
rep = optimize(h2_angle_point(0.05, -0.03), wfh, ToleranceOptions(tol_grad=1e-10))
print("h2 newton:", rep.converged, rep.n_iterations, rep.f_final, rep.character, "degen:", rep.degenerate)

# degenerate c0 = 1/sqrt2
wfd = generate_h2_model(1 / np.sqrt(2))
repd = optimize(h2_angle_point(0.05, -0.03), wfd, ToleranceOptions(tol_grad=1e-10))
print("h2 degenerate:", repd.converged, repd.degenerate, repd.f_final, repd.character)

# --- 7. Hubbard oracle check at u/t = 1
wfhub = hubbard_dimer_fci(HubbardDimerSpec(t=1.0, u=1.0))
print("hubbard terms:", wfhub.terms)
rep2 = optimize(dominant_start(wfhub), wfhub, ToleranceOptions())
print("hubbard newton:", rep2.converged, rep2.f_final, rep2.n_iterations)
# closed-form 2-angle max by dense grid
c13 = wfhub.coefficient((1, 3)); c14 = wfhub.coefficient((1, 4))
c23 = wfhub.coefficient((2, 3)); c24 = wfhub.coefficient((2, 4))
ka = np.linspace(-np.pi / 2, np.pi / 2, 2001)
A, B = np.meshgrid(ka, ka, indexing="ij")
F = (c13 * np.cos(A) * np.cos(B) + c14 * np.cos(A) * np.sin(B)
     + c23 * np.sin(A) * np.cos(B) + c24 * np.sin(A) * np.sin(B))
print("grid max:", np.abs(F).max(), "vs newton:", abs(rep2.f_final))

# --- 8. appendix relations
g0 = compute_G(U.u, tuple(range(1, n + 1)))
ht0 = compute_htilde_full(U.u, tuple(range(1, n + 1)))
ok_f = ok_f2 = ok_g = 0.0
for i in range(1, n + 1):
    for a in range(n + 1, M + 1):
        occ_s = tuple(sorted([x for x in range(1, n + 1) if x != i] + [a]))
        direct = compute_F(U.u, occ_s)
        rel = relation_F_from_G(U.u, g0, i, a)
        ok_f = max(ok_f, abs(direct - rel))
        g_direct = compute_G(U.u, occ_s)
        g_rel = relation_G_from_H(U.u, g0, ht0, i, a)
        ok_g = max(ok_g, np.max(np.abs(g_direct - g_rel)))
        for j in range(1, n + 1):
            for b in range(n + 1, M + 1):
                if j == i or b == a:
                    continue
                occ_d = tuple(sorted([x for x in range(1, n + 1) if x not in (i, j)] + [a, b]))
                occ_jb = tuple(sorted([x for x in range(1, n + 1) if x != j] + [b]))
                g_jb = compute_G(U.u, occ_jb)
                direct_d = compute_F(U.u, occ_d)
                rel_d = relation_F2_from_G(U.u, g_jb, i, a, b)
                ok_f2 = max(ok_f2, abs(direct_d - rel_d))
print("relation F:", ok_f, "relation F2:", ok_f2, "relation G:", ok_g)
