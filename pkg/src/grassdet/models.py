"""Generators for verifiable external wave functions.

Everything here is solvable by hand or by dense diagonalization, so the
optimizers can be checked against independent oracles without any
electronic-structure package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .geometry import StiefelPoint
from .wavefunction import CIWaveFunction

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class HubbardDimerSpec:
    """Two-site Hubbard model at half filling (2 electrons, 4 spin orbitals).

    Site basis with alpha spin on orbitals {1, 2} and beta on {3, 4}.
    """

    t: float = 1.0
    u: float = 0.0

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("hopping t must be positive")


def generate_h2_model(c0: float) -> CIWaveFunction:
    """Two-configuration model state ``c0 |phi+ phi-bar+> + sqrt(1-c0^2) |phi- phi-bar->``.

    Orbital order: 1 = phi+ (alpha), 2 = phi- (alpha), 3 = phi+ (beta),
    4 = phi- (beta).  The reference determinant {1, 3} is the unique
    maximum-overlap determinant iff |c0| > 1/sqrt(2); at equality the
    optimum degenerates to a one-parameter family.
    """
    if abs(c0) > 1.0:
        raise ValueError("|c0| must not exceed 1")
    c2 = math.sqrt(max(0.0, 1.0 - c0 * c0))
    terms = {}
    if c0 != 0.0:
        terms[(1, 3)] = float(c0)
    if c2 != 0.0:
        terms[(2, 4)] = c2
    blocks = [("a", 1, 2), ("b", 1, 2)]
    return CIWaveFunction(4, 2, terms, blocks)


def h2_angle_point(k_alpha: float, k_beta: float) -> StiefelPoint:
    """Spin-block determinant of the two-angle family for the H2-style model."""
    ca, sa = math.cos(k_alpha), math.sin(k_alpha)
    cb, sb = math.cos(k_beta), math.sin(k_beta)
    u = np.array([[ca, 0.0], [sa, 0.0], [0.0, cb], [0.0, sb]])
    return StiefelPoint(u)


def _apply_excitation(occ: tuple, p: int, q: int):
    """c+_p c_q |occ> in ascending-storage convention; None if it vanishes."""
    if q not in occ:
        return None
    rest = [x for x in occ if x != q]
    sign = (-1) ** sum(1 for x in occ if x < q)
    if p in rest:
        return None
    sign *= (-1) ** sum(1 for x in rest if x < p)
    new = tuple(sorted(rest + [p]))
    return new, sign


def hubbard_dimer_hamiltonian(spec: HubbardDimerSpec):
    """Dense Hamiltonian in the full 2-electron determinant basis.

    Returns ``(basis, h)`` where ``basis`` lists the C(4,2) ascending
    occupations and ``h`` is the matrix in that basis.
    """
    basis = list(combinations(range(1, 5), 2))
    index = {occ: k for k, occ in enumerate(basis)}
    h = np.zeros((len(basis), len(basis)))
    hops = [(1, 2), (2, 1), (3, 4), (4, 3)]
    for k, occ in enumerate(basis):
        doubly = sum(1 for site in ((1, 3), (2, 4)) if set(site) <= set(occ))
        h[k, k] += spec.u * doubly
        for p, q in hops:
            out = _apply_excitation(occ, p, q)
            if out is not None:
                new, sign = out
                h[index[new], k] += -spec.t * sign
    return basis, h


def hubbard_dimer_eigensystem(spec: HubbardDimerSpec):
    """Ground-state (energy, coefficient vector, basis) of the dimer."""
    basis, h = hubbard_dimer_hamiltonian(spec)
    energies, vectors = np.linalg.eigh(h)
    vec = vectors[:, 0]
    k_max = int(np.argmax(np.abs(vec)))
    if vec[k_max] < 0:
        vec = -vec
    return float(energies[0]), vec, basis


def hubbard_dimer_fci(spec: HubbardDimerSpec) -> CIWaveFunction:
    """FCI ground state of the two-site Hubbard model at half filling."""
    _, vec, basis = hubbard_dimer_eigensystem(spec)
    terms = {occ: float(c) for occ, c in zip(basis, vec) if abs(c) > 1e-14}
    blocks = [("a", 1, 2), ("b", 1, 2)]
    return CIWaveFunction(4, 2, terms, blocks)


def _splitmix64(state: int):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return state, z


class SplitMix64:
    """SplitMix64 pseudo-random generator (public-domain constants).

    State update: ``s += 0x9E3779B97F4A7C15`` (mod 2^64); output mixing:
    ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
    z *= 0x94D049BB133111EB; z ^= z >> 31``.  ``uniform()`` keeps the top
    53 bits: ``(z >> 11) * 2^-53``.  Fully specified so fixtures can be
    regenerated bit-identically in any language.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_uint64(self) -> int:
        self.state, z = _splitmix64(self.state)
        return z

    def uniform(self) -> float:
        return (self.next_uint64() >> 11) * 2.0 ** -53


def random_ci(m: int, n: int, n_terms: int, seed: int) -> CIWaveFunction:
    """Reproducible pseudo-random normalized CI wave function.

    Algorithm (documented for cross-language parity): draw from
    :class:`SplitMix64` seeded with ``seed``.  Occupations are selected
    from the lexicographically ordered list of all C(m, n) ascending
    index tuples by repeated draws ``k = floor(uniform() * C(m, n))``,
    skipping duplicates, until ``n_terms`` distinct occupations are
    collected (in order of first appearance).  Each occupation then
    receives the coefficient ``2 * uniform() - 1`` (redrawn in the zero
    -probability event of an exact 0), and the coefficient vector is
    normalized.
    """
    n_full = math.comb(m, n)
    if n_terms < 1 or n_terms > n_full:
        raise ValueError(f"n_terms must be in [1, {n_full}]")
    rng = SplitMix64(seed)
    all_occ = list(combinations(range(1, m + 1), n))
    chosen: list[tuple] = []
    seen = set()
    while len(chosen) < n_terms:
        k = int(rng.uniform() * n_full)
        k = min(k, n_full - 1)
        occ = all_occ[k]
        if occ in seen:
            continue
        seen.add(occ)
        chosen.append(occ)
    coeffs = []
    for _ in chosen:
        c = 2.0 * rng.uniform() - 1.0
        while c == 0.0:
            c = 2.0 * rng.uniform() - 1.0
        coeffs.append(c)
    nrm = math.sqrt(math.fsum(c * c for c in coeffs))
    terms = {occ: c / nrm for occ, c in zip(chosen, coeffs)}
    return CIWaveFunction(m, n, terms)


def dominant_start(wf: CIWaveFunction) -> StiefelPoint:
    """Unit-column representative of the dominant determinant of ``wf``."""
    return StiefelPoint.from_occupation(wf.n_spin_orbitals, wf.dominant())


def random_cisd(block_dims, n_per_irrep, seed: int, amplitude: float = 0.1,
                c0: float = 1.0):
    """Reproducible restricted CISD state with every excitation populated.

    Single, same-spin double and merged singles-product coefficients are
    drawn uniformly from ``[-amplitude, amplitude]`` with the same
    :class:`SplitMix64` stream as :func:`random_ci`, in deterministic key
    order (singles, then same-spin doubles, then merged products).
    """
    from .cisd import CISDWaveFunction, canonical_mixed_key

    block_dims = tuple(int(d) for d in block_dims)
    n_per_irrep = tuple(int(n) for n in n_per_irrep)
    rng = SplitMix64(seed)

    def draw():
        c = amplitude * (2.0 * rng.uniform() - 1.0)
        while c == 0.0:
            c = amplitude * (2.0 * rng.uniform() - 1.0)
        return c

    g = len(block_dims)
    singles = {}
    for gg in range(1, g + 1):
        n, dim = n_per_irrep[gg - 1], block_dims[gg - 1]
        for i in range(1, n + 1):
            for a in range(n + 1, dim + 1):
                singles[(gg, i, a)] = draw()
    doubles_same = {}
    for gg in range(1, g + 1):
        n, dim = n_per_irrep[gg - 1], block_dims[gg - 1]
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                for a in range(n + 1, dim + 1):
                    for b in range(a + 1, dim + 1):
                        doubles_same[(gg, i, j, a, b)] = draw()
    doubles_mixed = {}
    for g1 in range(1, g + 1):
        n1, d1 = n_per_irrep[g1 - 1], block_dims[g1 - 1]
        pairs1 = [(i, a) for i in range(1, n1 + 1) for a in range(n1 + 1, d1 + 1)]
        for g2 in range(1, g1 + 1):
            n2, d2 = n_per_irrep[g2 - 1], block_dims[g2 - 1]
            pairs2 = [(j, b) for j in range(1, n2 + 1) for b in range(n2 + 1, d2 + 1)]
            for ia in pairs1:
                for jb in pairs2:
                    key = canonical_mixed_key(g1, *ia, g2, *jb)
                    if key not in doubles_mixed:
                        doubles_mixed[key] = draw()
    return CISDWaveFunction(block_dims, n_per_irrep, c0,
                            singles, doubles_same, doubles_mixed)


def hubbard_rhf_start() -> StiefelPoint:
    """Restricted mean-field determinant of the dimer: bonding alpha and beta.

    For t > 0 the bonding orbital (site1 + site2)/sqrt(2) is the occupied
    RHF orbital for either spin, independent of u.
    """
    r = 1.0 / math.sqrt(2.0)
    u = np.array([[r, 0.0], [r, 0.0], [0.0, r], [0.0, r]])
    return StiefelPoint(u)
