"""Spin-restricted CISD wave functions over symmetry-blocked spatial orbitals.

Orbitals are grouped by Abelian irrep with identical alpha and beta blocks
(closed-shell restriction).  Indices inside a block are local and 1-based;
``i, j`` run over the ``n_g`` occupied orbitals of the block, ``a, b`` over
its virtuals.  Three excitation families are stored:

* singles ``C_i^{a,g}``, applied to either spin;
* same-spin doubles ``C_ij^{ab,g}`` (i < j, a < b) within one irrep;
* products of two singles, stored merged: for one irrep the spin-mixed
  coefficient ``D_{ia,jb}^{gg}`` (symmetric under pair swap), and for two
  irreps g > g' the sum ``D^{gg'}`` of the same-spin and mixed-spin
  coefficients, which is the only combination the overlap equations see.

The global spin-orbital ordering used when expanding to determinants is
alpha blocks by irrep, then beta blocks by irrep, each block internally
ascending; with that ordering every expanded determinant coefficient
carries no extra sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .wavefunction import CIWaveFunction, ParseError, _content_lines, _format_coeff

SingleKey = tuple[int, int, int]               # (irrep, i, a)
DoubleKey = tuple[int, int, int, int, int]     # (irrep, i, j, a, b), i < j, a < b
MixedKey = tuple[int, int, int, int, int, int]  # (g1, i, a, g2, j, b), canonical


def canonical_mixed_key(g1: int, i: int, a: int, g2: int, j: int, b: int) -> MixedKey:
    """Canonical storage key: g1 > g2, or g1 == g2 with (i, a) <= (j, b)."""
    if g1 < g2 or (g1 == g2 and (i, a) > (j, b)):
        return (g2, j, b, g1, i, a)
    return (g1, i, a, g2, j, b)


@dataclass(frozen=True)
class CISDWaveFunction:
    """Reference + singles + doubles over a restricted blocked orbital space."""

    block_dims: tuple[int, ...]     # M_g per irrep (per spin)
    n_per_irrep: tuple[int, ...]    # occupied n_g per irrep (per spin)
    c0: float
    singles: dict[SingleKey, float] = field(default_factory=dict)
    doubles_same: dict[DoubleKey, float] = field(default_factory=dict)
    doubles_mixed: dict[MixedKey, float] = field(default_factory=dict)

    def __post_init__(self):
        g = len(self.block_dims)
        if len(self.n_per_irrep) != g:
            raise ValueError("need one occupation count per irrep")
        for dim, n in zip(self.block_dims, self.n_per_irrep):
            if not 0 <= n <= dim:
                raise ValueError(f"occupation {n} exceeds block dimension {dim}")
        for (gg, i, a), c in self.singles.items():
            self._check_pair(gg, i, a)
            _check_coeff(c)
        for (gg, i, j, a, b), c in self.doubles_same.items():
            self._check_pair(gg, i, a)
            self._check_pair(gg, j, b)
            if not (i < j and a < b):
                raise ValueError(f"same-spin double ({gg},{i},{j},{a},{b}) needs i<j and a<b")
            _check_coeff(c)
        for key, c in self.doubles_mixed.items():
            g1, i, a, g2, j, b = key
            self._check_pair(g1, i, a)
            self._check_pair(g2, j, b)
            if key != canonical_mixed_key(*key):
                raise ValueError(f"mixed double key {key} is not canonical")
            _check_coeff(c)

    def _check_pair(self, g: int, i: int, a: int) -> None:
        if not 1 <= g <= len(self.block_dims):
            raise ValueError(f"irrep {g} out of range")
        n, dim = self.n_per_irrep[g - 1], self.block_dims[g - 1]
        if not 1 <= i <= n:
            raise ValueError(f"hole index {i} outside 1..{n} in irrep {g}")
        if not n < a <= dim:
            raise ValueError(f"particle index {a} outside {n + 1}..{dim} in irrep {g}")

    @property
    def n_irreps(self) -> int:
        return len(self.block_dims)

    @property
    def n_spin_orbitals(self) -> int:
        return 2 * sum(self.block_dims)

    @property
    def n_electrons(self) -> int:
        return 2 * sum(self.n_per_irrep)

    def mixed(self, g1: int, i: int, a: int, g2: int, j: int, b: int) -> float:
        """Symmetric accessor for the merged singles-product coefficients."""
        return self.doubles_mixed.get(canonical_mixed_key(g1, i, a, g2, j, b), 0.0)

    def block_structure(self) -> list[tuple[str, int, int]]:
        dims = list(self.block_dims)
        return ([("a", g + 1, d) for g, d in enumerate(dims)]
                + [("b", g + 1, d) for g, d in enumerate(dims)])

    def norm(self) -> float:
        total = self.c0 ** 2
        total += 2.0 * math.fsum(c * c for c in self.singles.values())
        total += 2.0 * math.fsum(c * c for c in self.doubles_same.values())
        for key, c in self.doubles_mixed.items():
            g1, i, a, g2, j, b = key
            if g1 == g2 and (i, a) == (j, b):
                total += c * c
            elif g1 == g2:
                total += 2.0 * c * c
            else:
                # merged A + B over four determinants; the norm depends on
                # the split, so report the even-split value
                total += 4.0 * (c / 2.0) ** 2
        return math.sqrt(total)


def _check_coeff(c: float) -> None:
    if not math.isfinite(c) or c == 0.0:
        raise ValueError("stored coefficients must be finite and nonzero")


def block_offsets(dims: tuple[int, ...]) -> list[int]:
    """Global 0-based row offsets of blocks ordered alpha irreps, beta irreps."""
    offs, acc = [], 0
    for d in list(dims) + list(dims):
        offs.append(acc)
        acc += d
    return offs


def reference_occupation(wf: CISDWaveFunction) -> tuple[int, ...]:
    offs = block_offsets(wf.block_dims)
    occ = []
    for blk, n in enumerate(list(wf.n_per_irrep) + list(wf.n_per_irrep)):
        occ.extend(offs[blk] + p for p in range(1, n + 1))
    return tuple(occ)


def _excite_block(ref_local: tuple[int, ...], holes, particles) -> tuple[int, ...]:
    kept = [p for p in ref_local if p not in holes]
    return tuple(sorted(kept + list(particles)))


def expand_cisd(wf: CISDWaveFunction, mixed_split: float = 0.5) -> CIWaveFunction:
    """Expand to an explicit determinant list in the global orbital ordering.

    ``mixed_split`` fixes the (unobservable) split of the merged
    inter-irrep coefficients into a same-spin part ``split * D`` and a
    mixed-spin part ``(1 - split) * D``; every overlap quantity is
    invariant under the choice.
    """
    g = wf.n_irreps
    offs = block_offsets(wf.block_dims)
    ref_local = [tuple(range(1, n + 1)) for n in wf.n_per_irrep]

    def block_occ(spin: int, irrep: int, local: tuple[int, ...]):
        # spin 0 = alpha, 1 = beta; irrep 1-based
        off = offs[spin * g + irrep - 1]
        return tuple(off + p for p in local)

    def determinant(excitations: dict) -> tuple[int, ...]:
        occ = []
        for spin in (0, 1):
            for irrep in range(1, g + 1):
                local = excitations.get((spin, irrep), ref_local[irrep - 1])
                occ.extend(block_occ(spin, irrep, local))
        return tuple(occ)

    terms: dict[tuple[int, ...], float] = {}

    def add(occ, c):
        if c != 0.0:
            terms[occ] = terms.get(occ, 0.0) + c

    if wf.c0 != 0.0:
        add(determinant({}), wf.c0)
    for (irrep, i, a), c in wf.singles.items():
        exc = _excite_block(ref_local[irrep - 1], (i,), (a,))
        add(determinant({(0, irrep): exc}), c)
        add(determinant({(1, irrep): exc}), c)
    for (irrep, i, j, a, b), c in wf.doubles_same.items():
        exc = _excite_block(ref_local[irrep - 1], (i, j), (a, b))
        add(determinant({(0, irrep): exc}), c)
        add(determinant({(1, irrep): exc}), c)
    for (g1, i, a, g2, j, b), d in wf.doubles_mixed.items():
        exc1 = _excite_block(ref_local[g1 - 1], (i,), (a,))
        exc2 = _excite_block(ref_local[g2 - 1], (j,), (b,))
        if g1 == g2:
            if (i, a) == (j, b):
                add(determinant({(0, g1): exc1, (1, g1): exc1}), d)
            else:
                add(determinant({(0, g1): exc1, (1, g1): exc2}), d)
                add(determinant({(0, g1): exc2, (1, g1): exc1}), d)
        else:
            same = mixed_split * d
            cross = (1.0 - mixed_split) * d
            add(determinant({(0, g1): exc1, (0, g2): exc2}), same)
            add(determinant({(1, g1): exc1, (1, g2): exc2}), same)
            add(determinant({(0, g1): exc1, (1, g2): exc2}), cross)
            add(determinant({(1, g1): exc1, (0, g2): exc2}), cross)
    terms = {occ: c for occ, c in terms.items() if c != 0.0}
    return CIWaveFunction(wf.n_spin_orbitals, wf.n_electrons, terms,
                          wf.block_structure())


def parse_cisd(text: str | bytes) -> CISDWaveFunction:
    """Parse the CISD v1 text format.

    Mirrors WFN v1::

        CISD 1
        norb <M>
        nelec <n>
        blocks <g> <dim_1> ... <dim_2g>   # alpha dims then beta dims, equal pairwise
        refocc <n_1> ... <n_g>
        ref <c0>
        s <g> <i> <a> <c>
        d <g> <i> <j> <a> <b> <c>         # same-spin, i < j, a < b
        dm <g1> <i> <a> <g2> <j> <b> <c>  # merged singles product
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = _content_lines(text)
    if not lines or lines[0].split() != ["CISD", "1"]:
        raise ParseError("expected 'CISD 1' header")
    if len(lines) < 6:
        raise ParseError("truncated CISD file")
    norb = _header_value(lines[1], "norb")
    nelec = _header_value(lines[2], "nelec")
    fields = lines[3].split()
    if fields[0] != "blocks":
        raise ParseError("expected 'blocks' line")
    g = int(fields[1])
    dims = [int(x) for x in fields[2:]]
    if len(dims) != 2 * g or dims[:g] != dims[g:]:
        raise ParseError("restricted CISD needs matching alpha and beta block dimensions")
    if 2 * sum(dims[:g]) != norb:
        raise ParseError("block dimensions do not sum to norb")
    fields = lines[4].split()
    if fields[0] != "refocc" or len(fields) != 1 + g:
        raise ParseError("expected 'refocc <n_1> ... <n_g>'")
    nocc = [int(x) for x in fields[1:]]
    if 2 * sum(nocc) != nelec:
        raise ParseError("refocc does not sum to nelec")
    fields = lines[5].split()
    if fields[0] != "ref" or len(fields) != 2:
        raise ParseError("expected 'ref <c0>'")
    c0 = float(fields[1])
    singles: dict[SingleKey, float] = {}
    doubles_same: dict[DoubleKey, float] = {}
    doubles_mixed: dict[MixedKey, float] = {}
    for line in lines[6:]:
        fields = line.split()
        kind = fields[0]
        try:
            if kind == "s" and len(fields) == 5:
                key = (int(fields[1]), int(fields[2]), int(fields[3]))
                _store_unique(singles, key, float(fields[4]), line)
            elif kind == "d" and len(fields) == 7:
                key = tuple(int(x) for x in fields[1:6])
                _store_unique(doubles_same, key, float(fields[6]), line)
            elif kind == "dm" and len(fields) == 8:
                raw = tuple(int(x) for x in fields[1:7])
                key = canonical_mixed_key(*raw)
                _store_unique(doubles_mixed, key, float(fields[7]), line)
            else:
                raise ParseError(f"unrecognized record {line!r}")
        except ValueError as exc:
            raise ParseError(f"cannot parse record {line!r}: {exc}") from exc
    try:
        return CISDWaveFunction(tuple(dims[:g]), tuple(nocc), c0,
                                singles, doubles_same, doubles_mixed)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def _store_unique(store: dict, key, value: float, line: str) -> None:
    if key in store:
        raise ParseError(f"duplicate record {line!r}")
    store[key] = value


def _header_value(line: str, key: str) -> int:
    fields = line.split()
    if len(fields) != 2 or fields[0] != key:
        raise ParseError(f"expected '{key} <int>', got {line!r}")
    return int(fields[1])


def serialize_cisd(wf: CISDWaveFunction) -> str:
    """Canonical CISD v1 text (records sorted by key)."""
    g = wf.n_irreps
    dims = " ".join(str(d) for d in list(wf.block_dims) * 2)
    out = [
        "CISD 1",
        f"norb {wf.n_spin_orbitals}",
        f"nelec {wf.n_electrons}",
        f"blocks {g} {dims}",
        "refocc " + " ".join(str(n) for n in wf.n_per_irrep),
        f"ref {_format_coeff(wf.c0)}",
    ]
    for key in sorted(wf.singles):
        gg, i, a = key
        out.append(f"s {gg} {i} {a} {_format_coeff(wf.singles[key])}")
    for key in sorted(wf.doubles_same):
        out.append("d " + " ".join(str(x) for x in key)
                   + f" {_format_coeff(wf.doubles_same[key])}")
    for key in sorted(wf.doubles_mixed):
        out.append("dm " + " ".join(str(x) for x in key)
                   + f" {_format_coeff(wf.doubles_mixed[key])}")
    return "\n".join(out) + "\n"
