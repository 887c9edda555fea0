"""CI wave functions over occupation multi-indices, with text-file I/O.

A wave function is stored as a sparse map from occupation multi-indices
(strictly ascending tuples of 1-based spin-orbital indices) to real
coefficients.  All sign bookkeeping for non-ascending orbital lists is
concentrated in :func:`reorder_sign`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

Occupation = tuple[int, ...]


class ParseError(ValueError):
    """Raised when a wave-function file violates the WFN/CISD grammar."""


def reorder_sign(indices) -> tuple[Occupation, int]:
    """Sort an orbital index list, returning the parity of the permutation.

    Parameters
    ----------
    indices : sequence of int
        Distinct spin-orbital indices, in any order.

    Returns
    -------
    (tuple, int)
        The ascending tuple and the sign (+1 or -1) of the sorting
        permutation.

    Raises
    ------
    ValueError
        If an index is repeated (the corresponding determinant vanishes).
    """
    idx = list(indices)
    if len(set(idx)) != len(idx):
        raise ValueError(f"repeated orbital index in {idx}: determinant vanishes")
    # Inversion count; n stays small (desk scale), O(n^2) is fine.
    inversions = 0
    for i in range(len(idx)):
        for j in range(i + 1, len(idx)):
            if idx[i] > idx[j]:
                inversions += 1
    return tuple(sorted(idx)), (-1) ** inversions


def validate_occupation(occ, n_spin_orbitals: int, n_electrons: int) -> Occupation:
    """Check that ``occ`` is a strictly ascending index tuple in range."""
    occ = tuple(int(p) for p in occ)
    if len(occ) != n_electrons:
        raise ValueError(f"occupation {occ} has {len(occ)} indices, expected {n_electrons}")
    for k, p in enumerate(occ):
        if p < 1 or p > n_spin_orbitals:
            raise ValueError(f"orbital index {p} out of range [1, {n_spin_orbitals}]")
        if k and occ[k - 1] >= p:
            raise ValueError(f"occupation {occ} is not strictly ascending")
    return occ


def excitation_label(reference: Occupation, target: Occupation):
    """Classify ``target`` as an excitation on top of ``reference``.

    Returns ``(rank, holes, particles, phase)``.  ``phase`` is the parity
    linking the ascending-stored determinant to the in-place replacement
    convention in which each hole is overwritten by the matching particle;
    for a single excitation with hole at (1-based) position ``i`` and a
    particle above all occupied orbitals it equals ``(-1)**(i + n)``.
    """
    if len(reference) != len(target):
        raise ValueError("reference and target must have the same electron count")
    ref_set = set(reference)
    tgt_set = set(target)
    holes = tuple(sorted(ref_set - tgt_set))
    particles = tuple(sorted(tgt_set - ref_set))
    rank = len(holes)
    replaced = list(reference)
    for h, p in zip(holes, particles):
        replaced[replaced.index(h)] = p
    _, phase = reorder_sign(replaced)
    return rank, holes, particles, phase


@dataclass(frozen=True)
class CIWaveFunction:
    """Sparse CI expansion ``|Psi> = sum_I C_I |Phi_I>``.

    ``terms`` maps ascending occupation tuples to real coefficients; zero
    coefficients are never stored.  Instances are treated as immutable and
    may be shared freely across threads.

    ``block_structure`` optionally lists ``(spin, irrep, dimension)``
    triples describing a direct-sum decomposition of the orbital space,
    alpha irreps first.  When absent, the convention is alpha spin on
    indices ``1..M/2`` and beta on ``M/2+1..M``.
    """

    n_spin_orbitals: int
    n_electrons: int
    terms: dict[Occupation, float]
    block_structure: list[tuple[str, int, int]] | None = None
    frozen: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for occ, c in self.terms.items():
            validate_occupation(occ, self.n_spin_orbitals, self.n_electrons)
            if not math.isfinite(c) or c == 0.0:
                raise ValueError(f"coefficient for {occ} must be finite and nonzero, got {c}")
        if self.block_structure is not None:
            total = sum(dim for _, _, dim in self.block_structure)
            if total != self.n_spin_orbitals:
                raise ValueError(
                    f"block dimensions sum to {total}, expected {self.n_spin_orbitals}"
                )

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def norm(self) -> float:
        """Euclidean norm sqrt(sum_I C_I^2) of the coefficient vector."""
        return math.sqrt(math.fsum(c * c for c in self.terms.values()))

    def normalized(self) -> "CIWaveFunction":
        nrm = self.norm()
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero wave function")
        return CIWaveFunction(
            self.n_spin_orbitals,
            self.n_electrons,
            {occ: c / nrm for occ, c in self.terms.items()},
            self.block_structure,
            self.frozen,
        )

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def dominant(self) -> Occupation:
        """Occupation of the largest-|C_I| term (ties broken by index order)."""
        return min(self.terms, key=lambda occ: (-abs(self.terms[occ]), occ))

    def coefficient(self, occ: Occupation) -> float:
        return self.terms.get(tuple(occ), 0.0)


def _format_coeff(c: float) -> str:
    return repr(float(c))


def parse_wavefunction(text: str | bytes) -> CIWaveFunction:
    """Parse the WFN v1 text format into a :class:`CIWaveFunction`.

    Grammar (UTF-8, ``#`` starts a comment, blank lines ignored)::

        WFN 1
        norb <M>
        nelec <n>
        [blocks <g> <dim_1> ... <dim_2g>]   # alpha irreps then beta irreps
        [frozen <k> <idx_1> ... <idx_k>]
        <i1> <i2> ... <in> <coefficient>    # ascending indices, one per line

    Zero-coefficient lines are dropped with a warning; duplicate
    determinants, out-of-range or non-ascending indices are errors.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = _content_lines(text)
    if not lines or lines[0].split() != ["WFN", "1"]:
        raise ParseError("expected 'WFN 1' header")
    norb = _parse_header_int(lines, 1, "norb")
    nelec = _parse_header_int(lines, 2, "nelec")
    pos = 3
    blocks = None
    frozen: tuple[int, ...] = ()
    while pos < len(lines) and lines[pos].split()[0] in ("blocks", "frozen"):
        fields = lines[pos].split()
        if fields[0] == "blocks":
            blocks = _parse_blocks_line(fields, norb)
        else:
            k = int(fields[1])
            if len(fields) != 2 + k:
                raise ParseError(f"frozen line announces {k} indices, found {len(fields) - 2}")
            frozen = tuple(int(x) for x in fields[2:])
        pos += 1
    terms: dict[Occupation, float] = {}
    for line in lines[pos:]:
        fields = line.split()
        if len(fields) != nelec + 1:
            raise ParseError(f"determinant line {line!r}: expected {nelec} indices + coefficient")
        try:
            idx = [int(x) for x in fields[:nelec]]
            coeff = float(fields[nelec])
        except ValueError as exc:
            raise ParseError(f"cannot parse determinant line {line!r}: {exc}") from exc
        try:
            occ = validate_occupation(idx, norb, nelec)
        except ValueError as exc:
            raise ParseError(str(exc)) from exc
        if occ in terms:
            raise ParseError(f"duplicate determinant {occ}")
        if coeff == 0.0:
            warnings.warn(f"dropping zero-coefficient determinant {occ}", stacklevel=2)
            continue
        if not math.isfinite(coeff):
            raise ParseError(f"non-finite coefficient on line {line!r}")
        terms[occ] = coeff
    return CIWaveFunction(norb, nelec, terms, blocks, frozen)


def serialize_wavefunction(wf: CIWaveFunction) -> str:
    """Canonical WFN v1 text for ``wf`` (LF endings, terms in index order)."""
    out = ["WFN 1", f"norb {wf.n_spin_orbitals}", f"nelec {wf.n_electrons}"]
    if wf.block_structure is not None:
        dims = " ".join(str(dim) for _, _, dim in wf.block_structure)
        out.append(f"blocks {len(wf.block_structure) // 2} {dims}")
    if wf.frozen:
        out.append(f"frozen {len(wf.frozen)} " + " ".join(str(i) for i in wf.frozen))
    for occ in sorted(wf.terms):
        idx = " ".join(str(i) for i in occ)
        out.append(f"{idx} {_format_coeff(wf.terms[occ])}")
    return "\n".join(out) + "\n"


def _content_lines(text: str) -> list[str]:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return lines


def _parse_header_int(lines: list[str], pos: int, key: str) -> int:
    if pos >= len(lines):
        raise ParseError(f"missing '{key}' line")
    fields = lines[pos].split()
    if len(fields) != 2 or fields[0] != key:
        raise ParseError(f"expected '{key} <int>', got {lines[pos]!r}")
    try:
        value = int(fields[1])
    except ValueError as exc:
        raise ParseError(f"invalid integer in '{key}' line") from exc
    if value <= 0:
        raise ParseError(f"'{key}' must be positive")
    return value


def _parse_blocks_line(fields: list[str], norb: int):
    g = int(fields[1])
    dims = [int(x) for x in fields[2:]]
    if len(dims) != 2 * g:
        raise ParseError(f"blocks line announces {2 * g} dimensions, found {len(dims)}")
    if sum(dims) != norb:
        raise ParseError(f"block dimensions sum to {sum(dims)}, expected norb={norb}")
    blocks = []
    for j, dim in enumerate(dims):
        spin = "a" if j < g else "b"
        irrep = (j % g) + 1
        blocks.append((spin, irrep, dim))
    return blocks
