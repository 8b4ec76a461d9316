"""Bit-string sampling emulation and counts-table handling.

Raw bit strings follow the device display convention: the leftmost
character is the *highest* spin orbital, so the string is the reverse of
the internal interleaved occupation order.  A two-orbital closed-shell
reference state therefore reads "0011".  Two mappings are supported:

``occupation-direct``
    One character per spin orbital (2 * n_orbitals bits).
``scbk-2e2o``
    The two-qubit symmetry-compressed encoding of a (2e,2o) space; the
    four raw patterns decode through a fixed table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detops import Determinant

DEFAULT_SHOTS = 1_000_000

MAPPING_OCCUPATION = "occupation-direct"
MAPPING_SCBK = "scbk-2e2o"

# Raw two-qubit string -> displayed four-bit occupation pattern.
_SCBK_DISPLAYED = {"00": "1100", "10": "0110", "01": "1001", "11": "0011"}


class CountsFormatError(ValueError):
    """Malformed counts input (bad line, duplicate string, empty table)."""


@dataclass(frozen=True, eq=False)
class CountsTable:
    """Histogram of raw measurement strings.

    ``flagged`` holds the strings whose decoded determinant does not carry
    the expected per-spin electron counts; they stay in ``entries`` so the
    caller can inspect or filter them.
    """

    entries: dict[str, int]
    shots: int
    mapping_tag: str
    n_bits: int
    flagged: frozenset[str] = field(default_factory=frozenset)

    def total(self) -> int:
        return sum(self.entries.values())


def displayed_to_determinant(raw: str) -> Determinant:
    return Determinant.from_interleaved(raw[::-1])


def determinant_to_displayed(det: Determinant) -> str:
    return det.to_interleaved()[::-1]


def decode_scbk_2e2o(raw: str) -> Determinant:
    """Decode a two-qubit symmetry-compressed string to a (2e,2o) determinant."""
    if raw not in _SCBK_DISPLAYED:
        raise ValueError(f"not a two-qubit bit string: {raw!r}")
    return displayed_to_determinant(_SCBK_DISPLAYED[raw])


def encode_scbk_2e2o(det: Determinant) -> str:
    displayed = determinant_to_displayed(det)
    for raw, pattern in _SCBK_DISPLAYED.items():
        if pattern == displayed:
            return raw
    raise ValueError(f"determinant {displayed} outside the (2e,2o) singlet sector")


def decode_entry(raw: str, mapping_tag: str) -> Determinant:
    if mapping_tag == MAPPING_SCBK:
        return decode_scbk_2e2o(raw)
    if mapping_tag == MAPPING_OCCUPATION:
        return displayed_to_determinant(raw)
    raise ValueError(f"unknown mapping tag {mapping_tag!r}")


def _encode(det: Determinant, mapping_tag: str) -> str:
    if mapping_tag == MAPPING_SCBK:
        return encode_scbk_2e2o(det)
    return determinant_to_displayed(det)


def _flag_wrong_counts(entries, mapping_tag, n_alpha, n_beta):
    flagged = set()
    for raw in entries:
        try:
            det = decode_entry(raw, mapping_tag)
        except ValueError:
            flagged.add(raw)
            continue
        if det.n_alpha != n_alpha or det.n_beta != n_beta:
            flagged.add(raw)
    return frozenset(flagged)


def sample_state(determinants, coefficients, shots: int = DEFAULT_SHOTS,
                 seed: int = 0, noise: float = 0.0,
                 mapping_tag: str = MAPPING_OCCUPATION) -> CountsTable:
    """Draw ``shots`` measurement strings from the Born distribution of a
    CI state, with optional independent per-bit readout flips.

    Deterministic for fixed arguments: a fresh PCG64 generator is seeded
    with ``seed`` and consumed in a fixed order (multinomial draw, then the
    flip mask).
    """
    determinants = list(determinants)
    if not determinants:
        raise ValueError("cannot sample an empty expansion")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must be a probability")
    if shots <= 0:
        raise ValueError("shots must be positive")
    coeffs = np.asarray(coefficients)
    probs = np.abs(coeffs) ** 2
    probs = probs / probs.sum()
    raws = [_encode(d, mapping_tag) for d in determinants]
    n_bits = len(raws[0])
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, probs)

    if noise == 0.0:
        entries = {}
        for raw, c in zip(raws, counts):
            if c:
                entries[raw] = entries.get(raw, 0) + int(c)
    else:
        pattern = np.array([[ch == "1" for ch in raw] for raw in raws], dtype=np.uint8)
        per_shot = np.repeat(pattern, counts, axis=0)
        flips = (rng.random((shots, n_bits)) < noise).astype(np.uint8)
        per_shot ^= flips
        weights = 1 << np.arange(n_bits - 1, -1, -1, dtype=np.uint64)
        values = per_shot.astype(np.uint64) @ weights
        uniq, uc = np.unique(values, return_counts=True)
        entries = {format(int(v), f"0{n_bits}b"): int(c) for v, c in zip(uniq, uc)}

    d0 = determinants[0]
    flagged = _flag_wrong_counts(entries, mapping_tag, d0.n_alpha, d0.n_beta)
    return CountsTable(entries=entries, shots=shots, mapping_tag=mapping_tag,
                       n_bits=n_bits, flagged=flagged)


def import_counts(source, mapping_tag: str, n_alpha: int, n_beta: int) -> CountsTable:
    """Read a counts file: one ``<bitstring> <count>`` pair per line,
    ``#`` comments and blank lines ignored."""
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        from pathlib import Path

        text = Path(source).read_text()
        lines = text.splitlines()
    entries: dict[str, int] = {}
    n_bits = None
    for lineno, raw_line in enumerate(lines, start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CountsFormatError(f"line {lineno}: expected '<bits> <count>'")
        bits, count_text = parts
        if set(bits) - {"0", "1"}:
            raise CountsFormatError(f"line {lineno}: invalid bit string {bits!r}")
        try:
            count = int(count_text)
        except ValueError:
            raise CountsFormatError(
                f"line {lineno}: count {count_text!r} is not an integer") from None
        if count < 0:
            raise CountsFormatError(f"line {lineno}: negative count")
        if bits in entries:
            raise CountsFormatError(f"line {lineno}: duplicate bit string {bits!r}")
        if n_bits is None:
            n_bits = len(bits)
        elif len(bits) != n_bits:
            raise CountsFormatError(
                f"line {lineno}: inconsistent bit-string length")
        entries[bits] = count
    if not entries:
        raise CountsFormatError("counts input contains no entries")
    flagged = _flag_wrong_counts(entries, mapping_tag, n_alpha, n_beta)
    return CountsTable(entries=entries, shots=sum(entries.values()),
                       mapping_tag=mapping_tag, n_bits=n_bits, flagged=flagged)


def export_counts(table: CountsTable, destination) -> None:
    """Write a counts table in the import format, most frequent first."""
    lines = [f"# mapping: {table.mapping_tag}",
             "# bit order: displayed (leftmost = highest spin orbital)"]
    items = sorted(table.entries.items(), key=lambda kv: (-kv[1], kv[0]))
    lines.extend(f"{bits} {count}" for bits, count in items)
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        from pathlib import Path

        Path(destination).write_text(text)
