"""Selected CI driven by sampled configuration counts.

The workflow: decode a counts table, keep the most frequent configurations,
optionally expand them into a spin-product basis, diagonalize the projected
Hamiltonian in that basis, and package the ground state as a trial wave
function for the projector Monte Carlo stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _eigen
from .detops import Determinant, SpinString, TrialWavefunction, slater_condon
from .hamio import ActiveSpaceSpec, Hamiltonian
from .sampler import CountsTable, decode_entry

RECORD_FORMAT = "qsci-trial-v1"


class RecordFormatError(ValueError):
    """Malformed trial-record file."""


@dataclass(frozen=True, eq=False)
class QsciWavefunction:
    """Ground state of the Hamiltonian projected onto a sampled basis.

    ``coefficients`` are amplitudes over ``determinants`` in the interleaved
    occupation convention.  ``r_requested`` is the selection size asked for
    (``None`` means every decodable configuration); ``r_effective`` is the
    basis size actually diagonalized, after deduplication and expansion.
    """

    determinants: tuple[Determinant, ...]
    coefficients: np.ndarray
    energy: float
    r_requested: int | None
    r_effective: int


def select_configurations(table: CountsTable, r: int | None = None,
                          electron_filter: bool = True) -> list[Determinant]:
    """Pick the ``r`` most frequent decodable configurations.

    Entries are ranked by count (descending) with lexicographic bit-string
    order breaking ties, so the selection is deterministic.  With the
    electron filter on, strings flagged for a wrong per-spin electron count
    are skipped before ranking.
    """
    if r is not None and r <= 0:
        raise ValueError("selection size must be positive")
    ranked = sorted(table.entries.items(), key=lambda kv: (-kv[1], kv[0]))
    picked: list[Determinant] = []
    seen = set()
    for bits, count in ranked:
        if count == 0:
            continue
        if electron_filter and bits in table.flagged:
            continue
        try:
            det = decode_entry(bits, table.mapping_tag)
        except ValueError:
            continue
        if det in seen:
            continue
        seen.add(det)
        picked.append(det)
        if r is not None and len(picked) == r:
            break
    if not picked:
        raise ValueError("no usable configurations in the counts table")
    return picked


def cartesian_expand(determinants) -> list[Determinant]:
    """Close a determinant list under spin-string products.

    Every distinct alpha string is paired with every distinct beta string
    (first-seen order, alpha-major), which restores product configurations
    whose individual factors were observed but whose combination was not.
    """
    alphas: list[SpinString] = []
    betas: list[SpinString] = []
    for det in determinants:
        if det.alpha not in alphas:
            alphas.append(det.alpha)
        if det.beta not in betas:
            betas.append(det.beta)
    return [Determinant(a, b) for a in alphas for b in betas]


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonian:
    matrix: np.ndarray
    basis: tuple[Determinant, ...]


def build_effective_hamiltonian(ham: Hamiltonian, basis) -> EffectiveHamiltonian:
    basis = tuple(basis)
    dim = len(basis)
    mat = np.zeros((dim, dim))
    for i in range(dim):
        for j in range(i, dim):
            mat[i, j] = slater_condon(ham, basis[i], basis[j])
            mat[j, i] = mat[i, j]
    return EffectiveHamiltonian(matrix=mat, basis=basis)


def solve_effective(eff: EffectiveHamiltonian,
                    r_requested: int | None = None) -> QsciWavefunction:
    energy, vec = _eigen.lowest_eigenpair(eff.matrix)
    pivot = int(np.argmax(np.abs(vec)))
    if vec[pivot] < 0:
        vec = -vec
    return QsciWavefunction(determinants=eff.basis, coefficients=vec,
                            energy=float(energy), r_requested=r_requested,
                            r_effective=len(eff.basis))


def run_qsci(ham: Hamiltonian, table: CountsTable, r: int | None = None,
             electron_filter: bool = True, expand: bool = True) -> QsciWavefunction:
    """Full selection -> diagonalization pipeline on one counts table."""
    basis = select_configurations(table, r=r, electron_filter=electron_filter)
    if expand:
        basis = cartesian_expand(basis)
    eff = build_effective_hamiltonian(ham, basis)
    return solve_effective(eff, r_requested=r)


def embed_trial(wfn: QsciWavefunction, spec: ActiveSpaceSpec,
                n_spatial_full: int) -> TrialWavefunction:
    """Promote an active-space state to the full orbital space.

    Core orbitals are doubly occupied and active orbital ``k`` maps to
    ``spec.active_orbitals[k]``.  Because the mapping preserves orbital
    order and every active orbital lies above the core block, the
    amplitudes carry over without reordering phases.
    """
    n_active = len(spec.active_orbitals)
    core_mask = (1 << spec.n_core) - 1
    full_dets = []
    for det in wfn.determinants:
        if det.alpha.norb != n_active:
            raise ValueError("determinant size does not match the active space")
        abits = core_mask
        bbits = core_mask
        for k in det.alpha.occupied:
            abits |= 1 << spec.active_orbitals[k]
        for k in det.beta.occupied:
            bbits |= 1 << spec.active_orbitals[k]
        full_dets.append(Determinant(SpinString(abits, n_spatial_full),
                                     SpinString(bbits, n_spatial_full)))
    return TrialWavefunction.from_ci(full_dets, wfn.coefficients)


def save_record(wfn: QsciWavefunction, spec: ActiveSpaceSpec, destination) -> None:
    """Serialize a trial state plus its active-space placement.

    Determinant strings are written in interleaved occupation order (the
    leftmost character is the alpha spin orbital of the first active
    orbital), and the file says so explicitly.
    """
    lines = [
        f"format {RECORD_FORMAT}",
        "bit_order interleaved",
        f"n_core {spec.n_core}",
        "active_orbitals " + " ".join(str(p) for p in spec.active_orbitals),
        f"n_alpha {spec.n_active_alpha}",
        f"n_beta {spec.n_active_beta}",
        "r_requested " + ("all" if wfn.r_requested is None else str(wfn.r_requested)),
        f"r_effective {wfn.r_effective}",
        f"energy {wfn.energy!r}",
        f"n_determinants {len(wfn.determinants)}",
    ]
    coeffs = np.asarray(wfn.coefficients, dtype=complex)
    for det, c in zip(wfn.determinants, coeffs):
        lines.append(
            f"det {det.to_interleaved()} {float(c.real)!r} {float(c.imag)!r}")
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text)


def load_record(source) -> tuple[QsciWavefunction, ActiveSpaceSpec]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    fields: dict[str, str] = {}
    dets: list[Determinant] = []
    coeffs: list[complex] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(" ")
        if key == "det":
            parts = value.split()
            if len(parts) != 3:
                raise RecordFormatError(f"line {lineno}: bad det entry")
            dets.append(Determinant.from_interleaved(parts[0]))
            coeffs.append(complex(float(parts[1]), float(parts[2])))
        else:
            fields[key] = value.strip()
    try:
        if fields["format"] != RECORD_FORMAT:
            raise RecordFormatError(f"unsupported format {fields['format']!r}")
        if fields["bit_order"] != "interleaved":
            raise RecordFormatError(f"unsupported bit order {fields['bit_order']!r}")
        n_core = int(fields["n_core"])
        active = tuple(int(p) for p in fields["active_orbitals"].split())
        n_alpha = int(fields["n_alpha"])
        n_beta = int(fields["n_beta"])
        r_req = None if fields["r_requested"] == "all" else int(fields["r_requested"])
        r_eff = int(fields["r_effective"])
        energy = float(fields["energy"])
        n_det = int(fields["n_determinants"])
    except KeyError as exc:
        raise RecordFormatError(f"missing field {exc.args[0]!r}") from None
    if len(dets) != n_det:
        raise RecordFormatError(
            f"expected {n_det} determinants, found {len(dets)}")
    carr = np.array(coeffs)
    if np.abs(carr.imag).max(initial=0.0) == 0.0:
        carr = carr.real
    spec = ActiveSpaceSpec(n_core=n_core, active_orbitals=active,
                           n_active_alpha=n_alpha, n_active_beta=n_beta)
    wfn = QsciWavefunction(determinants=tuple(dets), coefficients=carr,
                           energy=energy, r_requested=r_req, r_effective=r_eff)
    return wfn, spec
