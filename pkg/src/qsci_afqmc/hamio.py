"""Second-quantized Hamiltonian container and FCIDUMP text I/O.

The electronic Hamiltonian is held in its spin-free spatial-orbital form

    H = e_core + sum_pq h[p,q] E_pq + 1/2 sum_pqrs g[p,q,r,s] (E_pq E_rs - d_qr E_ps)

with two-electron integrals stored in chemists' notation, g[p,q,r,s] = (pq|rs).
FCIDUMP files use 1-based indices and list only symmetry-unique elements;
parsing restores the full 8-fold permutation symmetry of g.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SYMMETRY_TOL = 1e-12


class FcidumpError(ValueError):
    """Raised for malformed FCIDUMP content; includes the offending line number."""


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Spin-restricted electronic Hamiltonian over spatial orbitals.

    Attributes
    ----------
    n_spatial : int
        Number of spatial orbitals.
    n_alpha, n_beta : int
        Electron counts per spin sector.
    e_core : float
        Scalar constant (nuclear repulsion plus any folded-core energy).
    h : ndarray, shape (n, n)
        One-body integrals, symmetric.
    g : ndarray, shape (n, n, n, n)
        Two-body integrals in chemists' notation with 8-fold symmetry.
    orbital_labels : tuple or None
        Optional point-group labels carried through from the file header.
    """

    n_spatial: int
    n_alpha: int
    n_beta: int
    e_core: float
    h: np.ndarray
    g: np.ndarray
    orbital_labels: tuple | None = None

    def __post_init__(self):
        n = self.n_spatial
        if n <= 0:
            raise ValueError("n_spatial must be positive")
        if not (0 <= self.n_alpha <= n and 0 <= self.n_beta <= n):
            raise ValueError("electron counts must lie in [0, n_spatial]")
        if self.h.shape != (n, n) or self.g.shape != (n, n, n, n):
            raise ValueError("integral array shapes inconsistent with n_spatial")
        if not np.allclose(self.h, self.h.T, atol=SYMMETRY_TOL, rtol=0.0):
            raise ValueError("one-body integrals are not symmetric")
        for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if not np.allclose(self.g, self.g.transpose(perm), atol=SYMMETRY_TOL, rtol=0.0):
                raise ValueError("two-body integrals violate 8-fold symmetry")

    @property
    def n_electrons(self) -> int:
        return self.n_alpha + self.n_beta


@dataclass(frozen=True)
class ActiveSpaceSpec:
    """Frozen-core active space: the first ``n_core`` orbitals are doubly
    occupied and folded away; ``active_orbitals`` (ascending, disjoint from
    the core block) span the retained space."""

    n_core: int
    active_orbitals: tuple[int, ...]
    n_active_alpha: int
    n_active_beta: int

    def __post_init__(self):
        object.__setattr__(self, "active_orbitals", tuple(self.active_orbitals))
        act = self.active_orbitals
        if self.n_core < 0:
            raise ValueError("n_core must be non-negative")
        if len(set(act)) != len(act) or list(act) != sorted(act):
            raise ValueError("active orbitals must be distinct and ascending")
        if any(p < self.n_core for p in act):
            raise ValueError("active orbitals overlap the frozen core block")
        if not (0 <= self.n_active_alpha <= len(act)
                and 0 <= self.n_active_beta <= len(act)):
            raise ValueError("active electron counts exceed the active space")

    @property
    def n_active(self) -> int:
        return len(self.active_orbitals)


_HEADER_FIELD = re.compile(r"([A-Za-z0-9_]+)\s*=\s*([^=]*?)(?=(?:,\s*[A-Za-z0-9_]+\s*=)|$)")


def _parse_header(lines):
    """Consume header lines up to &END (or an inline-terminated &FCI line).

    Returns (fields dict, number of lines consumed).
    """
    if not lines or not lines[0].strip().upper().startswith("&FCI"):
        raise FcidumpError("line 1: missing &FCI header")
    text = []
    consumed = 0
    for raw in lines:
        consumed += 1
        stripped = raw.strip()
        chunk = stripped
        if consumed == 1:
            chunk = stripped[4:]
        done = False
        for terminator in ("&END", "/"):
            if terminator in chunk.upper():
                idx = chunk.upper().index(terminator)
                chunk = chunk[:idx]
                done = True
        text.append(chunk)
        if done:
            break
    else:
        raise FcidumpError("header not terminated by &END")
    blob = " ".join(text)
    fields = {}
    for key, value in _HEADER_FIELD.findall(blob):
        fields[key.upper()] = value.strip().rstrip(",").strip()
    return fields, consumed


def parse_fcidump(source) -> Hamiltonian:
    """Read an FCIDUMP file (path, string content, or iterable of lines).

    Index conventions: 1-based in the file, 0-based internally.  A line
    ``v i j 0 0`` sets h[i,j] (and its transpose); ``v 0 0 0 0`` sets e_core;
    four nonzero indices populate g with all eight permutations.
    """
    if isinstance(source, (str, Path)):
        p = Path(source)
        if isinstance(source, Path) or "\n" not in str(source):
            text = p.read_text()
        else:
            text = str(source)
        lines = text.splitlines()
    else:
        lines = [str(x).rstrip("\n") for x in source]

    fields, consumed = _parse_header(lines)
    try:
        n = int(fields["NORB"])
        n_elec = int(fields["NELEC"])
    except KeyError as missing:
        raise FcidumpError(f"header missing required field {missing}") from None
    ms2 = int(fields.get("MS2", "0") or "0")
    if (n_elec + ms2) % 2 != 0:
        raise FcidumpError(f"NELEC={n_elec} and MS2={ms2} are inconsistent")
    n_alpha = (n_elec + ms2) // 2
    n_beta = (n_elec - ms2) // 2
    labels = None
    if "ORBSYM" in fields:
        toks = [t for t in fields["ORBSYM"].replace(",", " ").split() if t]
        labels = tuple(int(t) for t in toks)
        if len(labels) != n:
            raise FcidumpError(f"ORBSYM lists {len(labels)} labels for NORB={n}")

    h = np.zeros((n, n))
    g = np.zeros((n, n, n, n))
    e_core = 0.0
    for lineno, raw in enumerate(lines[consumed:], start=consumed + 1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        toks = stripped.split()
        if len(toks) != 5:
            raise FcidumpError(f"line {lineno}: expected 'value i j k l', got {stripped!r}")
        try:
            value = float(toks[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(t) for t in toks[1:])
        except ValueError:
            raise FcidumpError(f"line {lineno}: could not parse {stripped!r}") from None
        for idx in (i, j, k, l):
            if idx < 0 or idx > n:
                raise FcidumpError(f"line {lineno}: orbital index {idx} outside 1..{n}")
        if i == j == k == l == 0:
            e_core = value
        elif k == 0 and l == 0:
            if i == 0 or j == 0:
                raise FcidumpError(f"line {lineno}: malformed one-body indices")
            h[i - 1, j - 1] = value
            h[j - 1, i - 1] = value
        elif i and j and k and l:
            a, b, c, d = i - 1, j - 1, k - 1, l - 1
            for x, y in ((a, b), (b, a)):
                for z, w in ((c, d), (d, c)):
                    g[x, y, z, w] = value
                    g[z, w, x, y] = value
        else:
            raise FcidumpError(f"line {lineno}: invalid index pattern {toks[1:]}")

    return Hamiltonian(n_spatial=n, n_alpha=n_alpha, n_beta=n_beta,
                       e_core=e_core, h=h, g=g, orbital_labels=labels)


def write_fcidump(ham: Hamiltonian, destination, tol: float = 0.0) -> None:
    """Write a Hamiltonian in FCIDUMP form, one line per symmetry-unique
    element; elements with |value| <= tol are skipped."""
    n = ham.n_spatial
    ms2 = ham.n_alpha - ham.n_beta
    out = [f"&FCI NORB={n:4d},NELEC={ham.n_electrons:3d},MS2={ms2:2d},"]
    labels = ham.orbital_labels or (1,) * n
    out.append("  ORBSYM=" + ",".join(str(x) for x in labels) + ",")
    out.append("  ISYM=1,")
    out.append("&END")

    def pair(i, j):
        return i * (i + 1) // 2 + j

    for i in range(n):
        for j in range(i + 1):
            for k in range(i + 1):
                for l in range(k + 1):
                    if pair(i, j) < pair(k, l):
                        continue
                    v = ham.g[i, j, k, l]
                    if abs(v) > tol:
                        out.append(f" {v: .16E} {i+1:4d} {j+1:4d} {k+1:4d} {l+1:4d}")
    for i in range(n):
        for j in range(i + 1):
            if abs(ham.h[i, j]) > tol:
                out.append(f" {ham.h[i, j]: .16E} {i+1:4d} {j+1:4d}    0    0")
    out.append(f" {ham.e_core: .16E}    0    0    0    0")
    text = "\n".join(out) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text)


def fold_core(ham: Hamiltonian, spec: ActiveSpaceSpec) -> Hamiltonian:
    """Fold the doubly occupied core into an active-space Hamiltonian.

    The core orbitals are the first ``spec.n_core``; orbitals outside
    core+active are discarded.  The returned Hamiltonian acts on
    ``spec.n_active`` orbitals with the standard frozen-core corrections:

        e_core' = e_core + 2 sum_c h[c,c] + sum_cc' (2 (cc|c'c') - (cc'|c'c))
        h'[u,v] = h[u,v] + sum_c (2 (uv|cc) - (uc|cv))
    """
    if spec.n_core + spec.n_active > ham.n_spatial:
        raise ValueError("active space does not fit inside the Hamiltonian")
    if (spec.n_core + spec.n_active_alpha != ham.n_alpha
            or spec.n_core + spec.n_active_beta != ham.n_beta):
        raise ValueError("electron counts inconsistent with frozen core")
    core = np.arange(spec.n_core)
    act = np.asarray(spec.active_orbitals, dtype=int)
    h, g = ham.h, ham.g

    e_core = ham.e_core
    if spec.n_core:
        gcc = g[np.ix_(core, core, core, core)]
        e_core += 2.0 * h[core, core].sum()
        e_core += 2.0 * np.einsum("iijj->", gcc) - np.einsum("ijji->", gcc)

    h_act = h[np.ix_(act, act)].copy()
    if spec.n_core:
        coul = np.einsum("uvcc->uv", g[np.ix_(act, act, core, core)])
        exch = np.einsum("uccv->uv", g[np.ix_(act, core, core, act)])
        h_act += 2.0 * coul - exch

    g_act = g[np.ix_(act, act, act, act)].copy()
    labels = None
    if ham.orbital_labels is not None:
        labels = tuple(ham.orbital_labels[p] for p in act)
    return Hamiltonian(n_spatial=spec.n_active, n_alpha=spec.n_active_alpha,
                       n_beta=spec.n_active_beta, e_core=float(e_core),
                       h=h_act, g=g_act, orbital_labels=labels)
