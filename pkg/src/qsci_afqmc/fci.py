"""Exact diagonalization in the full determinant space.

Desk-scale reference: enumerates every determinant with the requested
electron counts, builds the Hamiltonian matrix with Slater-Condon rules,
and extracts the ground state.  Serves as the oracle the stochastic
results are validated against, and doubles as the CASCI solver for folded
active-space Hamiltonians.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse

from . import _eigen
from .detops import Determinant, SpinString, TrialWavefunction, slater_condon

MAX_DIMENSION = 100_000


@dataclass(frozen=True, eq=False)
class CiSpace:
    """All determinants for fixed electron counts, alpha-string major,
    strings enumerated in lexicographic order of their occupied indices."""

    determinants: tuple[Determinant, ...]
    n_spatial: int
    n_alpha: int
    n_beta: int

    @classmethod
    def build(cls, n_spatial, n_alpha, n_beta) -> "CiSpace":
        alphas = [SpinString.from_occupied(occ, n_spatial)
                  for occ in combinations(range(n_spatial), n_alpha)]
        betas = [SpinString.from_occupied(occ, n_spatial)
                 for occ in combinations(range(n_spatial), n_beta)]
        dets = tuple(Determinant(a, b) for a in alphas for b in betas)
        return cls(dets, n_spatial, n_alpha, n_beta)

    @property
    def dimension(self) -> int:
        return len(self.determinants)

    def index(self, det: Determinant) -> int:
        try:
            return self._index[det]
        except AttributeError:
            object.__setattr__(self, "_index",
                               {d: i for i, d in enumerate(self.determinants)})
            return self._index[det]


@dataclass(frozen=True, eq=False)
class FciResult:
    energy: float
    coefficients: np.ndarray
    space: CiSpace


def _degree_table(strings):
    bits = np.array([s.bits for s in strings], dtype=np.uint64)
    xor = np.bitwise_xor.outer(bits, bits)
    return np.vectorize(lambda x: int(x).bit_count(), otypes=[np.int64])(xor) // 2


def build_ci_matrix(ham, space: CiSpace, sparse: bool = False):
    """Hamiltonian matrix over ``space`` (dense by default).

    Pairs are screened by per-spin excitation degree before the Slater-Condon
    evaluation, so the cost scales with the number of connected pairs.
    """
    alphas, betas = [], []
    seen_a, seen_b = {}, {}
    for d in space.determinants:
        if d.alpha not in seen_a:
            seen_a[d.alpha] = len(alphas)
            alphas.append(d.alpha)
        if d.beta not in seen_b:
            seen_b[d.beta] = len(betas)
            betas.append(d.beta)
    na, nb = len(alphas), len(betas)
    deg_a = _degree_table(alphas)
    deg_b = _degree_table(betas)

    dim = space.dimension
    if dim != na * nb:
        raise ValueError("space is not a full alpha x beta product")
    store = scipy.sparse.lil_matrix((dim, dim)) if sparse else np.zeros((dim, dim))

    for ia in range(na):
        for ja in range(ia, na):
            da = deg_a[ia, ja]
            if da > 2:
                continue
            for ib in range(nb):
                jb_start = ib if ia == ja else 0
                for jb in range(jb_start, nb):
                    if da + deg_b[ib, jb] > 2:
                        continue
                    i = ia * nb + ib
                    j = ja * nb + jb
                    if j < i:
                        continue
                    val = slater_condon(ham,
                                        Determinant(alphas[ia], betas[ib]),
                                        Determinant(alphas[ja], betas[jb]))
                    if val != 0.0:
                        store[i, j] = val
                        if i != j:
                            store[j, i] = val
    return store.tocsr() if sparse else store


def fci_ground_state(ham, dense_cutoff: int = _eigen.DENSE_CUTOFF) -> FciResult:
    """Ground state in the complete determinant space of ``ham``.

    The returned coefficients follow the interleaved operator convention,
    with the global phase fixed so the largest-magnitude coefficient is
    real positive (ties: first index).
    """
    space = CiSpace.build(ham.n_spatial, ham.n_alpha, ham.n_beta)
    if space.dimension > MAX_DIMENSION:
        raise ValueError(
            f"CI dimension {space.dimension} exceeds {MAX_DIMENSION}")
    matrix = build_ci_matrix(ham, space, sparse=space.dimension > dense_cutoff)
    energy, vec = _eigen.lowest_eigenpair(matrix, dense_cutoff=dense_cutoff)
    pivot = int(np.argmax(np.abs(vec)))
    if vec[pivot] < 0:
        vec = -vec
    return FciResult(energy=float(energy), coefficients=vec, space=space)


def ci_as_trial(result: FciResult, truncation: float = 0.0) -> TrialWavefunction:
    """Package a CI vector as a multideterminant trial wave function.

    Determinants with |coefficient| <= truncation are dropped (the
    reference expansion keeps at least one determinant).
    """
    keep = np.abs(result.coefficients) > truncation
    if not keep.any():
        keep[int(np.argmax(np.abs(result.coefficients)))] = True
    dets = [d for d, k in zip(result.space.determinants, keep) if k]
    coeffs = result.coefficients[keep]
    return TrialWavefunction.from_ci(dets, coeffs)
