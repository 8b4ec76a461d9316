"""Cholesky factorization of the two-electron integrals.

The ERI tensor in chemists' notation, viewed as a matrix over orbital pairs
M[(pq),(rs)] = (pq|rs), is positive semidefinite; a pivoted incomplete
Cholesky decomposition yields vectors L^g with

    (pq|rs) ~= sum_g L^g[p,q] L^g[r,s],   residual <= threshold.

Each L^g is symmetric in (p,q).  The factorization also carries the
effective one-body operator

    v0[p,q] = h[p,q] - 1/2 sum_g sum_t L^g[p,t] L^g[t,q]

that appears when the two-body term is rewritten as a sum of squared
one-body operators for the Hubbard-Stratonovich step.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_THRESHOLD = 1e-8
# Diagonal entries down to -CLAMP_TOL are treated as roundoff and clamped.
CLAMP_TOL = 1e-11


class NotPositiveSemidefiniteError(ValueError):
    """The pair matrix has a structurally negative diagonal."""


@dataclass(frozen=True, eq=False)
class CholeskyFactorization:
    """Result of :func:`decompose`.

    vectors : ndarray, shape (n_gamma, n, n), each symmetric
    v0 : ndarray, shape (n, n) — one-body operator including the
        two-body fold-down term
    residual_max : float — largest |(pq|rs) - sum_g L L| at termination
    """

    vectors: np.ndarray
    v0: np.ndarray
    residual_max: float

    @property
    def n_gamma(self) -> int:
        return self.vectors.shape[0]

    @property
    def n_spatial(self) -> int:
        return self.v0.shape[0]


def decompose(ham, threshold: float = DEFAULT_THRESHOLD) -> CholeskyFactorization:
    """Pivoted incomplete Cholesky of the ERI pair matrix.

    Pivots are chosen greedily on the largest remaining diagonal (first
    index wins ties), so the vector order is deterministic.  Small negative
    diagonals from roundoff are clamped; a diagonal below
    ``-threshold * 1e3`` raises :class:`NotPositiveSemidefiniteError`.
    """
    n = ham.n_spatial
    m = ham.g.reshape(n * n, n * n)
    diag = np.diagonal(m).copy()
    max_rank = n * (n + 1) // 2
    cols = []
    pivots = []
    while len(cols) < max_rank:
        if diag.min() < -threshold * 1e3:
            raise NotPositiveSemidefiniteError(
                f"pair-matrix diagonal reached {diag.min():.3e}")
        np.clip(diag, 0.0 if diag.min() >= -CLAMP_TOL else diag.min(), None, out=diag)
        piv = int(np.argmax(diag))
        d = diag[piv]
        if d <= threshold:
            break
        col = m[:, piv].copy()
        for c in cols:
            col -= c[piv] * c
        col /= np.sqrt(d)
        cols.append(col)
        pivots.append(piv)
        diag -= col * col
    if cols:
        vectors = np.stack(cols).reshape(len(cols), n, n)
        # enforce exact (p,q) symmetry against accumulated roundoff
        vectors = 0.5 * (vectors + vectors.transpose(0, 2, 1))
    else:
        vectors = np.zeros((0, n, n))
    v0 = ham.h - 0.5 * np.einsum("gpt,gtq->pq", vectors, vectors)
    resid = ham.g - np.einsum("gpq,grs->pqrs", vectors, vectors)
    return CholeskyFactorization(vectors=vectors, v0=v0,
                                 residual_max=float(np.abs(resid).max()))


def reconstruct_eri(factorization: CholeskyFactorization) -> np.ndarray:
    """Reassemble the approximate ERI tensor sum_g L^g[p,q] L^g[r,s]."""
    v = factorization.vectors
    return np.einsum("gpq,grs->pqrs", v, v)


_MAGIC = b"CHOLV1\x00\x00"


def save_vectors(factorization: CholeskyFactorization, path) -> None:
    """Binary cache: 8-byte tag, little-endian int64 (n_spatial, n_gamma),
    then the vectors as flat little-endian float64."""
    v = factorization.vectors
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qq", factorization.n_spatial, factorization.n_gamma))
        fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_vectors(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a Cholesky vector cache")
    n, ng = struct.unpack("<qq", raw[8:24])
    expected = 24 + 8 * ng * n * n
    if len(raw) != expected:
        raise ValueError(f"{path}: truncated cache ({len(raw)} of {expected} bytes)")
    return np.frombuffer(raw[24:], dtype="<f8").reshape(ng, n, n).astype(np.float64)


def load_factorization(path, ham) -> CholeskyFactorization:
    """Reload cached vectors and rebuild v0/residual against ``ham``."""
    vectors = load_vectors(path)
    if vectors.shape[1] != ham.n_spatial:
        raise ValueError("cached vectors do not match the Hamiltonian size")
    v0 = ham.h - 0.5 * np.einsum("gpt,gtq->pq", vectors, vectors)
    resid = ham.g - np.einsum("gpq,grs->pqrs", vectors, vectors)
    return CholeskyFactorization(vectors=vectors, v0=v0,
                                 residual_max=float(np.abs(resid).max()))
