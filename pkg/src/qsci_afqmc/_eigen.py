"""Lowest-eigenpair solver shared by the CI modules.

Dense symmetric diagonalization below ``dense_cutoff``; Davidson with a
diagonal preconditioner above it.  Both paths are deterministic: the
Davidson start vector is the coordinate vector at the smallest diagonal
entry and ties are resolved by the first index.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse

DENSE_CUTOFF = 2000
DAVIDSON_TOL = 1e-9
DAVIDSON_MAX_ITER = 200
_MAX_SUBSPACE = 48


class EigensolverError(RuntimeError):
    """Davidson failed to converge within the iteration budget."""


def _matvec_and_diag(operator):
    if scipy.sparse.issparse(operator):
        return (lambda x: operator @ x), operator.diagonal(), operator.shape[0]
    a = np.asarray(operator)
    return (lambda x: a @ x), np.diagonal(a).copy(), a.shape[0]


def lowest_eigenpair(operator, dense_cutoff: int = DENSE_CUTOFF,
                     tol: float = DAVIDSON_TOL,
                     max_iter: int = DAVIDSON_MAX_ITER):
    """Smallest eigenvalue and eigenvector of a real symmetric operator.

    ``operator`` may be a dense ndarray or a scipy sparse matrix.
    """
    dim = operator.shape[0]
    if dim != operator.shape[1]:
        raise ValueError("operator must be square")
    if dim <= dense_cutoff:
        dense = operator.toarray() if scipy.sparse.issparse(operator) else np.asarray(operator)
        evals, evecs = scipy.linalg.eigh(dense)
        return float(evals[0]), evecs[:, 0].copy()
    return _davidson(*_matvec_and_diag(operator), tol=tol, max_iter=max_iter)


def _davidson(matvec, diag, dim, tol, max_iter):
    start = np.zeros(dim)
    start[int(np.argmin(diag))] = 1.0
    basis = [start]
    sigma = [matvec(start)]
    theta, ritz = None, None
    for _ in range(max_iter):
        v = np.stack(basis, axis=1)
        s = np.stack(sigma, axis=1)
        t = v.T @ s
        t = 0.5 * (t + t.T)
        evals, evecs = scipy.linalg.eigh(t)
        theta = evals[0]
        y = evecs[:, 0]
        ritz = v @ y
        residual = s @ y - theta * ritz
        rnorm = np.linalg.norm(residual)
        if rnorm < tol:
            return float(theta), ritz / np.linalg.norm(ritz)
        denom = diag - theta
        denom = np.where(np.abs(denom) < 1e-8, np.copysign(1e-8, denom), denom)
        correction = residual / denom
        if len(basis) >= _MAX_SUBSPACE:
            basis, sigma = [ritz], [matvec(ritz)]
        # Gram-Schmidt against the current subspace, twice for stability
        for vec in basis:
            correction -= np.dot(vec, correction) * vec
        for vec in basis:
            correction -= np.dot(vec, correction) * vec
        norm = np.linalg.norm(correction)
        if norm < 1e-12:
            # stagnated correction: perturb along the largest residual entry
            correction = np.zeros(dim)
            correction[int(np.argmax(np.abs(residual)))] = 1.0
            for vec in basis:
                correction -= np.dot(vec, correction) * vec
            norm = np.linalg.norm(correction)
            if norm < 1e-12:
                return float(theta), ritz / np.linalg.norm(ritz)
        basis.append(correction / norm)
        sigma.append(matvec(basis[-1]))
    raise EigensolverError(
        f"Davidson did not reach |r| < {tol} in {max_iter} iterations")
