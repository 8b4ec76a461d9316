"""Determinant algebra over spatial orbitals with explicit spin strings.

Canonical operator ordering interleaves spins by orbital,

    |n_1a n_1b n_2a n_2b ...>   (orbital 1 alpha, orbital 1 beta, ...),

and all fermionic parity signs derive from that ordering.  Walker overlaps
factor into per-spin determinants, which corresponds to grouping all alpha
creation operators before all beta ones; the reordering phase between the
two conventions is applied once when a CI vector is turned into a
:class:`TrialWavefunction`, so that overlap, Green's function, and local
energy formulas can use plain determinant products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

# A mixed trial/walker overlap whose magnitude falls below
# OVERLAP_TOL * n_determinants (relative to the sum of |term|) is treated as
# vanishing: the estimators divide by it.
OVERLAP_TOL = 1e-14

# Per-determinant minors with |det| below this (relative) bound switch the
# local-energy evaluation to the exact expansion path.
SINGULAR_MINOR_TOL = 1e-12


class ZeroOverlapError(ArithmeticError):
    """Trial/walker overlap vanished; the caller should kill the walker."""


# ---------------------------------------------------------------------------
# Occupation strings and determinants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpinString:
    """Occupations of one spin sector as a bit mask over spatial orbitals."""

    bits: int
    norb: int

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.norb:
            raise ValueError("occupation bits outside orbital range")

    @classmethod
    def from_occupied(cls, occupied, norb):
        bits = 0
        for p in occupied:
            if not 0 <= p < norb:
                raise ValueError(f"orbital index {p} outside 0..{norb - 1}")
            if bits & (1 << p):
                raise ValueError(f"orbital {p} listed twice")
            bits |= 1 << p
        return cls(bits, norb)

    @cached_property
    def occupied(self) -> tuple[int, ...]:
        return tuple(p for p in range(self.norb) if self.bits >> p & 1)

    @property
    def n_occupied(self) -> int:
        return self.bits.bit_count()

    def __contains__(self, p):
        return bool(self.bits >> p & 1)


@dataclass(frozen=True)
class Determinant:
    """A Slater determinant given by alpha and beta occupation strings."""

    alpha: SpinString
    beta: SpinString

    def __post_init__(self):
        if self.alpha.norb != self.beta.norb:
            raise ValueError("alpha and beta strings must span the same orbitals")

    @property
    def norb(self) -> int:
        return self.alpha.norb

    @property
    def n_alpha(self) -> int:
        return self.alpha.n_occupied

    @property
    def n_beta(self) -> int:
        return self.beta.n_occupied

    @classmethod
    def from_occupied(cls, occ_alpha, occ_beta, norb):
        return cls(SpinString.from_occupied(occ_alpha, norb),
                   SpinString.from_occupied(occ_beta, norb))

    def to_interleaved(self) -> str:
        """Render as |n_1a n_1b n_2a ...> with orbital 1 leftmost."""
        out = []
        for p in range(self.norb):
            out.append("1" if p in self.alpha else "0")
            out.append("1" if p in self.beta else "0")
        return "".join(out)

    @classmethod
    def from_interleaved(cls, text: str) -> "Determinant":
        if len(text) % 2 or set(text) - {"0", "1"}:
            raise ValueError(f"not an interleaved occupation string: {text!r}")
        norb = len(text) // 2
        a = sum(1 << p for p in range(norb) if text[2 * p] == "1")
        b = sum(1 << p for p in range(norb) if text[2 * p + 1] == "1")
        return cls(SpinString(a, norb), SpinString(b, norb))


def hf_determinant(n_spatial, n_alpha, n_beta) -> Determinant:
    """Aufbau reference: the lowest orbitals of each spin occupied."""
    return Determinant(SpinString((1 << n_alpha) - 1, n_spatial),
                       SpinString((1 << n_beta) - 1, n_spatial))


def excitation_degree(d1: Determinant, d2: Determinant) -> int:
    return ((d1.alpha.bits ^ d2.alpha.bits).bit_count()
            + (d1.beta.bits ^ d2.beta.bits).bit_count()) // 2


# ---------------------------------------------------------------------------
# Parity bookkeeping
# ---------------------------------------------------------------------------

def _count_between(bits: int, lo: int, hi: int) -> int:
    """Occupied orbitals strictly between positions lo and hi."""
    if lo > hi:
        lo, hi = hi, lo
    mask = ((1 << hi) - 1) >> (lo + 1) << (lo + 1)
    return (bits & mask).bit_count()


def _spin_single_sign(bits: int, hole: int, part: int) -> int:
    return -1 if _count_between(bits, hole, part) % 2 else 1


def _spin_excitation(bits1: int, bits2: int):
    """Holes (occupied only in bits1) and particles (only in bits2), ascending."""
    diff = bits1 ^ bits2
    holes = [p for p in range(diff.bit_length()) if diff >> p & 1 and bits1 >> p & 1]
    parts = [p for p in range(diff.bit_length()) if diff >> p & 1 and bits2 >> p & 1]
    return holes, parts


def _spin_align_sign(bits1: int, holes, parts) -> int:
    """Permutation sign aligning bits1 onto bits2 by pairing sorted holes
    with sorted particles, one single excitation at a time."""
    sign = 1
    bits = bits1
    for h, p in zip(holes, parts):
        sign *= _spin_single_sign(bits, h, p)
        bits ^= (1 << h) | (1 << p)
    return sign


def interleaved_to_blocked_phase(det: Determinant) -> int:
    """Phase relating the interleaved operator product to alpha-block-first.

    Moving every beta creation operator past the alpha operators that follow
    it costs one transposition per (alpha occupied a, beta occupied b) pair
    with a > b.
    """
    swaps = 0
    for b in det.beta.occupied:
        swaps += (det.alpha.bits >> (b + 1)).bit_count()
    return -1 if swaps % 2 else 1


# ---------------------------------------------------------------------------
# Slater-Condon matrix elements
# ---------------------------------------------------------------------------

def _diagonal_element(ham, det: Determinant) -> float:
    oa = np.fromiter(det.alpha.occupied, dtype=np.intp, count=det.n_alpha)
    ob = np.fromiter(det.beta.occupied, dtype=np.intp, count=det.n_beta)
    h, g = ham.h, ham.g
    e = h[oa, oa].sum() + h[ob, ob].sum()
    gaa = g[np.ix_(oa, oa, oa, oa)]
    gbb = g[np.ix_(ob, ob, ob, ob)]
    e += 0.5 * (np.einsum("ppqq->", gaa) - np.einsum("pqqp->", gaa))
    e += 0.5 * (np.einsum("ppqq->", gbb) - np.einsum("pqqp->", gbb))
    e += np.einsum("ppqq->", g[np.ix_(oa, oa, ob, ob)])
    return float(e)


def _single_element(ham, same, other, hole, part):
    """<d1|H|d2> for a single excitation hole->part in one spin sector.

    same/other: occupied index arrays of the common spectator orbitals in the
    excited spin sector and the full other sector.
    """
    h, g = ham.h, ham.g
    val = h[hole, part]
    if same.size:
        val += g[hole, part, same, same].sum() - g[hole, same, same, part].sum()
    if other.size:
        val += g[hole, part, other, other].sum()
    return float(val)


def slater_condon(ham, d1: Determinant, d2: Determinant) -> float:
    """Matrix element <d1|H|d2> (without e_core for d1 != d2; the diagonal
    includes e_core).  Parity follows the interleaved spin-orbital order."""
    if d1.norb != ham.n_spatial or d2.norb != ham.n_spatial:
        raise ValueError("determinant orbital count differs from Hamiltonian")
    if (d1.n_alpha, d1.n_beta) != (d2.n_alpha, d2.n_beta):
        return 0.0
    diff_a = (d1.alpha.bits ^ d2.alpha.bits).bit_count() // 2
    diff_b = (d1.beta.bits ^ d2.beta.bits).bit_count() // 2
    deg = diff_a + diff_b
    if deg > 2:
        return 0.0
    if deg == 0:
        return _diagonal_element(ham, d1) + ham.e_core

    eta = interleaved_to_blocked_phase(d1) * interleaved_to_blocked_phase(d2)
    ha, pa = _spin_excitation(d1.alpha.bits, d2.alpha.bits)
    hb, pb = _spin_excitation(d1.beta.bits, d2.beta.bits)
    sign = (eta * _spin_align_sign(d1.alpha.bits, ha, pa)
            * _spin_align_sign(d1.beta.bits, hb, pb))
    g = ham.g

    if deg == 1:
        if diff_a:
            common = np.array([p for p in d1.alpha.occupied if p != ha[0]], dtype=np.intp)
            other = np.fromiter(d1.beta.occupied, dtype=np.intp, count=d1.n_beta)
            val = _single_element(ham, common, other, ha[0], pa[0])
        else:
            common = np.array([p for p in d1.beta.occupied if p != hb[0]], dtype=np.intp)
            other = np.fromiter(d1.alpha.occupied, dtype=np.intp, count=d1.n_alpha)
            val = _single_element(ham, common, other, hb[0], pb[0])
        return sign * val

    if diff_a == 2:
        (m, n), (p, q) = ha, pa
        return sign * (g[m, p, n, q] - g[m, q, n, p])
    if diff_b == 2:
        (m, n), (p, q) = hb, pb
        return sign * (g[m, p, n, q] - g[m, q, n, p])
    return sign * g[ha[0], pa[0], hb[0], pb[0]]


# ---------------------------------------------------------------------------
# Walkers and trial wave functions
# ---------------------------------------------------------------------------

@dataclass
class SlaterMatrix:
    """Non-orthogonal Slater determinant: one coefficient matrix per spin,
    shaped (n_spatial, n_occupied)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha)
        self.beta = np.asarray(self.beta)
        if self.alpha.ndim != 2 or self.beta.ndim != 2:
            raise ValueError("Slater matrices must be two-dimensional")
        if self.alpha.shape[0] != self.beta.shape[0]:
            raise ValueError("alpha and beta blocks must share n_spatial rows")

    @property
    def n_spatial(self):
        return self.alpha.shape[0]

    @classmethod
    def from_determinant(cls, det: Determinant, dtype=np.float64):
        eye = np.eye(det.norb, dtype=dtype)
        return cls(eye[:, list(det.alpha.occupied)].copy(),
                   eye[:, list(det.beta.occupied)].copy())

    def copy(self):
        return SlaterMatrix(self.alpha.copy(), self.beta.copy())


@dataclass(frozen=True, eq=False)
class TrialWavefunction:
    """Multideterminant trial state used by the projector machinery.

    ``coefficients`` are stored in the per-spin (alpha block first) operator
    ordering so that <D_i|phi> = det(A_i^a) det(A_i^b) holds without extra
    phases.  Use :meth:`from_ci` to convert a CI eigenvector expressed in the
    interleaved convention.
    """

    determinants: tuple[Determinant, ...]
    coefficients: np.ndarray
    n_spatial: int
    n_alpha: int
    n_beta: int

    def __post_init__(self):
        object.__setattr__(self, "determinants", tuple(self.determinants))
        coeffs = np.asarray(self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if len(self.determinants) != coeffs.shape[0] or coeffs.ndim != 1:
            raise ValueError("one coefficient per determinant required")
        if not self.determinants:
            raise ValueError("trial needs at least one determinant")
        for d in self.determinants:
            if d.norb != self.n_spatial:
                raise ValueError("determinant orbital count mismatch")
            if d.n_alpha != self.n_alpha or d.n_beta != self.n_beta:
                raise ValueError("determinant electron counts mismatch")

    @classmethod
    def from_ci(cls, determinants, coefficients) -> "TrialWavefunction":
        """Build from an interleaved-convention CI expansion."""
        determinants = tuple(determinants)
        if not determinants:
            raise ValueError("trial needs at least one determinant")
        phases = np.array([interleaved_to_blocked_phase(d) for d in determinants])
        d0 = determinants[0]
        return cls(determinants, np.asarray(coefficients) * phases,
                   d0.norb, d0.n_alpha, d0.n_beta)

    @cached_property
    def occ_alpha(self) -> np.ndarray:
        """(n_det, n_alpha) occupied-orbital indices per determinant."""
        return np.array([d.alpha.occupied for d in self.determinants],
                        dtype=np.intp).reshape(len(self.determinants), self.n_alpha)

    @cached_property
    def occ_beta(self) -> np.ndarray:
        return np.array([d.beta.occupied for d in self.determinants],
                        dtype=np.intp).reshape(len(self.determinants), self.n_beta)

    @property
    def n_determinants(self) -> int:
        return len(self.determinants)


# ---------------------------------------------------------------------------
# Determinants and adjugates of stacked minors
# ---------------------------------------------------------------------------

def det_and_adjugate(a: np.ndarray):
    """Determinant and adjugate of stacked square matrices (..., k, k).

    Uses the Faddeev-LeVerrier recursion, which stays finite for singular
    input: A @ adj(A) = det(A) I even when det(A) = 0.
    """
    a = np.asarray(a)
    k = a.shape[-1]
    if k == 0:
        return np.ones(a.shape[:-2], dtype=a.dtype), np.zeros_like(a)
    if k == 1:
        return a[..., 0, 0].copy(), np.ones_like(a)
    if k == 2:
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        adj = np.empty_like(a)
        adj[..., 0, 0] = a[..., 1, 1]
        adj[..., 1, 1] = a[..., 0, 0]
        adj[..., 0, 1] = -a[..., 0, 1]
        adj[..., 1, 0] = -a[..., 1, 0]
        return det, adj
    eye = np.eye(k, dtype=a.dtype)
    b = np.broadcast_to(eye, a.shape).copy()
    c = None
    for m in range(1, k):
        ab = a @ b
        c = -np.einsum("...ii->...", ab) / m
        b = ab + c[..., None, None] * eye
    ab = a @ b
    c = -np.einsum("...ii->...", ab) / k
    det = -c if k % 2 else c
    adj = b if (k - 1) % 2 == 0 else -b
    return det, adj


def batched_det(a: np.ndarray) -> np.ndarray:
    """Determinant of stacked square matrices, cheap closed form for k <= 2."""
    a = np.asarray(a)
    k = a.shape[-1]
    if k == 0:
        return np.ones(a.shape[:-2], dtype=a.dtype)
    if k == 1:
        return a[..., 0, 0].copy()
    if k == 2:
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    return np.linalg.det(a)


def _spin_minors(occ: np.ndarray, w: np.ndarray):
    """Per-determinant overlap minors of one spin sector.

    Returns (dets, theta_scaled) where theta_scaled[d] = w @ adj(A_d) equals
    det(A_d) * w @ inv(A_d) whenever A_d is invertible.
    """
    minors = w[occ, :]                    # (n_det, k, k)
    dets, adj = det_and_adjugate(minors)
    theta = np.einsum("pk,dkj->dpj", w, adj)
    return dets, theta


def trial_walker_overlap(trial: TrialWavefunction, walker: SlaterMatrix) -> complex:
    """<Psi_T|phi> = sum_i conj(c_i) det(A_i^a) det(A_i^b)."""
    if walker.n_spatial != trial.n_spatial:
        raise ValueError("walker orbital count differs from trial")
    det_a = np.linalg.det(walker.alpha[trial.occ_alpha, :])
    det_b = np.linalg.det(walker.beta[trial.occ_beta, :])
    return complex(np.sum(np.conj(trial.coefficients) * det_a * det_b))


def _overlap_terms(trial, walker):
    det_a, theta_a = _spin_minors(trial.occ_alpha, walker.alpha)
    det_b, theta_b = _spin_minors(trial.occ_beta, walker.beta)
    terms = np.conj(trial.coefficients) * det_a * det_b
    denom = terms.sum()
    scale = np.abs(np.conj(trial.coefficients)) * np.abs(det_a) * np.abs(det_b)
    if abs(denom) <= OVERLAP_TOL * trial.n_determinants * max(scale.sum(), 1e-300):
        raise ZeroOverlapError("trial/walker overlap vanished")
    return det_a, det_b, theta_a, theta_b, denom


def greens_function(trial: TrialWavefunction, walker: SlaterMatrix):
    """Mixed one-body Green's functions G[p,q] = <Psi_T|a+_p a_q|phi> / <Psi_T|phi>
    per spin sector, each (n_spatial, n_spatial)."""
    det_a, det_b, theta_a, theta_b, denom = _overlap_terms(trial, walker)
    cbar = np.conj(trial.coefficients)
    n = trial.n_spatial
    dtype = np.result_type(theta_a.dtype, cbar.dtype)
    ga = np.zeros((n, n), dtype=dtype)
    gb = np.zeros((n, n), dtype=dtype)
    wa = (cbar * det_b)[:, None, None] * np.swapaxes(theta_a, 1, 2)  # (d, j, q)
    wb = (cbar * det_a)[:, None, None] * np.swapaxes(theta_b, 1, 2)
    np.add.at(ga, trial.occ_alpha.reshape(-1), wa.reshape(-1, n))
    np.add.at(gb, trial.occ_beta.reshape(-1), wb.reshape(-1, n))
    return ga / denom, gb / denom


def one_rdm(trial: TrialWavefunction):
    """Spin-resolved one-body density matrices of the trial itself,
    <T|a+_p a_q|T> / <T|T>, evaluated determinant pair by pair."""
    n = trial.n_spatial
    da = np.zeros((n, n), dtype=complex)
    db = np.zeros((n, n), dtype=complex)
    c = trial.coefficients
    norm = float(np.sum(np.abs(c) ** 2))
    dets = trial.determinants
    for i, di in enumerate(dets):
        wi = np.conj(c[i])
        for j, dj in enumerate(dets):
            if (di.alpha.bits ^ dj.alpha.bits).bit_count() \
                    + (di.beta.bits ^ dj.beta.bits).bit_count() > 2:
                continue
            w = wi * c[j]
            if di.alpha.bits == dj.alpha.bits and di.beta.bits == dj.beta.bits:
                for p in di.alpha.occupied:
                    da[p, p] += w
                for p in di.beta.occupied:
                    db[p, p] += w
            elif di.beta.bits == dj.beta.bits:
                (h,), (p,) = _spin_excitation(di.alpha.bits, dj.alpha.bits)
                da[h, p] += w * _spin_single_sign(di.alpha.bits, h, p)
            elif di.alpha.bits == dj.alpha.bits:
                (h,), (p,) = _spin_excitation(di.beta.bits, dj.beta.bits)
                db[h, p] += w * _spin_single_sign(di.beta.bits, h, p)
    da /= norm
    db /= norm
    if np.allclose(da.imag, 0.0, atol=1e-14) and np.allclose(db.imag, 0.0, atol=1e-14):
        return da.real, db.real
    return da, db


# ---------------------------------------------------------------------------
# Local energy
# ---------------------------------------------------------------------------

def _connected_determinants(det: Determinant):
    """All determinants reached from ``det`` by at most a double excitation,
    including ``det`` itself."""
    n = det.norb
    occ_a, occ_b = det.alpha.occupied, det.beta.occupied
    vir_a = [p for p in range(n) if p not in det.alpha]
    vir_b = [p for p in range(n) if p not in det.beta]

    def alpha_singles():
        for h in occ_a:
            for p in vir_a:
                yield SpinString(det.alpha.bits ^ (1 << h) | (1 << p), n)

    def beta_singles():
        for h in occ_b:
            for p in vir_b:
                yield SpinString(det.beta.bits ^ (1 << h) | (1 << p), n)

    yield det
    for sa in alpha_singles():
        yield Determinant(sa, det.beta)
    for sb in beta_singles():
        yield Determinant(det.alpha, sb)
    for sa in alpha_singles():
        for sb in beta_singles():
            yield Determinant(sa, sb)
    for ha, hb in combinations(occ_a, 2):
        for pa, pb in combinations(vir_a, 2):
            bits = det.alpha.bits ^ (1 << ha) ^ (1 << hb) | (1 << pa) | (1 << pb)
            yield Determinant(SpinString(bits, n), det.beta)
    for ha, hb in combinations(occ_b, 2):
        for pa, pb in combinations(vir_b, 2):
            bits = det.beta.bits ^ (1 << ha) ^ (1 << hb) | (1 << pa) | (1 << pb)
            yield Determinant(det.alpha, SpinString(bits, n))


def _blocked_element(ham, d1, d2):
    """<d1|H|d2> with per-spin (blocked) phase conventions."""
    return (slater_condon(ham, d1, d2)
            * interleaved_to_blocked_phase(d1) * interleaved_to_blocked_phase(d2))


def _det_walker_overlap(det: Determinant, walker: SlaterMatrix) -> complex:
    a = np.linalg.det(walker.alpha[list(det.alpha.occupied), :])
    b = np.linalg.det(walker.beta[list(det.beta.occupied), :])
    return complex(a * b)


def _exact_ham_overlap(ham, det: Determinant, walker: SlaterMatrix) -> complex:
    """<det|H|phi> via expansion of H|det> over connected determinants.

    Exact for any walker, including ones orthogonal to ``det``; cost grows
    with the excitation count so this is reserved for degenerate minors and
    reference-determinant walkers.
    """
    val = 0.0 + 0.0j
    for other in _connected_determinants(det):
        elem = _blocked_element(ham, det, other)
        if elem != 0.0:
            val += elem * _det_walker_overlap(other, walker)
    return val


def local_energy(ham, trial: TrialWavefunction, walker: SlaterMatrix,
                 factors=None) -> complex:
    """Mixed-estimator local energy E_L = <Psi_T|H|phi> / <Psi_T|phi>.

    When ``factors`` (a Cholesky factorization of g) is given, the two-body
    part is contracted through the factorized integrals — the same operator
    the propagator uses; otherwise the exact g tensor is contracted.
    """
    det_a, det_b, theta_a, theta_b, denom = _overlap_terms(trial, walker)
    cbar = np.conj(trial.coefficients)
    h, g = ham.h, ham.g
    n = trial.n_spatial

    scale_a = np.max(np.abs(det_a)) if det_a.size else 1.0
    scale_b = np.max(np.abs(det_b)) if det_b.size else 1.0
    cutoff_a = SINGULAR_MINOR_TOL * max(scale_a, 1e-300)
    cutoff_b = SINGULAR_MINOR_TOL * max(scale_b, 1e-300)

    numer = 0.0 + 0.0j
    for d in range(trial.n_determinants):
        if abs(det_a[d]) <= cutoff_a or abs(det_b[d]) <= cutoff_b:
            numer += cbar[d] * _exact_ham_overlap(ham, trial.determinants[d], walker)
            continue
        oa = trial.occ_alpha[d]
        ob = trial.occ_beta[d]
        ga = np.zeros((n, n), dtype=complex)
        gb = np.zeros((n, n), dtype=complex)
        ga[oa, :] = theta_a[d].T / det_a[d]
        gb[ob, :] = theta_b[d].T / det_b[d]
        overlap_d = det_a[d] * det_b[d]
        e1 = np.sum(h * (ga + gb))
        if factors is not None:
            lt = factors.vectors
            fa = np.einsum("gpq,pq->g", lt, ga)
            fb = np.einsum("gpq,pq->g", lt, gb)
            xa = np.einsum("gpq,ps,gsr,rq->", lt, ga, lt, ga)
            xb = np.einsum("gpq,ps,gsr,rq->", lt, gb, lt, gb)
            e2 = 0.5 * (np.sum((fa + fb) ** 2) - xa - xb)
        else:
            gt = ga + gb
            e2 = 0.5 * np.einsum("pqrs,pq,rs->", g, gt, gt)
            e2 -= 0.5 * (np.einsum("pqrs,ps,rq->", g, ga, ga)
                         + np.einsum("pqrs,ps,rq->", g, gb, gb))
        numer += cbar[d] * (e1 + e2) * overlap_d
    return complex(ham.e_core + numer / denom)
