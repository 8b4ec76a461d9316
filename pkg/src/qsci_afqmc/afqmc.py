"""Phaseless auxiliary-field projector Monte Carlo.

The two-body interaction is written through its Cholesky vectors as a sum
of squared one-body operators, each square is decoupled by a Gaussian
auxiliary field, and walkers (Slater determinants) are propagated with the
resulting stochastic one-body propagator.  Importance sampling shifts each
field by a force bias computed from the mixed Green's function, the
mean-field background is subtracted from every Cholesky operator, and the
phaseless constraint projects the walker weights onto the real axis:

    w  <-  w * |S| * max(0, cos(arg S))

with ``S`` the full hybrid step factor (overlap ratio times the Gaussian
importance ratio times the scalar propagator factors).  Energies are
accumulated in fixed-length blocks and the statistical error comes from a
pair-averaging blocking transformation.

All per-walker data lives in stacked arrays so the numerics run as batched
matrix operations over the whole population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .detops import (
    OVERLAP_TOL,
    SINGULAR_MINOR_TOL,
    SlaterMatrix,
    TrialWavefunction,
    ZeroOverlapError,
    batched_det,
    det_and_adjugate,
    hf_determinant,
    local_energy,
    one_rdm,
    trial_walker_overlap,
)
from .factorize import CholeskyFactorization
from .hamio import Hamiltonian

DEFAULT_DTAU = 0.005
DEFAULT_WALKERS = 600
DEFAULT_STABILIZE_EVERY = 5
DEFAULT_POPCONTROL_EVERY = 10
DEFAULT_BLOCK_STEPS = 10
DEFAULT_EQUILIBRATION_TAU = 2.0
DEFAULT_TAYLOR_ORDER = 18
DEFAULT_FORCE_BIAS_CAP = 1.0
MIN_BLOCKING_SAMPLES = 32
_ENERGY_CHUNK_BYTES = 64 * 2**20

VARIANT_STANDARD = "standard-arg"
VARIANT_REAL_SIGN = "real-sign"
_VARIANTS = (VARIANT_STANDARD, VARIANT_REAL_SIGN)

# Sub-stream tags for the counter-based generator.
_FIELD_STREAM = 0
_POPCTRL_STREAM = 1


class PopulationCollapseError(RuntimeError):
    """Every walker weight reached zero; the run cannot continue."""


@dataclass(frozen=True)
class PropagatorConfig:
    """Run parameters for the projector stage.

    ``mean_field_shift`` optionally pins the per-operator expectation values
    subtracted from each Cholesky operator (complex, one per vector); when
    ``None`` they are taken from the trial density at propagator build.
    """

    dtau: float = DEFAULT_DTAU
    n_steps: int = 2000
    n_walkers: int = DEFAULT_WALKERS
    seed: int = 0
    stabilize_every: int = DEFAULT_STABILIZE_EVERY
    popcontrol_every: int = DEFAULT_POPCONTROL_EVERY
    block_steps: int = DEFAULT_BLOCK_STEPS
    equilibration_tau: float = DEFAULT_EQUILIBRATION_TAU
    phaseless_variant: str = VARIANT_STANDARD
    mean_field_shift: tuple | None = None
    force_bias_cap: float = DEFAULT_FORCE_BIAS_CAP
    taylor_order: int = DEFAULT_TAYLOR_ORDER

    def __post_init__(self):
        if self.dtau <= 0:
            raise ValueError("dtau must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if self.n_walkers <= 0:
            raise ValueError("n_walkers must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        for name in ("stabilize_every", "popcontrol_every", "block_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.phaseless_variant not in _VARIANTS:
            raise ValueError(
                f"phaseless_variant must be one of {_VARIANTS}")


def step_rng(seed: int, step: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, step, sub-stream).

    Every step draws from its own statistically independent stream, so a
    run is reproducible regardless of how the population is laid out.
    """
    key = np.array([seed, step * 8 + stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# Walkers
# ---------------------------------------------------------------------------

@dataclass
class Walker:
    """Single-walker view used by tests and small-scale checks."""

    slater: SlaterMatrix
    weight: float = 1.0
    phase: complex = 1.0 + 0.0j
    overlap: complex = 0.0 + 0.0j
    log_shift: complex = 0.0 + 0.0j


@dataclass(eq=False)
class WalkerEnsemble:
    """Stacked walker population.

    The cached trial overlaps satisfy ``true overlap = exp(log_shift) *
    overlap``; orthonormalization moves scale factors into ``log_shift`` so
    the cached part stays O(1).  ``phase`` accumulates the unit-modulus part
    of every step factor as a diagnostic of phase coherence.
    """

    slater_alpha: np.ndarray   # (n_w, n_spatial, n_alpha) complex
    slater_beta: np.ndarray    # (n_w, n_spatial, n_beta) complex
    weights: np.ndarray        # (n_w,) real, >= 0
    phases: np.ndarray         # (n_w,) complex, unit modulus
    overlaps: np.ndarray       # (n_w,) complex
    log_shifts: np.ndarray     # (n_w,) complex

    @property
    def n_walkers(self) -> int:
        return self.slater_alpha.shape[0]

    @property
    def n_spatial(self) -> int:
        return self.slater_alpha.shape[1]

    def to_walkers(self) -> list[Walker]:
        out = []
        for i in range(self.n_walkers):
            mat = SlaterMatrix(self.slater_alpha[i].copy(),
                               self.slater_beta[i].copy())
            out.append(Walker(slater=mat, weight=float(self.weights[i]),
                              phase=complex(self.phases[i]),
                              overlap=complex(self.overlaps[i]),
                              log_shift=complex(self.log_shifts[i])))
        return out


def init_ensemble(trial: TrialWavefunction, n_walkers: int,
                  initial: SlaterMatrix | None = None) -> WalkerEnsemble:
    """Start every walker from the same reference determinant.

    Defaults to the lowest-orbital reference determinant; a trial
    orthogonal to the starting point is rejected, since the projection
    would begin from a state with no ground-state component the trial can
    track.
    """
    if initial is None:
        ref = hf_determinant(trial.n_spatial, trial.n_alpha, trial.n_beta)
        initial = SlaterMatrix.from_determinant(ref, dtype=complex)
    ovlp = trial_walker_overlap(trial, initial)
    if abs(ovlp) <= OVERLAP_TOL * trial.n_determinants:
        raise ValueError("initial walker is orthogonal to the trial state")
    wa = np.repeat(np.asarray(initial.alpha, dtype=complex)[None], n_walkers, axis=0)
    wb = np.repeat(np.asarray(initial.beta, dtype=complex)[None], n_walkers, axis=0)
    return WalkerEnsemble(
        slater_alpha=wa, slater_beta=wb,
        weights=np.ones(n_walkers),
        phases=np.ones(n_walkers, dtype=complex),
        overlaps=np.full(n_walkers, ovlp, dtype=complex),
        log_shifts=np.zeros(n_walkers, dtype=complex))


# ---------------------------------------------------------------------------
# Precomputed trial-side data
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrialContext:
    """Trial determinant data gathered for batched contractions."""

    ham: Hamiltonian
    trial: TrialWavefunction
    factors: CholeskyFactorization
    cbar: np.ndarray      # conj(coefficients), (n_det,)
    occ_a: np.ndarray     # (n_det, n_alpha)
    occ_b: np.ndarray
    hsel_a: np.ndarray    # h rows at alpha-occupied orbitals, (n_det, k_a, n)
    hsel_b: np.ndarray
    lsel_a: np.ndarray    # Cholesky rows likewise, (n_det, n_gamma, k_a, n)
    lsel_b: np.ndarray
    lrow_a: np.ndarray    # same data laid out (n * n_det * k_a, n_gamma)
    lrow_b: np.ndarray


def build_trial_context(ham: Hamiltonian, trial: TrialWavefunction,
                        factors: CholeskyFactorization) -> TrialContext:
    if trial.n_spatial != ham.n_spatial:
        raise ValueError("trial orbital count differs from the Hamiltonian")
    if factors.n_spatial != ham.n_spatial:
        raise ValueError("factorization orbital count differs")
    occ_a, occ_b = trial.occ_alpha, trial.occ_beta
    vec = factors.vectors
    lsel_a = np.ascontiguousarray(vec[:, occ_a, :].transpose(1, 0, 2, 3))
    lsel_b = np.ascontiguousarray(vec[:, occ_b, :].transpose(1, 0, 2, 3))
    n_gamma = vec.shape[0]
    return TrialContext(
        ham=ham, trial=trial, factors=factors,
        cbar=np.conj(trial.coefficients),
        occ_a=occ_a, occ_b=occ_b,
        hsel_a=ham.h[occ_a, :], hsel_b=ham.h[occ_b, :],
        lsel_a=lsel_a, lsel_b=lsel_b,
        lrow_a=np.ascontiguousarray(
            lsel_a.transpose(3, 0, 2, 1).reshape(-1, n_gamma), dtype=complex),
        lrow_b=np.ascontiguousarray(
            lsel_b.transpose(3, 0, 2, 1).reshape(-1, n_gamma), dtype=complex))


def _minor_data(ctx: TrialContext, wa: np.ndarray, wb: np.ndarray,
                fold_mixed_coef: bool = False):
    """Per-determinant overlap minors for a stacked population.

    Returns (det_a, det_b, theta_a, theta_b, denom) with theta the
    adjugate-scaled projection  W @ adj(A_d), finite for singular minors,
    and denom the trial/walker overlaps (n_w,).  theta is laid out
    (n_w, n, n_det, k) -- walker, orbital row, determinant, minor column --
    which is the native output order of the batched product below.

    With ``fold_mixed_coef`` each spin's theta additionally carries
    conj(c_d) times the opposite spin's minor determinant, so summing the
    alpha and beta blocks over d yields the mixed Green's function
    numerator directly.  Folding happens on the small adjugates, before
    the walker-batched product.
    """
    n_w, n = wa.shape[0], wa.shape[1]
    n_det = ctx.occ_a.shape[0]
    k_a, k_b = ctx.occ_a.shape[1], ctx.occ_b.shape[1]
    minors_a = wa[:, ctx.occ_a, :]
    minors_b = wb[:, ctx.occ_b, :]
    det_a, adj_a = det_and_adjugate(minors_a)
    det_b, adj_b = det_and_adjugate(minors_b)
    if fold_mixed_coef:
        adj_a = adj_a * (ctx.cbar[None, :] * det_b)[:, :, None, None]
        adj_b = adj_b * (ctx.cbar[None, :] * det_a)[:, :, None, None]
    # theta[w, :, d, :] = W_w adj(A_d); one walker-batched product per spin
    theta_a = np.matmul(
        wa, adj_a.transpose(0, 2, 1, 3).reshape(n_w, k_a, n_det * k_a))
    theta_b = np.matmul(
        wb, adj_b.transpose(0, 2, 1, 3).reshape(n_w, k_b, n_det * k_b))
    theta_a = theta_a.reshape(n_w, n, n_det, k_a)
    theta_b = theta_b.reshape(n_w, n, n_det, k_b)
    terms = ctx.cbar[None, :] * det_a * det_b
    return det_a, det_b, theta_a, theta_b, terms.sum(axis=1)


def _overlap_floor(ctx: TrialContext, det_a, det_b) -> np.ndarray:
    scale = (np.abs(ctx.cbar)[None, :] * np.abs(det_a) * np.abs(det_b)).sum(axis=1)
    return OVERLAP_TOL * ctx.trial.n_determinants * np.maximum(scale, 1e-300)


# ---------------------------------------------------------------------------
# Propagator
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Propagator:
    """Precomputed pieces of one imaginary-time step."""

    dtau: float
    half_step: np.ndarray      # expm(-dtau/2 * shifted one-body matrix)
    vectors: np.ndarray        # Cholesky vectors (n_gamma, n, n)
    mean_field: np.ndarray     # trial expectation of each Cholesky operator
    log_scalar: float          # per-step scalar weight exponent
    e_shift: float
    taylor_order: int = DEFAULT_TAYLOR_ORDER
    force_bias_cap: float = DEFAULT_FORCE_BIAS_CAP
    variant: str = VARIANT_STANDARD

    @property
    def sqrt_dtau(self) -> float:
        return math.sqrt(self.dtau)

    @property
    def n_gamma(self) -> int:
        return self.vectors.shape[0]


def build_propagator(ham: Hamiltonian, factors: CholeskyFactorization,
                     trial: TrialWavefunction, dtau: float,
                     e_shift: float = 0.0,
                     mean_field_shift=None,
                     taylor_order: int = DEFAULT_TAYLOR_ORDER,
                     force_bias_cap: float = DEFAULT_FORCE_BIAS_CAP,
                     variant: str = VARIANT_STANDARD) -> Propagator:
    """Assemble the mean-field-shifted one-body step.

    The one-body matrix combines the bare kinetic/nuclear part, the
    exchange fold-down from reordering the factorized interaction, and the
    mean-field contraction of each Cholesky operator with the trial density.
    The constant terms (mean-field square and energy shift) go into a scalar
    exponent applied to every walker weight each step.

    ``mean_field_shift`` overrides the per-operator expectations ⟨i L̂_γ⟩
    (one complex value per Cholesky vector); by default they come from the
    trial one-body density.
    """
    if mean_field_shift is None:
        da, db = one_rdm(trial)
        dens = np.asarray(da) + np.asarray(db)
        lbar = np.einsum("gpq,pq->g", factors.vectors, dens)
    else:
        shift = np.asarray(mean_field_shift, dtype=complex)
        if shift.shape != (factors.n_gamma,):
            raise ValueError("mean_field_shift needs one entry per vector")
        lbar = shift / 1j
    if np.abs(np.imag(lbar)).max(initial=0.0) > 1e-10:
        raise ValueError("mean-field shift is not of the form i * real")
    lbar = np.real(lbar)
    shifted = factors.v0 + np.einsum("g,gpq->pq", lbar, factors.vectors)
    half_step = scipy.linalg.expm(-0.5 * dtau * shifted)
    log_scalar = dtau * (e_shift - ham.e_core + 0.5 * float(lbar @ lbar))
    return Propagator(dtau=dtau, half_step=half_step, vectors=factors.vectors,
                      mean_field=lbar, log_scalar=log_scalar, e_shift=e_shift,
                      taylor_order=taylor_order, force_bias_cap=force_bias_cap,
                      variant=variant)


@dataclass(frozen=True)
class AuxiliaryFieldSample:
    """Fields and force bias used in one propagation step."""

    x: np.ndarray            # (n_w, n_gamma) standard normal draws
    force_bias: np.ndarray   # (n_w, n_gamma) complex shifts, after capping
    n_capped: int


def compute_force_bias(ctx: TrialContext, prop: Propagator,
                       ensemble: WalkerEnsemble):
    """Optimal field shift from the mixed Green's function, capped per
    component at ``force_bias_cap`` with the phase preserved."""
    # f[w, g] = sum_d conj(c_d) det_b det_a tr(L^g_sel W A_d^-1) / <T|phi_w>:
    # the Green's function contracted with each Cholesky vector, without
    # ever materializing G itself.  With the mixed coefficients folded into
    # theta, the whole (orbital, det, column) contraction per spin is one
    # matrix product against the pre-flattened Cholesky rows.
    det_a, det_b, wth_a, wth_b, denom = _minor_data(
        ctx, ensemble.slater_alpha, ensemble.slater_beta,
        fold_mixed_coef=True)
    n_w = ensemble.n_walkers
    f = np.matmul(wth_a.reshape(n_w, -1), ctx.lrow_a) \
        + np.matmul(wth_b.reshape(n_w, -1), ctx.lrow_b)
    alive = np.abs(denom) > _overlap_floor(ctx, det_a, det_b)
    safe = np.where(alive, denom, 1.0)
    f = f / safe[:, None]
    xbar = -1j * prop.sqrt_dtau * (f - prop.mean_field[None, :])
    xbar[~alive] = 0.0
    mag = np.abs(xbar)
    over = mag > prop.force_bias_cap
    if over.any():
        xbar = np.where(over, xbar * (prop.force_bias_cap
                                      / np.where(mag == 0.0, 1.0, mag)), xbar)
    return xbar, int(over.sum())


def _apply_taylor_exponential(m: np.ndarray, w: np.ndarray, order: int) -> np.ndarray:
    """exp(m) @ w column-wise via a truncated series (m is O(sqrt(dtau)))."""
    acc = w.copy()
    term = w
    for k in range(1, order + 1):
        term = np.matmul(m, term) / k
        acc = acc + term
    return acc


def propagate_step(ensemble: WalkerEnsemble, ctx: TrialContext,
                   prop: Propagator, fields: np.ndarray,
                   projection: str = "phaseless") -> AuxiliaryFieldSample:
    """Advance every walker one step with the given field draws.

    Applies the half/full/half split of the shifted propagator, then folds
    the full hybrid step factor into the weights under the phaseless
    constraint.  Walkers whose trial overlap collapses are zero-weighted.

    ``projection="free"`` skips the cosine projection, keeping the full
    complex factor split as magnitude (weight) times unit phase; combined
    with the accumulated phases this realizes unconstrained projection for
    validation runs (noisier, but free of constraint bias).
    """
    xbar, n_capped = compute_force_bias(ctx, prop, ensemble)
    x_eff = fields - xbar

    n = ensemble.n_spatial
    vec_flat = prop.vectors.reshape(prop.n_gamma, n * n)
    m = (1j * prop.sqrt_dtau) * np.matmul(x_eff, vec_flat).reshape(-1, n, n)
    half = prop.half_step
    k_a = ensemble.slater_alpha.shape[2]
    wab = np.concatenate([ensemble.slater_alpha, ensemble.slater_beta], axis=2)
    wab = np.matmul(half, wab)
    wab = _apply_taylor_exponential(m, wab, prop.taylor_order)
    wab = np.matmul(half, wab)
    ensemble.slater_alpha = np.ascontiguousarray(wab[:, :, :k_a])
    ensemble.slater_beta = np.ascontiguousarray(wab[:, :, k_a:])

    det_a = batched_det(ensemble.slater_alpha[:, ctx.occ_a, :])
    det_b = batched_det(ensemble.slater_beta[:, ctx.occ_b, :])
    new_ovlp = (ctx.cbar[None, :] * det_a * det_b).sum(axis=1)
    alive = np.abs(new_ovlp) > _overlap_floor(ctx, det_a, det_b)
    old = ensemble.overlaps
    alive &= np.abs(old) > 0.0
    ratio = np.where(alive, new_ovlp / np.where(old == 0.0, 1.0, old), 0.0)

    xdot = np.einsum("wg,wg->w", fields, xbar)
    xbar_sq = np.einsum("wg,wg->w", xbar, xbar)
    field_phase = x_eff @ prop.mean_field
    step_factor = ratio * np.exp(xdot - 0.5 * xbar_sq
                                 - 1j * prop.sqrt_dtau * field_phase
                                 + prop.log_scalar)

    mag = np.abs(step_factor)
    if projection == "free":
        cos_proj = 1.0
    elif prop.variant == VARIANT_REAL_SIGN:
        # two-valued constraint: the step phase is taken as 0 or pi from the
        # sign of Re[S], so any sign flip kills the walker outright
        cos_proj = (step_factor.real > 0.0).astype(float)
    else:
        angle = np.angle(np.where(mag == 0.0, 1.0, step_factor))
        cos_proj = np.maximum(0.0, np.cos(angle))
    ensemble.weights = ensemble.weights * mag * cos_proj
    unit = np.where(mag == 0.0, 1.0, step_factor / np.where(mag == 0.0, 1.0, mag))
    ensemble.phases = ensemble.phases * unit
    ensemble.overlaps = new_ovlp
    return AuxiliaryFieldSample(x=fields, force_bias=xbar, n_capped=n_capped)


def stabilize(ensemble: WalkerEnsemble, ctx: TrialContext) -> None:
    """Re-orthonormalize walker orbitals, moving the scale into log_shift.

    exp(log_shift) * overlap is invariant; the cached overlap is recomputed
    from the orthonormal factors to keep it O(1).  A rank-deficient column
    block (zero diagonal in R) kills the walker.
    """
    qa, ra = np.linalg.qr(ensemble.slater_alpha)
    qb, rb = np.linalg.qr(ensemble.slater_beta)
    diag_a = np.einsum("wii->wi", ra).astype(complex)
    diag_b = np.einsum("wii->wi", rb).astype(complex)
    deficient = (diag_a == 0.0).any(axis=1) | (diag_b == 0.0).any(axis=1)
    if deficient.any():
        ensemble.weights = np.where(deficient, 0.0, ensemble.weights)
        diag_a[diag_a == 0.0] = 1.0
        diag_b[diag_b == 0.0] = 1.0
    ensemble.log_shifts = ensemble.log_shifts \
        + np.log(diag_a).sum(axis=1) + np.log(diag_b).sum(axis=1)
    ensemble.slater_alpha = qa
    ensemble.slater_beta = qb
    det_a = batched_det(qa[:, ctx.occ_a, :])
    det_b = batched_det(qb[:, ctx.occ_b, :])
    ensemble.overlaps = (ctx.cbar[None, :] * det_a * det_b).sum(axis=1)


def comb_resample(weights: np.ndarray, zeta: float):
    """Systematic (comb) reconfiguration of a weight vector.

    Places ``n`` equally spaced teeth, offset by ``zeta`` in [0, 1), on the
    cumulative weight axis and returns the selected parent indices plus the
    common new weight (total preserved).  Selection counts are unbiased:
    E[count_i] = n * w_i / total.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if not 0.0 <= zeta < 1.0:
        raise ValueError("zeta must lie in [0, 1)")
    total = w.sum()
    if total <= 0.0:
        raise PopulationCollapseError("total walker weight vanished")
    n = w.size
    cum = np.cumsum(w)
    teeth = total * (np.arange(n) + zeta) / n
    idx = np.searchsorted(cum, teeth, side="right")
    return np.clip(idx, 0, n - 1), total / n


def population_control(ensemble: WalkerEnsemble, zeta: float) -> np.ndarray:
    """Comb-reconfigure the population in place; returns parent indices."""
    idx, new_weight = comb_resample(ensemble.weights, zeta)
    ensemble.slater_alpha = ensemble.slater_alpha[idx].copy()
    ensemble.slater_beta = ensemble.slater_beta[idx].copy()
    ensemble.phases = ensemble.phases[idx].copy()
    ensemble.overlaps = ensemble.overlaps[idx].copy()
    ensemble.log_shifts = ensemble.log_shifts[idx].copy()
    ensemble.weights = np.full(ensemble.n_walkers, new_weight)
    return idx


# ---------------------------------------------------------------------------
# Local energy over the population
# ---------------------------------------------------------------------------

def local_energy_ensemble(ctx: TrialContext, ensemble: WalkerEnsemble) -> np.ndarray:
    """Mixed-estimator local energy of every walker, (n_w,) complex.

    Walkers with a degenerate overlap minor fall back to the exact
    single-walker evaluation; walkers with vanished trial overlap get a
    zero entry (their weight is already zero).
    """
    det_a, det_b, theta_a, theta_b, denom = _minor_data(
        ctx, ensemble.slater_alpha, ensemble.slater_beta)
    n_w = ensemble.n_walkers
    n_det = ctx.trial.n_determinants

    floor = _overlap_floor(ctx, det_a, det_b)
    dead = np.abs(denom) <= floor
    cut_a = SINGULAR_MINOR_TOL * np.maximum(np.abs(det_a).max(axis=1), 1e-300)
    cut_b = SINGULAR_MINOR_TOL * np.maximum(np.abs(det_b).max(axis=1), 1e-300)
    degenerate = ((np.abs(det_a) <= cut_a[:, None])
                  | (np.abs(det_b) <= cut_b[:, None])).any(axis=1)
    fallback = degenerate & ~dead

    safe_a = np.where(np.abs(det_a) == 0.0, 1.0, det_a)
    safe_b = np.where(np.abs(det_b) == 0.0, 1.0, det_b)
    th_a = theta_a / safe_a[:, None, :, None]
    th_b = theta_b / safe_b[:, None, :, None]

    # one-body: sum_tj h[d, j, t] theta[w, t, d, j]
    e1 = np.einsum("wtdj,djt->wd", th_a, ctx.hsel_a) \
        + np.einsum("wtdj,djt->wd", th_b, ctx.hsel_b)

    # two-body via per-vector k x k walker-trial blocks S = L theta:
    # E2 = 1/2 sum_g [(tr S_a + tr S_b)^2 - tr S_a^2 - tr S_b^2],
    # evaluated in determinant chunks to bound the S buffer size.
    n = ensemble.n_spatial
    n_gamma = ctx.factors.n_gamma
    k_a, k_b = th_a.shape[-1], th_b.shape[-1]
    per_det = n_w * n_gamma * (k_a * k_a + k_b * k_b) * 16
    chunk = max(1, min(n_det, int(_ENERGY_CHUNK_BYTES // max(per_det, 1))))
    e2 = np.empty((n_w, n_det), dtype=complex)
    lflat_a = ctx.lsel_a.reshape(n_det, n_gamma * k_a, n)
    lflat_b = ctx.lsel_b.reshape(n_det, n_gamma * k_b, n)
    for lo in range(0, n_det, chunk):
        sl = slice(lo, min(lo + chunk, n_det))
        c = sl.stop - lo
        sa = np.matmul(lflat_a[sl],
                       th_a[:, :, sl].transpose(2, 1, 0, 3).reshape(c, n, -1))
        sb = np.matmul(lflat_b[sl],
                       th_b[:, :, sl].transpose(2, 1, 0, 3).reshape(c, n, -1))
        sa = sa.reshape(c, n_gamma, k_a, n_w, k_a)
        sb = sb.reshape(c, n_gamma, k_b, n_w, k_b)
        fa = np.einsum("dgjwj->wdg", sa)
        fb = np.einsum("dgjwj->wdg", sb)
        xa = np.einsum("dgjwk,dgkwj->wdg", sa, sa)
        xb = np.einsum("dgjwk,dgkwj->wdg", sb, sb)
        e2[:, sl] = 0.5 * (((fa + fb) ** 2) - xa - xb).sum(axis=2)

    numer = np.einsum("d,wd,wd,wd->w", ctx.cbar, det_a, det_b, e1 + e2)
    safe_denom = np.where(dead, 1.0, denom)
    energies = np.where(dead, 0.0, ctx.ham.e_core + numer / safe_denom)

    for w in np.nonzero(fallback)[0]:
        mat = SlaterMatrix(ensemble.slater_alpha[w], ensemble.slater_beta[w])
        try:
            energies[w] = local_energy(ctx.ham, ctx.trial, mat, ctx.factors)
        except ZeroOverlapError:
            energies[w] = 0.0
            ensemble.weights[w] = 0.0
    return energies


def mixed_energy_estimate(ctx: TrialContext, ensemble: WalkerEnsemble) -> float:
    """Weight-averaged real part of the local energy."""
    total = ensemble.weights.sum()
    if total <= 0.0:
        raise PopulationCollapseError("total walker weight vanished")
    e_loc = local_energy_ensemble(ctx, ensemble)
    return float(np.sum(ensemble.weights * e_loc.real) / total)


# ---------------------------------------------------------------------------
# Blocking analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockingResult:
    """Pair-averaging error analysis of a correlated series."""

    mean: float
    error: float
    plateau_level: int
    levels: tuple   # (n_samples, sigma, d_sigma) per aggregation level
    converged: bool


def blocking_analysis(values, min_samples: int = MIN_BLOCKING_SAMPLES) -> BlockingResult:
    """Estimate the error of the mean of a correlated series.

    Repeatedly averages neighbor pairs; at each level the naive error of
    the mean and its own uncertainty are recorded.  The reported error is
    taken at the first level where the estimate stops growing by more than
    its uncertainty (the plateau); if no plateau appears, the largest level
    is used and the result is marked unconverged.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("blocking needs a 1-d series with at least 2 entries")
    mean = float(x.mean())
    levels = []
    data = x
    while data.size >= 2:
        n = data.size
        sig = float(data.std(ddof=1) / math.sqrt(n))
        levels.append((n, sig, sig / math.sqrt(2.0 * (n - 1))))
        if data.size < 4:
            break
        if data.size % 2:
            data = data[:-1]
        data = 0.5 * (data[0::2] + data[1::2])

    plateau = None
    for lvl in range(len(levels) - 1):
        if levels[lvl + 1][1] <= levels[lvl][1] + levels[lvl][2]:
            plateau = lvl
            break
    converged = x.size >= min_samples and plateau is not None
    if plateau is None:
        plateau = len(levels) - 1
        error = levels[plateau][1]
    else:
        error = max(levels[plateau][1], levels[plateau + 1][1])
    return BlockingResult(mean=mean, error=float(error), plateau_level=plateau,
                          levels=tuple(levels), converged=converged)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class EnergySeries:
    """Blocked mixed-estimator energies of one run."""

    block_index: np.ndarray
    tau: np.ndarray
    energy: np.ndarray
    total_weight: np.ndarray
    n_walkers: np.ndarray
    dtau: float
    block_steps: int
    equilibration_tau: float
    e_shift: float
    diagnostics: dict = field(default_factory=dict)

    def post_equilibration(self) -> np.ndarray:
        return self.energy[self.tau > self.equilibration_tau]

    def summary(self) -> dict:
        """Final estimate: blocked mean and error past equilibration."""
        vals = self.post_equilibration()
        if vals.size == 0:
            vals = self.energy
        if vals.size >= 2:
            res = blocking_analysis(vals)
            energy, error = res.mean, res.error
        else:
            energy, error = float(vals[0]), 0.0
        return {"energy": energy, "error": error,
                "n_blocks": int(vals.size), "block_size": self.block_steps}

    def to_csv(self, destination) -> None:
        lines = ["block_index,tau,energy,total_weight,n_walkers"]
        for i in range(self.block_index.size):
            lines.append(f"{int(self.block_index[i])},{float(self.tau[i])!r},"
                         f"{float(self.energy[i])!r},"
                         f"{float(self.total_weight[i])!r},"
                         f"{int(self.n_walkers[i])}")
        text = "\n".join(lines) + "\n"
        if hasattr(destination, "write"):
            destination.write(text)
        else:
            from pathlib import Path

            Path(destination).write_text(text)

    def summary_csv(self, destination) -> None:
        s = self.summary()
        text = ("energy,error,n_blocks,block_size\n"
                f"{s['energy']!r},{s['error']!r},{s['n_blocks']},{s['block_size']}\n")
        if hasattr(destination, "write"):
            destination.write(text)
        else:
            from pathlib import Path

            Path(destination).write_text(text)


def run(ham: Hamiltonian, trial: TrialWavefunction,
        factors: CholeskyFactorization, config: PropagatorConfig,
        initial: SlaterMatrix | None = None) -> EnergySeries:
    """Full projector run: equilibrate, accumulate blocks, analyze.

    Deterministic for a fixed configuration: all randomness comes from
    counter-based streams keyed by (seed, step).  The energy shift is the
    mixed estimate of the initial population, measured once before the
    first step.
    """
    ctx = build_trial_context(ham, trial, factors)
    ensemble = init_ensemble(trial, config.n_walkers, initial)

    first = SlaterMatrix(ensemble.slater_alpha[0], ensemble.slater_beta[0])
    e_init = complex(local_energy(ham, trial, first, factors)).real
    prop = build_propagator(ham, factors, trial, config.dtau,
                            e_shift=e_init,
                            mean_field_shift=config.mean_field_shift,
                            taylor_order=config.taylor_order,
                            force_bias_cap=config.force_bias_cap,
                            variant=config.phaseless_variant)

    rows = [(0, 0.0, e_init, float(ensemble.weights.sum()), config.n_walkers)]
    n_capped_total = 0
    weight_factors = []
    block = 0
    for step in range(1, config.n_steps + 1):
        fields = step_rng(config.seed, step, _FIELD_STREAM).standard_normal(
            (config.n_walkers, prop.n_gamma))
        sample = propagate_step(ensemble, ctx, prop, fields)
        n_capped_total += sample.n_capped
        if step % config.stabilize_every == 0:
            stabilize(ensemble, ctx)
        if step % config.block_steps == 0 or step == config.n_steps:
            block += 1
            energy = mixed_energy_estimate(ctx, ensemble)
            if not math.isfinite(energy):
                raise RuntimeError(
                    f"non-finite block energy at step {step} "
                    f"(total weight {ensemble.weights.sum()!r}, "
                    f"max |overlap| {np.abs(ensemble.overlaps).max()!r})")
            rows.append((block, step * config.dtau, energy,
                         float(ensemble.weights.sum()), config.n_walkers))
        if step % config.popcontrol_every == 0 and step < config.n_steps:
            zeta = float(step_rng(config.seed, step, _POPCTRL_STREAM).random())
            population_control(ensemble, zeta)
            factor = float(ensemble.weights.sum()) / config.n_walkers
            ensemble.weights = np.ones(config.n_walkers)
            weight_factors.append(factor)

    cols = list(zip(*rows))
    return EnergySeries(
        block_index=np.array(cols[0], dtype=int),
        tau=np.array(cols[1], dtype=float),
        energy=np.array(cols[2], dtype=float),
        total_weight=np.array(cols[3], dtype=float),
        n_walkers=np.array(cols[4], dtype=int),
        dtau=config.dtau, block_steps=config.block_steps,
        equilibration_tau=config.equilibration_tau, e_shift=e_init,
        diagnostics={"n_capped": n_capped_total,
                     "weight_factors": weight_factors})
