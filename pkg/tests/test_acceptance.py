"""End-to-end acceptance checks for the sample -> select -> project pipeline.

Each test prints one PASS/FAIL line (with the measured numbers) directly to
the terminal, then asserts.  The chemical-accuracy runs are shared between
tests through a module-scoped cache so the determinism check can byte-compare
fresh re-runs against them without paying for the originals twice.
"""

import io
import time

import numpy as np
import pytest

from qsci_afqmc import afqmc
from qsci_afqmc.detops import TrialWavefunction, hf_determinant
from qsci_afqmc.factorize import decompose, reconstruct_eri
from qsci_afqmc.fci import ci_as_trial, fci_ground_state
from qsci_afqmc.hamio import ActiveSpaceSpec, Hamiltonian, fold_core
from qsci_afqmc.qsci import (
    build_effective_hamiltonian,
    embed_trial,
    run_qsci,
    solve_effective,
)
from qsci_afqmc.sampler import (
    decode_scbk_2e2o,
    determinant_to_displayed,
    sample_state,
)

SHOTS = 10 ** 6
SAMPLER_SEED = 7
CHEMICAL_ACCURACY = 1.6e-3

# Shared projector settings for the chemical-accuracy runs (tau = 10).
PRODUCTION = dict(dtau=0.005, n_steps=2000, n_walkers=600,
                  equilibration_tau=4.0, popcontrol_every=5)
H4_POINTS = ("h4_631g_r2.00", "h4_631g_r3.00", "h4_631g_r4.00")
H2O_POINTS = ("h2o_sto3g_r1.00", "h2o_sto3g_r2.00")
# Trial construction: noiseless sampling of a small-CAS ground state, then
# frequency selection.  H4 keeps the 64 most frequent configurations of a
# (4e,6o) space; H2O uses the full (2e,2o) space.
H4_TRIAL = dict(n_core=0, active=(0, 1, 2, 3, 4, 5), r=64, expand=False)
H2O_TRIAL = dict(n_core=4, active=(4, 5), r=None, expand=True)
H4_SEED = 13
H2O_SEEDS = (11, 12, 13)

# Active spaces used by the variational-ladder sweep (full space where small
# enough, the standard valence choice otherwise).
LADDER_SPACES = {
    "h2_sto6g_r1.40": (0, (0, 1)),
    "h4_sto6g_r2.00": (0, (0, 1, 2, 3)),
    "h2o_sto3g_r1.00": (4, (4, 5)),
    "h2o_sto3g_r2.00": (4, (4, 5)),
    "h4_631g_r2.00": (0, (0, 1, 2, 3)),
    "h4_631g_r3.00": (0, (0, 1, 2, 3)),
    "h4_631g_r4.00": (0, (0, 1, 2, 3)),
}
ALL_FIXTURES = tuple(LADDER_SPACES)

SCBK_TABLE = {"00": "1100", "10": "0110", "01": "1001", "11": "0011"}


def _report(capsys, label: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[accept] {label}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{label}: {detail}"


def _folded_casci(ham, n_core, active):
    spec = ActiveSpaceSpec(n_core, tuple(active),
                           ham.n_alpha - n_core, ham.n_beta - n_core)
    folded = fold_core(ham, spec)
    return spec, folded, fci_ground_state(folded)


@pytest.fixture(scope="module")
def production(load_ham, load_factors, reference):
    """Lazily built and cached chemical-accuracy runs."""

    class Production:
        def __init__(self):
            self._trials = {}
            self._runs = {}

        def _trial(self, fixture: str, kind: str):
            key = (fixture, kind)
            if key not in self._trials:
                ham = load_ham(fixture)
                if kind == "hf":
                    ref = hf_determinant(ham.n_spatial, ham.n_alpha,
                                         ham.n_beta)
                    trial = TrialWavefunction.from_ci([ref], [1.0])
                else:
                    params = H4_TRIAL if fixture.startswith("h4") else H2O_TRIAL
                    spec, folded, cas = _folded_casci(ham, params["n_core"],
                                                      params["active"])
                    table = sample_state(cas.space.determinants,
                                         cas.coefficients,
                                         shots=SHOTS, seed=SAMPLER_SEED)
                    wfn = run_qsci(folded, table, r=params["r"],
                                   expand=params["expand"])
                    trial = embed_trial(wfn, spec, ham.n_spatial)
                self._trials[key] = (ham, trial)
            return self._trials[key]

        def fresh(self, fixture: str, seed: int, kind: str = "qsci") -> dict:
            """Compute a run from scratch (no cache)."""
            ham, trial = self._trial(fixture, kind)
            cfg = afqmc.PropagatorConfig(seed=seed, **PRODUCTION)
            series = afqmc.run(ham, trial, load_factors(fixture), cfg)
            stats = series.summary()
            blocks_buf, summary_buf = io.StringIO(), io.StringIO()
            series.to_csv(blocks_buf)
            series.summary_csv(summary_buf)
            return {
                "energy": stats["energy"],
                "error": stats["error"],
                "bias": stats["energy"] - reference[fixture]["e_fci"],
                "block_var": float(np.var(series.post_equilibration())),
                "blocks_csv": blocks_buf.getvalue(),
                "summary_csv": summary_buf.getvalue(),
            }

        def run(self, fixture: str, seed: int, kind: str = "qsci") -> dict:
            key = (fixture, seed, kind)
            if key not in self._runs:
                self._runs[key] = self.fresh(fixture, seed, kind)
            return self._runs[key]

    return Production()


def test_01_qsci_matches_casci_at_full_coverage(load_ham, capsys):
    """Noiseless sampling of a CASCI state at 10^6 shots covers every
    configuration with weight, so the selected-basis energy must reproduce
    CASCI to numerical precision."""
    t0 = time.monotonic()
    worst = 0.0
    for fixture, n_core, active in (("h2o_sto3g_r1.00", 4, (4, 5)),
                                    ("h4_631g_r2.00", 0, (0, 1, 2, 3))):
        _, folded, cas = _folded_casci(load_ham(fixture), n_core, active)
        table = sample_state(cas.space.determinants, cas.coefficients,
                             shots=SHOTS, seed=SAMPLER_SEED)
        wfn = run_qsci(folded, table)
        worst = max(worst, abs(wfn.energy - cas.energy))
    elapsed = time.monotonic() - t0
    ok = worst < 1e-8 and elapsed < 10.0
    _report(capsys, "01 qsci == casci at full sampling coverage", ok,
            f"max |dE| {worst:.2e} Ha, {elapsed:.1f}s")


def test_02_variational_ladder(load_ham, capsys):
    """Selected-basis energies sit above the active-space FCI floor and are
    non-increasing as randomly ordered bases grow (105 nested chains)."""
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    floor_viol = 0.0
    mono_viol = 0.0
    n_chains = 0
    for fixture, (n_core, active) in LADDER_SPACES.items():
        _, folded, exact = _folded_casci(load_ham(fixture), n_core, active)
        dets = exact.space.determinants
        dim = len(dets)
        for _ in range(15):
            perm = rng.permutation(dim)
            cuts = np.sort(rng.choice(np.arange(1, dim + 1),
                                      size=min(4, dim), replace=False))
            prev = np.inf
            for cut in cuts:
                basis = [dets[i] for i in perm[:cut]]
                wfn = solve_effective(
                    build_effective_hamiltonian(folded, basis))
                floor_viol = max(floor_viol, exact.energy - wfn.energy)
                mono_viol = max(mono_viol, wfn.energy - prev)
                prev = wfn.energy
            n_chains += 1
    elapsed = time.monotonic() - t0
    ok = (n_chains >= 100 and floor_viol <= 1e-12 and mono_viol <= 1e-12
          and elapsed < 30.0)
    _report(capsys, "02 variational ladder", ok,
            f"{n_chains} chains, floor viol {floor_viol:.1e}, "
            f"monotonicity viol {mono_viol:.1e}, {elapsed:.1f}s")


def test_03_cholesky_fidelity(load_ham, load_fci, capsys):
    """Factorization residual below 1e-8 everywhere; rebuilding the
    interaction from the vectors shifts the exact energy below 1e-6."""
    t0 = time.monotonic()
    worst_residual = 0.0
    for fixture in ALL_FIXTURES:
        ham = load_ham(fixture)
        rebuilt = reconstruct_eri(decompose(ham))
        worst_residual = max(worst_residual,
                             float(np.max(np.abs(ham.g - rebuilt))))
    worst_shift = 0.0
    for fixture in ("h2_sto6g_r1.40", "h4_sto6g_r2.00", "h2o_sto3g_r1.00"):
        ham = load_ham(fixture)
        rebuilt = Hamiltonian(n_spatial=ham.n_spatial, n_alpha=ham.n_alpha,
                              n_beta=ham.n_beta, e_core=ham.e_core,
                              h=ham.h, g=reconstruct_eri(decompose(ham)))
        shift = abs(fci_ground_state(rebuilt).energy
                    - load_fci(fixture).energy)
        worst_shift = max(worst_shift, shift)
    elapsed = time.monotonic() - t0
    ok = worst_residual <= 1e-8 and worst_shift <= 1e-6 and elapsed < 10.0
    _report(capsys, "03 cholesky fidelity", ok,
            f"max residual {worst_residual:.2e}, max energy shift "
            f"{worst_shift:.2e} Ha, {elapsed:.1f}s")


def test_04_projector_exactness_two_level_toy(load_ham, load_fci, capsys):
    """With the exact 2-determinant eigenstate as trial the mixed estimator
    has zero bias and zero variance, so a long run must sit on the exact
    energy up to roundoff (1e-9 floor covers the factorization resolution)."""
    t0 = time.monotonic()
    ham = load_ham("h2_sto6g_r1.40")
    exact = load_fci("h2_sto6g_r1.40")
    trial = ci_as_trial(exact, truncation=1e-12)
    assert trial.n_determinants == 2
    cfg = afqmc.PropagatorConfig(dtau=0.005, n_steps=4000, n_walkers=200,
                                 seed=5, equilibration_tau=4.0)
    stats = afqmc.run(ham, trial, decompose(ham, threshold=1e-12),
                      cfg).summary()
    bias = stats["energy"] - exact.energy
    elapsed = time.monotonic() - t0
    ok = (abs(bias) <= 3.0 * stats["error"] + 1e-9
          and stats["error"] <= 5e-4 and elapsed < 60.0)
    _report(capsys, "04 projector exactness on the two-level toy", ok,
            f"dE {bias:+.1e} Ha, sigma {stats['error']:.1e}, {elapsed:.1f}s")


def test_05_chemical_accuracy_h4_chain(production, capsys):
    """Sampled-trial projection on the H4 dissociation set stays within
    chemical accuracy of FCI, with error bars below 1 mHa."""
    t0 = time.monotonic()
    parts = []
    ok = True
    for fixture in H4_POINTS:
        art = production.run(fixture, H4_SEED)
        ok = (ok and abs(art["bias"]) <= CHEMICAL_ACCURACY + art["error"]
              and art["error"] <= 1e-3)
        label = fixture.rsplit("_r", 1)[1]
        parts.append(f"r{label} {art['bias'] * 1e3:+.2f}+-"
                     f"{art['error'] * 1e3:.2f} mHa")
    elapsed = time.monotonic() - t0
    ok = ok and elapsed < 900.0
    _report(capsys, "05 chemical accuracy, h4 chain", ok,
            f"{', '.join(parts)}, {elapsed:.0f}s")


def test_06_chemical_accuracy_h2o(production, capsys):
    """Full-space projection with the (2e,2o) sampled trial reproduces FCI
    within chemical accuracy at both geometries.  Three independent replicas
    per geometry; the quoted bar is the replica-scatter standard error."""
    t0 = time.monotonic()
    parts = []
    ok = True
    for fixture in H2O_POINTS:
        biases = np.array([production.run(fixture, seed)["bias"]
                           for seed in H2O_SEEDS])
        mean = float(biases.mean())
        err = float(biases.std(ddof=1) / np.sqrt(len(biases)))
        ok = ok and abs(mean) <= CHEMICAL_ACCURACY + err
        label = fixture.rsplit("_r", 1)[1]
        parts.append(f"r{label} {mean * 1e3:+.2f}+-{err * 1e3:.2f} mHa")
    elapsed = time.monotonic() - t0
    ok = ok and elapsed < 1200.0
    _report(capsys, "06 chemical accuracy, h2o", ok,
            f"{', '.join(parts)}, {elapsed:.0f}s")


def test_07_trial_quality_ordering(production, capsys):
    """On stretched H2O the single-determinant trial gives both a larger
    energy error and a larger block variance than the sampled trial."""
    t0 = time.monotonic()
    qsci_run = production.run("h2o_sto3g_r2.00", 13)
    hf_run = production.run("h2o_sto3g_r2.00", 13, kind="hf")
    elapsed = time.monotonic() - t0
    ok = (abs(hf_run["bias"]) >= abs(qsci_run["bias"])
          and qsci_run["block_var"] < hf_run["block_var"]
          and elapsed < 900.0)
    _report(capsys, "07 trial-quality ordering on stretched h2o", ok,
            f"|dE| hf {abs(hf_run['bias']) * 1e3:.1f} vs qsci "
            f"{abs(qsci_run['bias']) * 1e3:.1f} mHa, block var hf "
            f"{hf_run['block_var']:.1e} vs qsci {qsci_run['block_var']:.1e}, "
            f"{elapsed:.0f}s")


def test_08_trotter_bias_hierarchy(load_ham, load_fci, capsys):
    """|bias| under time-step halving (0.02 -> 0.01 -> 0.005) is
    non-increasing within combined error bars.  Twelve replicas per step
    size; the single-determinant trial keeps the bias visible (an exact
    trial has none by construction)."""
    t0 = time.monotonic()
    ham = load_ham("h2_sto6g_r1.40")
    exact = load_fci("h2_sto6g_r1.40").energy
    factors = decompose(ham, threshold=1e-10)
    trial = TrialWavefunction.from_ci([hf_determinant(2, 1, 1)], [1.0])
    rows = []
    for dtau in (0.02, 0.01, 0.005):
        biases = []
        for seed in range(21, 33):
            cfg = afqmc.PropagatorConfig(dtau=dtau,
                                         n_steps=int(round(12.0 / dtau)),
                                         n_walkers=800, seed=seed,
                                         equilibration_tau=4.0)
            stats = afqmc.run(ham, trial, factors, cfg).summary()
            biases.append(stats["energy"] - exact)
        biases = np.array(biases)
        rows.append((dtau, float(biases.mean()),
                     float(biases.std(ddof=1) / np.sqrt(len(biases)))))
    monotone = all(
        abs(rows[i + 1][1]) <= abs(rows[i][1]) + np.hypot(rows[i][2],
                                                          rows[i + 1][2])
        for i in range(len(rows) - 1))
    elapsed = time.monotonic() - t0
    ok = monotone and elapsed < 300.0
    detail = ", ".join(f"dt={dtau} {bias * 1e3:+.2f}+-{err * 1e3:.2f} mHa"
                       for dtau, bias, err in rows)
    _report(capsys, "08 trotter bias hierarchy", ok,
            f"{detail}, {elapsed:.0f}s")


def test_09_sampler_statistics(load_ham, capsys):
    """Sampled frequencies match Born probabilities within 5 sigma binomial
    bounds at 10^6 shots, and the paired-qubit decode table is exact."""
    t0 = time.monotonic()
    zmax = 0.0
    clean = True
    for fixture, n_core, active in (("h2o_sto3g_r1.00", 4, (4, 5)),
                                    ("h4_631g_r2.00", 0, (0, 1, 2, 3))):
        _, _, cas = _folded_casci(load_ham(fixture), n_core, active)
        table = sample_state(cas.space.determinants, cas.coefficients,
                             shots=SHOTS, seed=SAMPLER_SEED)
        probs = {determinant_to_displayed(det): abs(coeff) ** 2
                 for det, coeff in zip(cas.space.determinants,
                                       cas.coefficients)}
        for bits, prob in probs.items():
            count = table.entries.get(bits, 0)
            if prob * SHOTS < 1e-9:
                clean = clean and count == 0
                continue
            sigma = max(np.sqrt(SHOTS * prob * (1.0 - prob)), 1e-12)
            zmax = max(zmax, abs(count - SHOTS * prob) / sigma)
        clean = clean and not (set(table.entries) - set(probs))
    decode_ok = all(
        determinant_to_displayed(decode_scbk_2e2o(raw)) == displayed
        for raw, displayed in SCBK_TABLE.items())
    elapsed = time.monotonic() - t0
    ok = zmax <= 5.0 and clean and decode_ok and elapsed < 10.0
    _report(capsys, "09 sampler statistics", ok,
            f"max z {zmax:.2f}, decode table "
            f"{'exact' if decode_ok else 'WRONG'}, {elapsed:.1f}s")


def test_10_run_determinism(production, capsys):
    """Re-running every chemical-accuracy projection with identical seeds
    reproduces the block and summary CSV text byte for byte."""
    pairs = [(fixture, H4_SEED) for fixture in H4_POINTS]
    pairs += [(fixture, seed) for fixture in H2O_POINTS for seed in H2O_SEEDS]
    mismatched = []
    for fixture, seed in pairs:
        first = production.run(fixture, seed)
        again = production.fresh(fixture, seed)
        if (first["blocks_csv"] != again["blocks_csv"]
                or first["summary_csv"] != again["summary_csv"]):
            mismatched.append(f"{fixture}@{seed}")
    ok = not mismatched
    _report(capsys, "10 run determinism", ok,
            f"{len(pairs)} paired re-runs byte-compared"
            + (f", mismatches: {', '.join(mismatched)}" if mismatched else ""))
