#!/usr/bin/env python3
"""Full pipeline on stretched water: sampled trial vs single determinant.

Builds a (2e,2o) trial from sampled counts, embeds it over the frozen core,
and projects in the full orbital space.  The same projection with a bare
Hartree-Fock trial shows why the trial matters once the bond is stretched:
both the bias and the statistical noise blow up.

Takes a minute or two at the settings below.  The command-line equivalent:

    qsci-afqmc qsci fixtures/h2o_sto3g_r2.00.fcidump --active-space 4:4,5 \
        --shots 1000000 --seed 7 --output out/h2o
    qsci-afqmc afqmc fixtures/h2o_sto3g_r2.00.fcidump \
        --trial out/h2o/qsci_trial.txt --output out/h2o
"""

from pathlib import Path

import numpy as np

from qsci_afqmc import afqmc
from qsci_afqmc.detops import TrialWavefunction, hf_determinant
from qsci_afqmc.factorize import decompose
from qsci_afqmc.fci import fci_ground_state
from qsci_afqmc.hamio import ActiveSpaceSpec, fold_core, parse_fcidump
from qsci_afqmc.qsci import embed_trial, run_qsci
from qsci_afqmc.sampler import sample_state

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

ham = parse_fcidump(FIXTURES / "h2o_sto3g_r2.00.fcidump")
e_fci = fci_ground_state(ham).energy
print(f"h2o_sto3g_r2.00: E_FCI = {e_fci:.8f}")

# --- stage 1: sampled active-space trial -----------------------------------
spec = ActiveSpaceSpec(4, (4, 5), 1, 1)
folded = fold_core(ham, spec)
cas = fci_ground_state(folded)
table = sample_state(cas.space.determinants, cas.coefficients,
                     shots=1_000_000, seed=7)
wfn = run_qsci(folded, table)
trial = embed_trial(wfn, spec, ham.n_spatial)
print(f"(2e,2o) trial from {table.shots} shots: {wfn.r_effective} "
      f"configurations, E_trial = {wfn.energy:.8f} "
      f"({(wfn.energy - e_fci) * 1e3:+.2f} mHa vs FCI)")

hf_trial = TrialWavefunction.from_ci(
    [hf_determinant(ham.n_spatial, ham.n_alpha, ham.n_beta)], [1.0])

# --- stage 2: phaseless projection in the full space -----------------------
factors = decompose(ham)
cfg = afqmc.PropagatorConfig(dtau=0.005, n_steps=1200, n_walkers=300,
                             seed=13, equilibration_tau=3.0,
                             popcontrol_every=5)
print(f"\nprojection: tau = {cfg.dtau * cfg.n_steps:.0f}, "
      f"{cfg.n_walkers} walkers, dtau = {cfg.dtau}")

for label, t in (("sampled (2e,2o) trial", trial), ("HF trial", hf_trial)):
    series = afqmc.run(ham, t, factors, cfg)
    stats = series.summary()
    blocks = series.post_equilibration()
    print(f"  {label:22s} E = {stats['energy']:.6f} +/- "
          f"{stats['error']:.6f}  ({(stats['energy'] - e_fci) * 1e3:+7.2f} "
          f"mHa vs FCI, block var {np.var(blocks):.2e})")

print("\nThe sampled trial sits within a few mHa of FCI with tight error "
      "bars;\nthe single determinant drifts tens of mHa away and its blocks "
      "barely average down.")
