#!/usr/bin/env python3
"""Dissociation curve for the H4 chain: FCI vs selected-CI vs projection.

For each bond length the trial is built by sampling the (4e,6o) active-space
ground state and keeping the 64 most frequent configurations; the projector
then runs over all eight orbitals.  Reduced settings keep the whole sweep
around two minutes; the acceptance-grade protocol uses 600 walkers and
tau = 10.

Equivalent CLI run (writes per-point CSVs and a combined curve.csv):

    qsci-afqmc curve \
        --point 2.0=fixtures/h4_631g_r2.00.fcidump \
        --point 3.0=fixtures/h4_631g_r3.00.fcidump \
        --point 4.0=fixtures/h4_631g_r4.00.fcidump \
        --active-space 0:0,1,2,3,4,5 --r 64 --output out/h4_curve
"""

from pathlib import Path

from qsci_afqmc import afqmc
from qsci_afqmc.factorize import decompose
from qsci_afqmc.fci import fci_ground_state
from qsci_afqmc.hamio import ActiveSpaceSpec, fold_core, parse_fcidump
from qsci_afqmc.qsci import embed_trial, run_qsci
from qsci_afqmc.sampler import sample_state

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

print("r (bohr)   E_FCI         E_QSCI        E_QSCI-AFQMC        "
      "err vs FCI (mHa)")
for r in ("2.00", "3.00", "4.00"):
    ham = parse_fcidump(FIXTURES / f"h4_631g_r{r}.fcidump")
    e_fci = fci_ground_state(ham).energy

    spec = ActiveSpaceSpec(0, (0, 1, 2, 3, 4, 5), 2, 2)
    folded = fold_core(ham, spec)
    cas = fci_ground_state(folded)
    table = sample_state(cas.space.determinants, cas.coefficients,
                         shots=1_000_000, seed=7)
    wfn = run_qsci(folded, table, r=64, expand=False)
    trial = embed_trial(wfn, spec, ham.n_spatial)

    cfg = afqmc.PropagatorConfig(dtau=0.005, n_steps=1200, n_walkers=300,
                                 seed=13, equilibration_tau=3.0,
                                 popcontrol_every=5)
    stats = afqmc.run(ham, trial, decompose(ham), cfg).summary()
    diff = (stats["energy"] - e_fci) * 1e3
    print(f"  {r}     {e_fci:.8f}   {wfn.energy:.8f}   "
          f"{stats['energy']:.6f} +/- {stats['error']:.6f}   {diff:+8.3f}")

print("\nThe selected-CI energy alone drifts away from FCI as the chain "
      "stretches;\nthe projection pulls each point back to within about a "
      "milli-Hartree.")
