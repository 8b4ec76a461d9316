"""Command-line pipelines: fci, qsci, afqmc, curve, counts-import.

Stages communicate through files (counts tables, trial records, energy
CSVs), so any stage can be rerun or replaced — in particular, a counts file
measured elsewhere drops in for the built-in sampling emulator.

Exit codes: 0 on success, 2 on validation errors (bad files, bad flags,
inconsistent inputs), 3 on numerical failures (collapsed populations,
non-convergent solvers, non-finite energies).
"""

from __future__ import annotations

import argparse
import os
import sys

# Thread count is the one environment knob: propagate it to the numerical
# backends before they are first imported.
_THREADS_VAR = "QSCI_AFQMC_THREADS"
_threads = os.environ.get(_THREADS_VAR)
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from pathlib import Path

import numpy as np

from . import afqmc as afqmc_mod
from . import fci as fci_mod
from . import qsci as qsci_mod
from . import sampler as sampler_mod
from .detops import TrialWavefunction, hf_determinant
from .factorize import DEFAULT_THRESHOLD, NotPositiveSemidefiniteError, decompose
from .hamio import ActiveSpaceSpec, Hamiltonian, fold_core, parse_fcidump

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

_CONFIG_KEYS = ("dtau", "n_steps", "n_walkers", "seed", "stabilize_every",
                "popcontrol_every", "equilibration_tau", "phaseless_variant",
                "frozen_core")
_TRUE_WORDS = {"true", "yes", "on", "1"}
_FALSE_WORDS = {"false", "no", "off", "0"}

TRIAL_RECORD_NAME = "qsci_trial.txt"
COUNTS_NAME = "counts_used.txt"
BLOCKS_NAME = "afqmc_blocks.csv"
SUMMARY_NAME = "afqmc_summary.csv"
POINT_NAME = "point.csv"
CURVE_NAME = "curve.csv"


class CliValidationError(ValueError):
    """Bad flags or inconsistent inputs detected by the CLI layer."""


# ---------------------------------------------------------------------------
# Shared parsing helpers
# ---------------------------------------------------------------------------

def parse_active_space(text: str, ham: Hamiltonian) -> ActiveSpaceSpec:
    """Parse ``CORE:ORB,ORB,...`` (e.g. ``4:4,5``) against a Hamiltonian.

    The core holds the first CORE spatial orbitals, doubly occupied; active
    electron counts follow from the fixture's totals.
    """
    head, sep, tail = text.partition(":")
    if not sep:
        raise CliValidationError(
            f"active space {text!r} must look like CORE:ORB,ORB,...")
    try:
        n_core = int(head)
        orbitals = tuple(int(tok) for tok in tail.split(",") if tok)
    except ValueError:
        raise CliValidationError(
            f"active space {text!r} has non-integer fields") from None
    if not orbitals:
        raise CliValidationError("active space lists no orbitals")
    if n_core > min(ham.n_alpha, ham.n_beta):
        raise CliValidationError("core exceeds the electron count")
    if max(orbitals) >= ham.n_spatial:
        raise CliValidationError("active orbital outside the orbital range")
    return ActiveSpaceSpec(n_core=n_core, active_orbitals=orbitals,
                           n_active_alpha=ham.n_alpha - n_core,
                           n_active_beta=ham.n_beta - n_core)


def full_space_spec(ham: Hamiltonian) -> ActiveSpaceSpec:
    return ActiveSpaceSpec(n_core=0,
                           active_orbitals=tuple(range(ham.n_spatial)),
                           n_active_alpha=ham.n_alpha,
                           n_active_beta=ham.n_beta)


def load_run_config(path) -> tuple[afqmc_mod.PropagatorConfig, bool]:
    """Read the flat key-value run configuration.

    Returns the propagator configuration and the frozen_core flag.  Unknown
    keys are rejected so typos fail loudly.
    """
    values: dict[str, str] = {}
    if path is not None:
        text = Path(path).read_text()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace("=", " ").split()
            if len(parts) != 2:
                raise CliValidationError(
                    f"{path}: line {lineno}: expected 'key value'")
            key, value = parts
            if key not in _CONFIG_KEYS:
                raise CliValidationError(
                    f"{path}: line {lineno}: unknown key {key!r}")
            if key in values:
                raise CliValidationError(
                    f"{path}: line {lineno}: duplicate key {key!r}")
            values[key] = value

    def _get(key, conv, default):
        if key not in values:
            return default
        try:
            return conv(values[key])
        except ValueError:
            raise CliValidationError(
                f"{path}: bad value for {key!r}: {values[key]!r}") from None

    frozen_word = values.get("frozen_core", "false").lower()
    if frozen_word in _TRUE_WORDS:
        frozen_core = True
    elif frozen_word in _FALSE_WORDS:
        frozen_core = False
    else:
        raise CliValidationError(
            f"{path}: frozen_core must be true/false, got {frozen_word!r}")

    try:
        config = afqmc_mod.PropagatorConfig(
            dtau=_get("dtau", float, afqmc_mod.DEFAULT_DTAU),
            n_steps=_get("n_steps", int, 2000),
            n_walkers=_get("n_walkers", int, afqmc_mod.DEFAULT_WALKERS),
            seed=_get("seed", int, 0),
            stabilize_every=_get("stabilize_every", int,
                                 afqmc_mod.DEFAULT_STABILIZE_EVERY),
            popcontrol_every=_get("popcontrol_every", int,
                                  afqmc_mod.DEFAULT_POPCONTROL_EVERY),
            equilibration_tau=_get("equilibration_tau", float,
                                   afqmc_mod.DEFAULT_EQUILIBRATION_TAU),
            phaseless_variant=values.get("phaseless_variant",
                                         afqmc_mod.VARIANT_STANDARD),
        )
    except ValueError as exc:
        raise CliValidationError(f"{path}: {exc}") from None
    return config, frozen_core


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliValidationError(f"{what} not found: {p}")
    return p


def _ensure_outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Stage drivers (shared between subcommands)
# ---------------------------------------------------------------------------

def _obtain_counts(ham_act: Hamiltonian, args) -> sampler_mod.CountsTable:
    if args.counts is not None:
        path = _require_file(args.counts, "counts file")
        return sampler_mod.import_counts(path, args.mapping,
                                         ham_act.n_alpha, ham_act.n_beta)
    reference = fci_mod.fci_ground_state(ham_act)
    return sampler_mod.sample_state(
        reference.space.determinants, reference.coefficients,
        shots=args.shots, seed=args.seed, noise=args.noise,
        mapping_tag=args.mapping)


def _histogram_lines(table: sampler_mod.CountsTable, limit: int = 12):
    items = sorted(table.entries.items(), key=lambda kv: (-kv[1], kv[0]))
    lines = [f"counts: {table.total()} shots, {len(items)} distinct strings, "
             f"{len(table.flagged)} flagged"]
    total = table.total()
    for bits, count in items[:limit]:
        mark = " (flagged)" if bits in table.flagged else ""
        lines.append(f"  {bits}  {count:>9}  {count / total:.6f}{mark}")
    if len(items) > limit:
        lines.append(f"  ... {len(items) - limit} more")
    return lines


def run_qsci_stage(ham: Hamiltonian, spec: ActiveSpaceSpec, args, out: Path):
    """Counts -> selection -> diagonalization -> trial record on disk."""
    ham_act = fold_core(ham, spec)
    table = _obtain_counts(ham_act, args)
    for line in _histogram_lines(table):
        print(line)
    wfn = qsci_mod.run_qsci(ham_act, table, r=args.r,
                            electron_filter=not args.no_electron_filter,
                            expand=not args.no_expand)
    sampler_mod.export_counts(table, out / COUNTS_NAME)
    qsci_mod.save_record(wfn, spec, out / TRIAL_RECORD_NAME)
    print(f"selected {wfn.r_effective} configurations"
          + ("" if wfn.r_requested is None else f" (requested {wfn.r_requested})"))
    print(f"qsci_energy {wfn.energy:.10f}")
    print(f"trial record -> {out / TRIAL_RECORD_NAME}")
    return wfn


def run_afqmc_stage(ham: Hamiltonian, trial_path, config_path, out: Path):
    """Trial record (or bare reference determinant) -> projector run -> CSVs."""
    config, frozen_core = load_run_config(config_path)
    if trial_path is not None:
        wfn, spec = qsci_mod.load_record(_require_file(trial_path, "trial record"))
        if frozen_core and spec.n_core > 0:
            valence = ActiveSpaceSpec(
                n_core=spec.n_core,
                active_orbitals=tuple(range(spec.n_core, ham.n_spatial)),
                n_active_alpha=ham.n_alpha - spec.n_core,
                n_active_beta=ham.n_beta - spec.n_core)
            ham_run = fold_core(ham, valence)
            shifted = ActiveSpaceSpec(
                n_core=0,
                active_orbitals=tuple(p - spec.n_core
                                      for p in spec.active_orbitals),
                n_active_alpha=spec.n_active_alpha,
                n_active_beta=spec.n_active_beta)
            trial = qsci_mod.embed_trial(wfn, shifted, ham_run.n_spatial)
        else:
            ham_run = ham
            trial = qsci_mod.embed_trial(wfn, spec, ham.n_spatial)
    else:
        if frozen_core:
            raise CliValidationError(
                "frozen_core requires a trial record with an active space")
        ham_run = ham
        ref = hf_determinant(ham.n_spatial, ham.n_alpha, ham.n_beta)
        trial = TrialWavefunction.from_ci([ref], np.ones(1))
    factors = decompose(ham_run, DEFAULT_THRESHOLD)
    series = afqmc_mod.run(ham_run, trial, factors, config)
    series.to_csv(out / BLOCKS_NAME)
    series.summary_csv(out / SUMMARY_NAME)
    s = series.summary()
    print(f"afqmc_energy {s['energy']:.10f} +/- {s['error']:.10f} "
          f"({s['n_blocks']} blocks of {s['block_size']} steps)")
    print(f"blocks -> {out / BLOCKS_NAME}")
    print(f"summary -> {out / SUMMARY_NAME}")
    return series


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_fci(args) -> int:
    ham = parse_fcidump(_require_file(args.fixture, "fixture"))
    if args.active_space:
        spec = parse_active_space(args.active_space, ham)
        ham = fold_core(ham, spec)
    result = fci_mod.fci_ground_state(ham)
    print(f"fixture {args.fixture}")
    print(f"dimension {result.space.dimension}")
    print(f"energy {result.energy:.10f}")
    return EXIT_OK


def cmd_qsci(args) -> int:
    ham = parse_fcidump(_require_file(args.fixture, "fixture"))
    spec = (parse_active_space(args.active_space, ham)
            if args.active_space else full_space_spec(ham))
    out = _ensure_outdir(args.output)
    run_qsci_stage(ham, spec, args, out)
    return EXIT_OK


def cmd_afqmc(args) -> int:
    ham = parse_fcidump(_require_file(args.fixture, "fixture"))
    out = _ensure_outdir(args.output)
    run_afqmc_stage(ham, args.trial, args.config, out)
    return EXIT_OK


def cmd_counts_import(args) -> int:
    table = sampler_mod.import_counts(_require_file(args.counts_file, "counts file"),
                                      args.mapping, args.n_alpha, args.n_beta)
    for line in _histogram_lines(table):
        print(line)
    if args.output:
        sampler_mod.export_counts(table, Path(args.output))
        print(f"normalized counts -> {args.output}")
    return EXIT_OK


def _parse_points(tokens):
    points = []
    seen = set()
    for tok in tokens:
        label, sep, path = tok.partition("=")
        if not sep or not label or not path:
            raise CliValidationError(f"--point {tok!r} must look like R=FIXTURE")
        try:
            value = float(label)
        except ValueError:
            raise CliValidationError(f"point label {label!r} is not a number") from None
        if label in seen:
            raise CliValidationError(f"duplicate point label {label!r}")
        seen.add(label)
        points.append((value, label, _require_file(path, "fixture")))
    points.sort(key=lambda t: t[0])
    return points


def cmd_curve(args) -> int:
    points = _parse_points(args.point)
    out = _ensure_outdir(args.output)
    shape = None
    rows = []
    for _value, label, fixture in points:
        ham = parse_fcidump(fixture)
        if shape is None:
            shape = (ham.n_spatial, ham.n_alpha, ham.n_beta)
        elif shape != (ham.n_spatial, ham.n_alpha, ham.n_beta):
            raise CliValidationError(
                f"fixture {fixture} has a different orbital/electron count "
                "from earlier points")
        point_dir = _ensure_outdir(out / f"point_{label}")
        point_csv = point_dir / POINT_NAME
        if point_csv.is_file():
            print(f"[{label}] cached -> {point_csv}")
            cached = point_csv.read_text().splitlines()[1:]
            rows.extend(line for line in cached if line)
            continue
        print(f"[{label}] fci")
        e_fci = fci_mod.fci_ground_state(ham).energy
        spec = (parse_active_space(args.active_space, ham)
                if args.active_space else full_space_spec(ham))
        print(f"[{label}] qsci")
        wfn = run_qsci_stage(ham, spec, args, point_dir)
        print(f"[{label}] afqmc")
        series = run_afqmc_stage(ham, point_dir / TRIAL_RECORD_NAME,
                                 args.config, point_dir)
        s = series.summary()
        point_rows = [
            f"{label},fci,{e_fci!r},0.0",
            f"{label},qsci,{wfn.energy!r},0.0",
            f"{label},qsci-afqmc,{s['energy']!r},{s['error']!r}",
        ]
        point_csv.write_text("r,method,energy,error\n"
                             + "\n".join(point_rows) + "\n")
        rows.extend(point_rows)
    curve_path = out / CURVE_NAME
    curve_path.write_text("r,method,energy,error\n" + "\n".join(rows) + "\n")
    print(f"curve -> {curve_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing and entry point
# ---------------------------------------------------------------------------

def _add_sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--shots", type=int, default=sampler_mod.DEFAULT_SHOTS,
                   help="measurement shots for the built-in sampler")
    p.add_argument("--noise", type=float, default=0.0,
                   help="per-bit readout flip probability")
    p.add_argument("--seed", type=int, default=0, help="sampler seed")
    p.add_argument("--mapping", default=sampler_mod.MAPPING_OCCUPATION,
                   choices=[sampler_mod.MAPPING_OCCUPATION,
                            sampler_mod.MAPPING_SCBK],
                   help="bit-string mapping tag")
    p.add_argument("--counts", default=None, metavar="FILE",
                   help="import a counts file instead of sampling")
    p.add_argument("--r", type=int, default=None,
                   help="number of configurations to keep (default: all)")
    p.add_argument("--no-electron-filter", action="store_true",
                   help="keep configurations with wrong electron counts")
    p.add_argument("--no-expand", action="store_true",
                   help="skip the spin-product basis expansion")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsci-afqmc",
        description="Sampling-selected CI trials driving phaseless "
                    "auxiliary-field Monte Carlo.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fci", help="exact diagonalization on a fixture")
    p.add_argument("fixture")
    p.add_argument("--active-space", default=None, metavar="CORE:ORBS",
                   help="e.g. 4:4,5 — freeze 4 orbitals, activate 4 and 5")
    p.set_defaults(func=cmd_fci)

    p = sub.add_parser("qsci", help="sample counts and build a trial record")
    p.add_argument("fixture")
    p.add_argument("--active-space", default=None, metavar="CORE:ORBS")
    _add_sampler_flags(p)
    p.add_argument("--output", required=True, metavar="DIR")
    p.set_defaults(func=cmd_qsci)

    p = sub.add_parser("afqmc", help="run the projector stage")
    p.add_argument("fixture")
    p.add_argument("--trial", default=None, metavar="RECORD",
                   help="trial record from the qsci stage (default: bare "
                        "reference determinant)")
    p.add_argument("--config", default=None, metavar="FILE",
                   help="flat key-value run configuration")
    p.add_argument("--output", required=True, metavar="DIR")
    p.set_defaults(func=cmd_afqmc)

    p = sub.add_parser("curve", help="per-geometry pipelines merged into a table")
    p.add_argument("--point", action="append", required=True, metavar="R=FIXTURE",
                   help="repeatable geometry point")
    p.add_argument("--active-space", default=None, metavar="CORE:ORBS")
    _add_sampler_flags(p)
    p.add_argument("--config", default=None, metavar="FILE")
    p.add_argument("--output", required=True, metavar="DIR")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("counts-import", help="validate and normalize a counts file")
    p.add_argument("counts_file")
    p.add_argument("--mapping", default=sampler_mod.MAPPING_OCCUPATION,
                   choices=[sampler_mod.MAPPING_OCCUPATION,
                            sampler_mod.MAPPING_SCBK])
    p.add_argument("--n-alpha", type=int, required=True)
    p.add_argument("--n-beta", type=int, required=True)
    p.add_argument("--output", default=None, metavar="FILE")
    p.set_defaults(func=cmd_counts_import)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NotPositiveSemidefiniteError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
