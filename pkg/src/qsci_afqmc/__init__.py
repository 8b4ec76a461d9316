"""Sampled-configuration selected CI trial states for phaseless
auxiliary-field projector Monte Carlo, with a built-in exact-diagonalization
reference for desk-scale validation.

Submodules
----------
hamio      Hamiltonian container, FCIDUMP I/O, frozen-core folding.
factorize  Cholesky factorization of the two-electron integrals.
detops     Determinant algebra: matrix elements, overlaps, Green's functions.
fci        Exact diagonalization in the full or active determinant space.
sampler    Measurement emulation and counts-table handling.
qsci       Counts-driven selected CI and trial-state records.
afqmc      Phaseless auxiliary-field projector Monte Carlo.
cli        Command-line pipelines over the above.

Submodules load lazily so process-level knobs (e.g. thread-count
environment variables) can be set before any numerical library comes in.
"""

from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = ("afqmc", "cli", "detops", "factorize", "fci", "hamio",
               "qsci", "sampler")

_EXPORTS = {
    "Hamiltonian": "hamio",
    "ActiveSpaceSpec": "hamio",
    "parse_fcidump": "hamio",
    "write_fcidump": "hamio",
    "fold_core": "hamio",
    "CholeskyFactorization": "factorize",
    "decompose": "factorize",
    "Determinant": "detops",
    "SpinString": "detops",
    "SlaterMatrix": "detops",
    "TrialWavefunction": "detops",
    "slater_condon": "detops",
    "local_energy": "detops",
    "fci_ground_state": "fci",
    "ci_as_trial": "fci",
    "sample_state": "sampler",
    "import_counts": "sampler",
    "run_qsci": "qsci",
    "embed_trial": "qsci",
    "PropagatorConfig": "afqmc",
    "run": "afqmc",
    "blocking_analysis": "afqmc",
}

__all__ = list(_SUBMODULES) + list(_EXPORTS)


def __getattr__(name):
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    if name in _EXPORTS:
        module = import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(__all__))
