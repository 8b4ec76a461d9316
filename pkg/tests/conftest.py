"""Shared fixtures: parsed FCIDUMP files and reference data, cached per session."""

import json
from pathlib import Path

import pytest

from qsci_afqmc import factorize, fci, hamio

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURE_DIR


@pytest.fixture(scope="session")
def reference() -> dict:
    return json.loads((FIXTURE_DIR / "reference.json").read_text())


@pytest.fixture(scope="session")
def load_ham():
    """Cached FCIDUMP loader keyed by fixture name (without extension)."""
    cache: dict[str, hamio.Hamiltonian] = {}

    def _load(name: str) -> hamio.Hamiltonian:
        if name not in cache:
            cache[name] = hamio.parse_fcidump(FIXTURE_DIR / f"{name}.fcidump")
        return cache[name]

    return _load


@pytest.fixture(scope="session")
def load_factors(load_ham):
    cache: dict[str, factorize.CholeskyFactorization] = {}

    def _load(name: str) -> factorize.CholeskyFactorization:
        if name not in cache:
            cache[name] = factorize.decompose(load_ham(name))
        return cache[name]

    return _load


@pytest.fixture(scope="session")
def load_fci(load_ham):
    """Cached full-space exact ground states (the expensive oracle calls)."""
    cache: dict[str, fci.FciResult] = {}

    def _load(name: str) -> fci.FciResult:
        if name not in cache:
            cache[name] = fci.fci_ground_state(load_ham(name))
        return cache[name]

    return _load
