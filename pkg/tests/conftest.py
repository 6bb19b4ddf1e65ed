import numpy as np
import pytest
from hypothesis import settings

from povmtomo.simulator import SimConfig, probe_states_12, sample_counts, stern_gerlach_povms

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

_ACCEPTANCE = []


def record_acceptance(number: int, passed: bool, detail: str):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    _ACCEPTANCE.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sg_povm():
    return stern_gerlach_povms()


@pytest.fixture(scope="session")
def probes12():
    return probe_states_12()


@pytest.fixture(scope="session")
def seed7_counts():
    return sample_counts(SimConfig.stern_gerlach(7, 30))


def random_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    a = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    return a @ a.conj().T


def random_state(rng, n, rank=None):
    m = random_psd(rng, n, rank)
    return m / np.trace(m).real


def random_povm(rng, n, k):
    """Full-rank POVM from k random PSD operators normalised by their sum."""
    ops = np.stack([random_psd(rng, n) for _ in range(k)])
    total = ops.sum(axis=0)
    w, v = np.linalg.eigh(total)
    inv_root = (v / np.sqrt(w)) @ v.conj().T
    out = np.einsum("ij,ljk,km->lim", inv_root, ops, inv_root)
    return np.stack([0.5 * (o + o.conj().T) for o in out])
