"""Ground-truth spin-1 Stern-Gerlach model and seeded Monte Carlo sampling.

Basis ordering is ``|1_z>, |0_z>, |-1_z>`` so that ``sigma_z = diag(1, 0, -1)``.

Sampling is reproducible across platforms: probe ``m`` draws its uniforms
from a Philox counter-based generator keyed by ``SeedSequence([seed, m])``
and maps them to outcomes by inverse CDF.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matcore
from .core import CountTable, DensityMatrix, FrequencyTable, PovmSet, ProbeEnsemble, probability_table
from .errors import InvalidProbabilities

PROB_TOL = 1e-10
# probabilities below this are rounding residue of an exact zero
ZERO_PROB = 1e-15


def spin1_operators():
    """Spin-1 matrices ``(sigma_x, sigma_y, sigma_z)`` in the ``s_z = 1, 0, -1`` basis."""
    s = 1.0 / np.sqrt(2.0)
    sx = s * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
    sy = s * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return sx, sy, sz


def fix_phase(vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate each column so its first non-negligible entry is real positive."""
    out = np.array(vectors, dtype=complex)
    for j in range(out.shape[1]):
        nz = np.flatnonzero(np.abs(out[:, j]) > tol)
        if nz.size:
            z = out[nz[0], j]
            out[:, j] *= abs(z) / z
    return out


def spin_x_eigenvectors() -> np.ndarray:
    """Columns ``|1_x>, |0_x>, |-1_x>`` with the phase convention of `fix_phase`."""
    return fix_phase(matcore.hermitian_eig(spin1_operators()[0]).eigenvectors)


def stern_gerlach_povms() -> PovmSet:
    """Projectors onto the x-spin eigenstates, ordered ``+1, 0, -1``."""
    v = spin_x_eigenvectors()
    return PovmSet(np.stack([np.outer(v[:, i], v[:, i].conj()) for i in range(3)]))


_BASIS_LABELS = {0: "1z", 1: "0z", 2: "-1z"}
# e^{i psi} for psi = 0, pi/2, pi, written exactly
_PHASES = ((1.0, "0"), (1j, "pi/2"), (-1.0, "pi"))


def probe_states_12() -> ProbeEnsemble:
    """Three z-basis states followed by nine equal-weight superpositions.

    Order: ``|-1_z>, |0_z>, |1_z>``, then the pairs ``(-1, 0)``, ``(0, 1)``,
    ``(-1, 1)`` with relative phase ``0, pi/2, pi`` within each pair.
    """
    e = np.eye(3, dtype=complex)
    kets, labels = [], []
    for idx in (2, 1, 0):
        kets.append(e[idx])
        labels.append(f"|{_BASIS_LABELS[idx]}>")
    for a, b in ((2, 1), (1, 0), (2, 0)):
        for phase, name in _PHASES:
            kets.append((e[a] + phase * e[b]) / np.sqrt(2.0))
            labels.append(f"(|{_BASIS_LABELS[a]}>+e^(i{name})|{_BASIS_LABELS[b]}>)/sqrt2")
    return ProbeEnsemble(tuple(DensityMatrix.from_ket(k) for k in kets), tuple(labels))


@dataclass(frozen=True)
class SimConfig:
    seed: int
    shots_per_state: int
    probe_set: ProbeEnsemble
    true_povm: PovmSet

    def __post_init__(self):
        if int(self.shots_per_state) != self.shots_per_state or self.shots_per_state < 1:
            raise ValueError(f"shots_per_state must be a positive integer, got {self.shots_per_state!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @classmethod
    def stern_gerlach(cls, seed: int, shots_per_state: int = 30) -> "SimConfig":
        return cls(seed, shots_per_state, probe_states_12(), stern_gerlach_povms())


def probe_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def sample_categorical(rng: np.random.Generator, probs: np.ndarray, shots: int) -> np.ndarray:
    """Histogram of `shots` inverse-CDF draws from `probs`."""
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    draws = np.searchsorted(cdf, rng.random(shots), side="right")
    return np.bincount(np.minimum(draws, probs.size - 1), minlength=probs.size)


def true_probabilities(config: SimConfig) -> np.ndarray:
    """Outcome probabilities per probe, renormalised, shape ``(k, M)``."""
    p = probability_table(config.true_povm, config.probe_set)
    if np.any(p < -PROB_TOL):
        l, m = np.unravel_index(np.argmin(p), p.shape)
        raise InvalidProbabilities(f"outcome {l} has probability {p[l, m]:.3e} on probe {m}")
    p = np.clip(p, 0.0, None)
    return p / p.sum(axis=0)


def sample_counts(config: SimConfig) -> CountTable:
    """Monte Carlo counts, ``shots_per_state`` draws for every probe."""
    p = true_probabilities(config)
    cols = [
        sample_categorical(probe_stream(config.seed, m), p[:, m], config.shots_per_state)
        for m in range(p.shape[1])
    ]
    return CountTable(np.stack(cols, axis=1))


def exact_frequencies(povm: PovmSet, probes: ProbeEnsemble, shots=None) -> FrequencyTable:
    """Noise-free relative frequencies: what infinitely many shots would give.

    `shots` optionally weights the probes (default: equal weight).  Values
    below 1e-15 are set to exactly zero so that impossible outcomes stay
    impossible.
    """
    p = probability_table(povm, probes)
    p = np.where(p < ZERO_PROB, 0.0, p)
    p = p / p.sum(axis=0)
    if shots is not None:
        p = p * np.asarray(shots, dtype=float)
    return FrequencyTable(p / p.sum())
