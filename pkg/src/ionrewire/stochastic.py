"""Monte Carlo layer: optical-pumping shelving, laser-induced deshelving,
projective measurement with SPAM errors, and the full shelve-evolve-measure
protocol with post-selection by initial configuration.

Every shot draws from its own RNG stream seeded by (seed, global shot
index), so runs are reproducible bit for bit and shots can be evaluated in
any order.
"""

import math
from dataclasses import dataclass

import numpy as np

from .coupling import CouplingMatrix
from .dynamics import DecoherenceModel, scan_evolution
from .lattice import ShelveMask, apply_mask


@dataclass(frozen=True)
class ShelvingProcess:
    """Exponential depopulation of the ground manifold under optical pumping."""

    tau_shelve: float = 55e-3

    def __post_init__(self):
        if not self.tau_shelve > 0:
            raise ValueError("tau_shelve must be positive")


@dataclass(frozen=True)
class DeshelvingModel:
    """Power-law intensity scaling of the metastable-state return time.

    tau_g(omega) = reference_tau * (reference_rabi / omega) ** exponent
    """

    reference_rabi: float = 2 * math.pi * 76e3
    reference_tau: float = 0.5
    exponent: float = 2.0

    def __post_init__(self):
        for name in ("reference_rabi", "reference_tau", "exponent"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def tau_g(self, rabi_frequency: float) -> float:
        if not rabi_frequency > 0:
            raise ValueError("rabi_frequency must be positive")
        return self.reference_tau * (self.reference_rabi / rabi_frequency) ** self.exponent


@dataclass(frozen=True)
class MeasurementModel:
    """Shot count and symmetric per-qubit readout flip probability."""

    shots: int
    spam_error: float = 0.04

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be at least 1")
        if not 0.0 <= self.spam_error <= 1.0:
            raise ValueError("spam_error must be a probability")


@dataclass(frozen=True)
class ShotRecord:
    """One protocol shot: verified initial configuration, survivor outcomes
    (character i is the i-th surviving ion, '1' = up), and whether every
    shelved ion stayed shelved through the evolution."""

    shot: int
    time_s: float
    config: str
    outcomes: str
    intact: bool


@dataclass(frozen=True)
class GroupSeries:
    """Post-selected empirical statistics for one shelve configuration.

    counts[t, outcome] accumulates intact shots only; n_total counts every
    shot that started in this configuration (intact or not).
    """

    config: str
    survivors: np.ndarray
    times: np.ndarray
    counts: np.ndarray
    n_total: np.ndarray
    n_intact: np.ndarray

    def frequencies(self) -> np.ndarray:
        """counts / n_intact with zero-shot time bins left as NaN."""
        denom = np.where(self.n_intact > 0, self.n_intact, 1)[:, None]
        freq = self.counts / denom
        freq[self.n_intact == 0, :] = np.nan
        return freq

    def outcome_frequency(self, bits: str) -> np.ndarray:
        index = sum(1 << i for i, b in enumerate(bits) if b == "1")
        return self.frequencies()[:, index]


@dataclass(frozen=True)
class ProtocolResult:
    times: np.ndarray
    records: list
    groups: dict

    def group(self, config: str) -> GroupSeries:
        return self.groups[config]


def shelf_survival(t: float, process: ShelvingProcess) -> float:
    """Probability of remaining in the ground manifold after pumping for t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return math.exp(-t / process.tau_shelve)


def sample_shelving(n: int, beam_time: float, process: ShelvingProcess,
                    rng: np.random.Generator) -> ShelveMask:
    """Independent per-ion Bernoulli shelving after a pumping pulse."""
    p = 1.0 - shelf_survival(beam_time, process)
    return ShelveMask(tuple(bool(u < p) for u in rng.random(n)))


def deshelve_probability(t: float, rabi_frequency: float,
                         model: DeshelvingModel) -> float:
    """Probability that a shelved ion has returned to the ground manifold."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return 1.0 - math.exp(-t / model.tau_g(rabi_frequency))


def sample_measurement(probabilities, model: MeasurementModel,
                       rng: np.random.Generator) -> np.ndarray:
    """Multinomial outcome counts with independent per-qubit SPAM flips."""
    p = np.asarray(probabilities, dtype=float)
    if p.ndim != 1 or p.size < 1 or (p.size & (p.size - 1)):
        raise ValueError("probabilities must have length 2**n_qubits")
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be normalized")
    n = p.size.bit_length() - 1

    counts = rng.multinomial(model.shots, p / p.sum())
    if model.spam_error > 0.0 and n > 0:
        outcomes = np.repeat(np.arange(p.size), counts)
        flips = rng.random((model.shots, n)) < model.spam_error
        flip_ints = flips @ (1 << np.arange(n))
        counts = np.bincount(outcomes ^ flip_ints, minlength=p.size)
    return counts


def _shot_rng(seed: int, shot: int) -> np.random.Generator:
    return np.random.default_rng([seed, shot])


def run_protocol(coupling: CouplingMatrix, beam_time: float, times,
                 shelving: ShelvingProcess, measurement: MeasurementModel,
                 seed: int, deshelving: DeshelvingModel | None = None,
                 drive_rabi: float | None = None,
                 decoherence: DecoherenceModel | None = None) -> ProtocolResult:
    """Full pulse-sequence simulation over a time grid.

    Per shot: sample which ions the pumping pulse shelved (the first
    detection verifies this configuration), evolve the surviving spins under
    the masked coupling graph, optionally sample a laser-induced return time
    for each shelved ion (a return before the evolution ends marks the shot
    not-intact; the returned ion's spin dynamics are not simulated), then
    measure the survivors with SPAM flips.

    Shots are grouped by their verified initial configuration; the group
    counts that feed the empirical frequencies include intact shots only,
    mirroring the experimental post-selection. Group totals partition the
    full shot budget.
    """
    times = np.asarray(times, dtype=float)
    n = coupling.n_ions
    shots = measurement.shots
    if deshelving is not None and not (drive_rabi and drive_rabi > 0):
        raise ValueError("deshelving requires the drive Rabi frequency")

    prob_cache: dict = {}

    def config_probabilities(mask: ShelveMask):
        key = mask.to_string()
        if key not in prob_cache:
            graph = apply_mask(coupling, mask)
            series = scan_evolution(graph, times, model=decoherence)
            prob_cache[key] = (graph.survivors,
                               np.cumsum(series.probabilities, axis=1))
        return prob_cache[key]

    records = []
    group_counts: dict = {}
    group_total: dict = {}
    group_intact: dict = {}
    group_survivors: dict = {}

    for ti, t in enumerate(times):
        for s in range(shots):
            shot_index = ti * shots + s
            rng = _shot_rng(seed, shot_index)

            mask = sample_shelving(n, beam_time, shelving, rng)
            config = mask.to_string()
            survivors, cumulative = config_probabilities(mask)
            k = survivors.size

            intact = True
            if deshelving is not None and len(mask.shelved_indices):
                tau = deshelving.tau_g(drive_rabi)
                returns = rng.exponential(tau, size=len(mask.shelved_indices))
                intact = bool(np.all(returns > t))

            u = rng.random()
            outcome = int(np.searchsorted(cumulative[ti], u, side="right"))
            outcome = min(outcome, 2**k - 1)
            if measurement.spam_error > 0.0 and k > 0:
                flips = rng.random(k) < measurement.spam_error
                outcome ^= int(flips @ (1 << np.arange(k)))

            bits = format(outcome, f"0{k}b")[::-1] if k else ""
            records.append(ShotRecord(shot=shot_index, time_s=float(t),
                                      config=config, outcomes=bits,
                                      intact=intact))

            if config not in group_counts:
                group_counts[config] = np.zeros((times.size, 2**k), dtype=np.int64)
                group_total[config] = np.zeros(times.size, dtype=np.int64)
                group_intact[config] = np.zeros(times.size, dtype=np.int64)
                group_survivors[config] = survivors
            group_total[config][ti] += 1
            if intact:
                group_intact[config][ti] += 1
                group_counts[config][ti, outcome] += 1

    groups = {
        config: GroupSeries(config=config,
                            survivors=group_survivors[config],
                            times=times,
                            counts=group_counts[config],
                            n_total=group_total[config],
                            n_intact=group_intact[config])
        for config in sorted(group_counts)
    }
    return ProtocolResult(times=times, records=records, groups=groups)
