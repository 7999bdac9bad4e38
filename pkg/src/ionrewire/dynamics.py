"""Exact spin dynamics under H = sum_{i<j} J_ij sigma_x^i sigma_x^j.

Every term commutes, so e^{-iHt} is diagonal in the x basis: transform with
a Walsh-Hadamard butterfly, accumulate phases exp(-i t E(s)) with
E(s) = sum_{i<j} J_ij s_i s_j over spin signs s = +-1, and transform back.
Cost is O(n 2^n) per time point, exact to machine precision.

z-basis indexing: bit i of the amplitude index is the state of spin i,
0 = down. Outcome labels read spin 0 first, '1' = up.
"""

import math
from dataclasses import dataclass

import numpy as np

from .lattice import InteractionGraph, ShelveMask

SIZE_CAP = 14


class CapacityError(ValueError):
    """Spin count exceeds the exact-evolution size cap."""


@dataclass(frozen=True)
class SpinState:
    """Pure state over 2^n z-basis amplitudes, normalized to 1e-12."""

    n_spins: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.n_spins,):
            raise ValueError("amplitude vector length must be 2**n_spins")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state norm {norm!r} is not 1 within 1e-12")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def all_down(cls, n_spins: int) -> "SpinState":
        amps = np.zeros(2**n_spins, dtype=complex)
        amps[0] = 1.0
        return cls(n_spins=n_spins, amplitudes=amps)

    @classmethod
    def from_bits(cls, bits: str) -> "SpinState":
        """Product state from a '0'/'1' string, character i = spin i."""
        n = len(bits)
        index = sum(1 << i for i, b in enumerate(bits) if b == "1")
        amps = np.zeros(2**n, dtype=complex)
        amps[index] = 1.0
        return cls(n_spins=n, amplitudes=amps)


@dataclass(frozen=True)
class DecoherenceModel:
    """Exponential contrast envelope with time constant tau_d (seconds).

    tau_d = inf disables damping.
    """

    tau_d: float = math.inf

    def __post_init__(self):
        if not self.tau_d > 0:
            raise ValueError("tau_d must be positive (or inf to disable)")


@dataclass(frozen=True)
class ObservableSeries:
    """Z-basis outcome probabilities on a time grid.

    probabilities has shape (len(times), 2**n_spins); each row sums to 1
    within 1e-10.
    """

    n_spins: int
    times: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        probs = np.asarray(self.probabilities, dtype=float)
        if probs.shape != (times.size, 2**self.n_spins):
            raise ValueError("probability array shape mismatch")
        if probs.size and (np.min(probs) < -1e-10 or np.max(probs) > 1 + 1e-10):
            raise ValueError("probabilities must lie in [0, 1]")
        if times.size and np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-10:
            raise ValueError("probabilities must sum to 1 per timestep")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "probabilities", probs)

    def outcome_labels(self) -> list:
        """Bitstrings with spin 0 as the first character, '1' = up."""
        n = self.n_spins
        return [format(idx, f"0{n}b")[::-1] if n else ""
                for idx in range(2**n)]

    def outcome(self, bits: str) -> np.ndarray:
        """Probability series of one outcome, e.g. '11' for two spins up."""
        index = sum(1 << i for i, b in enumerate(bits) if b == "1")
        return self.probabilities[:, index]

    def mean_magnetization(self) -> np.ndarray:
        """Average <sigma_z> over spins, per time (+1 = up)."""
        n = self.n_spins
        if n == 0:
            return np.zeros(self.times.size)
        idx = np.arange(2**n)
        signs = 2.0 * ((idx[:, None] >> np.arange(n)[None, :]) & 1) - 1.0
        return self.probabilities @ signs.mean(axis=1)


def _walsh_hadamard(amps: np.ndarray) -> np.ndarray:
    """Normalized Walsh-Hadamard transform (its own inverse)."""
    out = amps.copy()
    size = out.size
    h = 1
    while h < size:
        out = out.reshape(-1, 2, h)
        top = out[:, 0, :] + out[:, 1, :]
        bottom = out[:, 0, :] - out[:, 1, :]
        out = np.stack((top, bottom), axis=1)
        h *= 2
    return out.reshape(size) / math.sqrt(size)


def _spin_signs(n: int) -> np.ndarray:
    """(2^n, n) array of x-basis signs; bit 0 maps to s = +1."""
    idx = np.arange(2**n)
    bits = (idx[:, None] >> np.arange(n)[None, :]) & 1
    return 1.0 - 2.0 * bits


def ising_energies(couplings: np.ndarray) -> np.ndarray:
    """E(s) = sum_{i<j} J_ij s_i s_j for every x-basis sign assignment."""
    n = couplings.shape[0]
    signs = _spin_signs(n)
    return 0.5 * np.einsum("si,ij,sj->s", signs, couplings, signs)


def _check_capacity(n: int):
    if n > SIZE_CAP:
        raise CapacityError(
            f"{n} spins exceeds the exact-evolution cap of {SIZE_CAP}")


def evolve_ising(graph: InteractionGraph, t: float, initial: SpinState) -> SpinState:
    """Exact |psi(t)> = exp(-iHt) |psi(0)> for the graph's Ising couplings."""
    n = graph.n_spins
    _check_capacity(n)
    if initial.n_spins != n:
        raise ValueError(
            f"state has {initial.n_spins} spins, graph has {n} survivors")
    if n == 0:
        return initial
    psi_x = _walsh_hadamard(initial.amplitudes)
    psi_x = psi_x * np.exp(-1j * t * ising_energies(graph.couplings))
    return SpinState(n_spins=n, amplitudes=_walsh_hadamard(psi_x))


def populations(state: SpinState) -> np.ndarray:
    """|amplitude|^2 per z-basis outcome; sums to 1."""
    p = np.abs(state.amplitudes) ** 2
    return p / p.sum()


def dephased_limit(graph: InteractionGraph, initial: SpinState,
                   energy_rtol: float = 1e-9) -> np.ndarray:
    """Long-time average of the outcome probabilities.

    Cross terms between x-basis states of different energy average to zero,
    so the limit is the incoherent sum over equal-energy groups. For a
    periodic signal this equals the average over one fundamental period.
    """
    n = graph.n_spins
    _check_capacity(n)
    if n == 0:
        return np.ones(1)
    psi_x = _walsh_hadamard(initial.amplitudes)
    energies = ising_energies(graph.couplings)
    scale = max(np.max(np.abs(energies)), 1.0)
    keys = np.round(energies / (scale * energy_rtol)).astype(np.int64)

    limit = np.zeros(2**n)
    for key in np.unique(keys):
        member = keys == key
        component = np.where(member, psi_x, 0.0)
        limit += np.abs(_walsh_hadamard(component)) ** 2
    return limit / limit.sum()


def apply_decoherence(series: ObservableSeries, model: DecoherenceModel,
                      long_time_limit: np.ndarray | None = None,
                      graph: InteractionGraph | None = None,
                      initial: SpinState | None = None) -> ObservableSeries:
    """Damp probabilities toward their dephased limit:

        p(t) -> p_inf + (p(t) - p_inf) exp(-t / tau_d)

    p_inf defaults to the exact long-time average, which needs the graph and
    initial state; pass long_time_limit to override with a constant.
    """
    if not math.isfinite(model.tau_d):
        return series
    if long_time_limit is None:
        if graph is None or initial is None:
            raise ValueError(
                "provide graph and initial state (or an explicit "
                "long_time_limit) to compute the dephased limit")
        long_time_limit = dephased_limit(graph, initial)
    p_inf = np.asarray(long_time_limit, dtype=float)
    envelope = np.exp(-series.times / model.tau_d)[:, None]
    damped = p_inf[None, :] + (series.probabilities - p_inf[None, :]) * envelope
    return ObservableSeries(n_spins=series.n_spins, times=series.times,
                            probabilities=damped)


def scan_evolution(graph: InteractionGraph, times, initial: SpinState | None = None,
                   model: DecoherenceModel | None = None,
                   threads: int = 1) -> ObservableSeries:
    """Outcome probabilities over a time grid, optionally decohered.

    Evaluates the shared x-basis transform once; independent time points may
    be computed in parallel with identical (bit-exact) results.
    """
    n = graph.n_spins
    _check_capacity(n)
    times = np.asarray(times, dtype=float)
    if initial is None:
        initial = SpinState.all_down(n)
    if initial.n_spins != n:
        raise ValueError("initial state size does not match survivor count")

    if n == 0:
        probs = np.ones((times.size, 1))
    else:
        psi_x = _walsh_hadamard(initial.amplitudes)
        energies = ising_energies(graph.couplings)

        def one_time(t):
            psi_z = _walsh_hadamard(psi_x * np.exp(-1j * t * energies))
            p = np.abs(psi_z) ** 2
            return p / p.sum()

        if threads > 1 and times.size > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(one_time, times))
        else:
            rows = [one_time(t) for t in times]
        probs = np.array(rows).reshape(times.size, 2**n)

    series = ObservableSeries(n_spins=n, times=times, probabilities=probs)
    if model is not None and math.isfinite(model.tau_d):
        series = apply_decoherence(series, model, graph=graph, initial=initial)
    return series


def zero_shelved_couplings(j: np.ndarray, mask: ShelveMask) -> np.ndarray:
    """Full-size coupling matrix with every coupling to a shelved ion zeroed."""
    out = np.asarray(j, dtype=float).copy()
    idx = mask.shelved_indices
    out[idx, :] = 0.0
    out[:, idx] = 0.0
    return out


def embed_survivor_state(state: SpinState, survivors, n_total: int) -> SpinState:
    """Tensor a survivor state with shelved spins pinned to |down>."""
    survivors = np.asarray(survivors, dtype=int)
    if state.n_spins != survivors.size:
        raise ValueError("state size does not match survivor count")
    amps = np.zeros(2**n_total, dtype=complex)
    k = survivors.size
    for m in range(2**k):
        full = 0
        for b in range(k):
            if (m >> b) & 1:
                full |= 1 << survivors[b]
        amps[full] = state.amplitudes[m]
    return SpinState(n_spins=n_total, amplitudes=amps)


def survivor_marginal(probabilities: np.ndarray, n_total: int,
                      survivors) -> np.ndarray:
    """Marginal outcome distribution over a subset of spins.

    Bit i' of the reduced index is survivor i' in ascending original order.
    """
    survivors = np.sort(np.asarray(survivors, dtype=int))
    others = [i for i in range(n_total) if i not in set(survivors.tolist())]
    # reshape to one axis per spin; row-major puts spin n-1 on axis 0
    grid = np.asarray(probabilities).reshape([2] * n_total if n_total else [1])
    axes = tuple(n_total - 1 - i for i in others)
    reduced = grid.sum(axis=axes) if axes else grid
    return reduced.reshape(-1)
