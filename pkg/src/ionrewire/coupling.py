"""Effective spin-spin couplings mediated by the crystal's motional modes.

For a drive of Rabi frequency Omega, wavevector difference dk and beatnote
detuning mu from the carrier, the Ising coupling between ions i and j is

    J_ij = Omega^2 R sum_k b_ik b_jk / (mu^2 - omega_k^2)

with R = hbar dk^2 / (2 m) the recoil frequency and b_ik the component of
mode k on ion i along the dk direction. The sum runs over all 3N modes;
modes orthogonal to dk contribute nothing. Everything is in rad/s.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .constants import PhysicalConstants
from .crystal import NormalModes, project_modes

DEFAULT_GUARD_BAND = 2.0 * np.pi * 100.0
PARTICIPATION_CUTOFF = 1e-9


class ResonanceError(ValueError):
    """The detuning sits inside the guard band of a participating mode."""

    def __init__(self, message, mode_index, mode_frequency):
        super().__init__(message)
        self.mode_index = mode_index
        self.mode_frequency = mode_frequency


class CalibrationError(ValueError):
    """The requested coupling is outside the achievable range."""

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


def perpendicular_delta_k(wavelength: float = 355e-9) -> float:
    """|dk| for two beams crossing at 90 degrees: sqrt(2) * 2 pi / lambda."""
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    return np.sqrt(2.0) * 2.0 * np.pi / wavelength


@dataclass(frozen=True)
class RamanDrive:
    """Two-photon drive parameters.

    rabi_frequency and detuning are angular frequencies in rad/s;
    delta_k_magnitude is in rad/m. delta_k_magnitude = 0 is allowed at
    construction (it zeroes the recoil) but rejected by coupling_matrix.
    """

    rabi_frequency: float
    delta_k_magnitude: float
    detuning: float
    delta_k_direction: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        if self.rabi_frequency < 0:
            raise ValueError("rabi_frequency must be nonnegative")
        if self.delta_k_magnitude < 0:
            raise ValueError("delta_k_magnitude must be nonnegative")
        direction = np.asarray(self.delta_k_direction, dtype=float)
        if direction.shape != (3,) or abs(np.linalg.norm(direction) - 1.0) > 1e-9:
            raise ValueError("delta_k_direction must be a unit 3-vector")
        object.__setattr__(self, "delta_k_direction", direction)

    @classmethod
    def perpendicular_beams(cls, rabi_frequency, detuning,
                            wavelength: float = 355e-9,
                            direction=(1.0, 0.0, 0.0)) -> "RamanDrive":
        """Default beam geometry: two beams at 90 degrees."""
        return cls(rabi_frequency=rabi_frequency,
                   delta_k_magnitude=perpendicular_delta_k(wavelength),
                   detuning=detuning,
                   delta_k_direction=np.asarray(direction, dtype=float))


@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric zero-diagonal matrix of pairwise couplings, rad/s."""

    n_ions: int
    j: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.j, dtype=float)
        if j.shape != (self.n_ions, self.n_ions):
            raise ValueError("coupling matrix shape does not match n_ions")
        if not np.all(np.isfinite(j)):
            raise ValueError("coupling matrix entries must be finite")
        if j.size:
            scale = max(np.max(np.abs(j)), 1e-300)
            if np.max(np.abs(j - j.T)) > 1e-12 * scale:
                raise ValueError("coupling matrix must be symmetric")
            if np.max(np.abs(np.diag(j))) > 1e-12 * scale:
                raise ValueError("coupling matrix diagonal must be zero")
        object.__setattr__(self, "j", j)

    @classmethod
    def uniform(cls, n_ions: int, strength: float) -> "CouplingMatrix":
        j = np.full((n_ions, n_ions), float(strength))
        np.fill_diagonal(j, 0.0)
        return cls(n_ions=n_ions, j=j)

    @classmethod
    def from_pairs(cls, n_ions: int, pairs: dict) -> "CouplingMatrix":
        """Build from {(i, j): value} with i < j; missing pairs are zero."""
        j = np.zeros((n_ions, n_ions))
        for (a, b), value in pairs.items():
            j[a, b] = j[b, a] = float(value)
        return cls(n_ions=n_ions, j=j)


def recoil_frequency(drive: RamanDrive, constants: PhysicalConstants) -> float:
    """R = hbar dk^2 / (2 m) in rad/s."""
    return (constants.reduced_planck * drive.delta_k_magnitude**2
            / (2.0 * constants.ion_mass))


def coupling_matrix(modes: NormalModes, drive: RamanDrive,
                    constants: PhysicalConstants,
                    guard_band: float = DEFAULT_GUARD_BAND) -> CouplingMatrix:
    """Evaluate the full pairwise coupling matrix for a given drive.

    Raises ResonanceError if the detuning is within guard_band of any mode
    that participates along the drive direction.
    """
    if drive.delta_k_magnitude <= 0:
        raise ValueError("delta_k_magnitude must be positive to drive couplings")
    proj = project_modes(modes, drive.delta_k_direction,
                         participation_cutoff=PARTICIPATION_CUTOFF)
    mu = abs(drive.detuning)
    gaps = np.abs(mu - proj.frequencies)
    offending = np.where(proj.participating & (gaps < guard_band))[0]
    if offending.size:
        k = int(offending[np.argmin(gaps[offending])])
        raise ResonanceError(
            f"detuning {mu:.6e} rad/s is within the {guard_band:.3e} rad/s "
            f"guard band of participating mode {k} at "
            f"{proj.frequencies[k]:.6e} rad/s",
            mode_index=k, mode_frequency=proj.frequencies[k])

    recoil = recoil_frequency(drive, constants)
    weights = np.zeros_like(proj.frequencies)
    active = proj.participating
    weights[active] = (drive.rabi_frequency**2 * recoil
                       / (mu**2 - proj.frequencies[active] ** 2))
    j = proj.amplitudes.T @ (weights[:, None] * proj.amplitudes)
    j = 0.5 * (j + j.T)
    np.fill_diagonal(j, 0.0)
    return CouplingMatrix(n_ions=modes.n_ions, j=j)


def _com_mode_index(proj) -> int:
    """Mode coupling most strongly to uniform displacement along the drive."""
    return int(np.argmax(np.abs(np.sum(proj.amplitudes, axis=1))))


def calibrate_detuning(modes: NormalModes, drive: RamanDrive,
                       constants: PhysicalConstants, target: float,
                       pair: tuple, side: str = "above",
                       guard_band: float = DEFAULT_GUARD_BAND) -> float:
    """Find the detuning that realizes a target pair coupling.

    Searches the window between the center-of-mass mode (along the drive
    direction) and the adjacent participating mode on the requested side,
    restricted to the branch adjacent to the COM resonance where the pair
    coupling is monotone in the detuning; solves by bisection. The drive's
    own detuning field is ignored.

    Raises CalibrationError (with the achievable range) when the target
    cannot be reached on that branch.
    """
    if side not in ("above", "below"):
        raise ValueError("side must be 'above' or 'below'")
    i, j = pair
    if i == j:
        raise ValueError("pair must name two distinct ions")

    proj = project_modes(modes, drive.delta_k_direction,
                         participation_cutoff=PARTICIPATION_CUTOFF)
    freqs = proj.frequencies[proj.participating]
    omega_com = proj.frequencies[_com_mode_index(proj)]

    if side == "above":
        higher = freqs[freqs > omega_com * (1 + 1e-12)]
        lo = omega_com + guard_band
        hi = (higher.min() - guard_band) if higher.size else 20.0 * freqs.max()
        com_end = lo
    else:
        lower = freqs[freqs < omega_com * (1 - 1e-12)]
        lo = (lower.max() + guard_band) if lower.size else guard_band
        hi = omega_com - guard_band
        com_end = hi
    if not lo < hi:
        raise CalibrationError(
            f"no detuning window on side '{side}' of the COM mode at "
            f"{omega_com:.6e} rad/s", achievable=None)

    def pair_coupling(mu):
        probe = RamanDrive(rabi_frequency=drive.rabi_frequency,
                           delta_k_magnitude=drive.delta_k_magnitude,
                           detuning=mu,
                           delta_k_direction=drive.delta_k_direction)
        return coupling_matrix(modes, probe, constants, guard_band=0.0).j[i, j]

    f_near = pair_coupling(com_end)
    sign = np.sign(f_near)
    if sign == 0:
        raise CalibrationError(
            f"pair {pair} does not couple through the COM mode", achievable=None)

    # The magnitude of the coupling decays away from the COM resonance until
    # the influence of the next mode (if any) takes over; locate that turning
    # point and bisect on the monotone branch between it and the COM edge.
    opt = scipy.optimize.minimize_scalar(
        lambda mu: sign * pair_coupling(mu), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-9 * (hi - lo)})
    turning = float(opt.x)
    f_turn = pair_coupling(turning)

    f_min, f_max = sorted((sign * f_turn, sign * f_near))
    if not f_min <= sign * target <= f_max:
        raise CalibrationError(
            f"target {target:.6e} rad/s not achievable on side '{side}': "
            f"reachable couplings lie in [{min(f_turn, f_near):.6e}, "
            f"{max(f_turn, f_near):.6e}] rad/s",
            achievable=(min(f_turn, f_near), max(f_turn, f_near)))

    bracket = (com_end, turning) if side == "above" else (turning, com_end)
    mu = scipy.optimize.brentq(lambda m: pair_coupling(m) - target,
                               min(bracket), max(bracket), xtol=1e-3)
    achieved = pair_coupling(mu)
    if abs(achieved - target) > 1e-6 * abs(target):
        raise CalibrationError(
            f"bisection stalled at {achieved:.6e} rad/s for target "
            f"{target:.6e} rad/s", achievable=(achieved, achieved))
    return float(mu)
