"""Equilibrium structure and normal modes of ion crystals in a harmonic trap.

The potential energy of N identical ions is

    U = sum_i m/2 (wx^2 x_i^2 + wy^2 y_i^2 + wz^2 z_i^2)
        + sum_{i<j} e^2 / (4 pi eps0 r_ij)

Internally everything is dimensionless: lengths in units of
l = (e^2 / (4 pi eps0 m wx^2))^(1/3) and frequencies in units of wx, which
makes the Coulomb term exactly sum 1/r_ij and keeps the minimizer well
conditioned. SI values are restored at the interface.

Coordinate layout is ion-major: flat index 3*i + a for ion i, axis a.
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .constants import PhysicalConstants


class ConvergenceError(RuntimeError):
    """No restart of the equilibrium search met the gradient tolerance."""

    def __init__(self, message, best_residual):
        super().__init__(message)
        self.best_residual = best_residual


class UnstableCrystalError(RuntimeError):
    """The Hessian at the candidate equilibrium has a negative eigenvalue."""


@dataclass(frozen=True)
class TrapConfig:
    """Secular angular frequencies of the harmonic pseudopotential, rad/s."""

    omega_x: float
    omega_y: float
    omega_z: float

    def __post_init__(self):
        for name in ("omega_x", "omega_y", "omega_z"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")

    @classmethod
    def from_hz(cls, freq_x: float, freq_y: float, freq_z: float) -> "TrapConfig":
        """Build from ordinary frequencies in Hz (multiplied by 2 pi here)."""
        two_pi = 2.0 * np.pi
        return cls(two_pi * freq_x, two_pi * freq_y, two_pi * freq_z)

    def as_array(self) -> np.ndarray:
        return np.array([self.omega_x, self.omega_y, self.omega_z])


@dataclass(frozen=True)
class IonCrystal:
    """Converged equilibrium configuration.

    positions is an (N, 3) array in meters; potential_energy is in joules and
    gradient_norm is the residual force 2-norm in newtons.
    """

    n_ions: int
    positions: np.ndarray
    potential_energy: float
    gradient_norm: float


@dataclass(frozen=True)
class NormalModes:
    """Eigensystem of the mass-scaled Hessian at equilibrium.

    frequencies: 3N mode angular frequencies in rad/s, ascending.
    eigenvectors: orthonormal (3N, 3N) matrix; rows indexed 3*ion + axis,
    columns indexed by mode. Signs follow the largest-component-positive rule.
    """

    n_ions: int
    frequencies: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class ModeProjection:
    """Per-ion mode amplitudes along a spatial direction.

    amplitudes[k, i] is the component of mode k on ion i along the direction;
    participating flags modes whose largest amplitude exceeds the cutoff.
    """

    frequencies: np.ndarray
    amplitudes: np.ndarray
    participating: np.ndarray


def length_scale(constants: PhysicalConstants, trap: TrapConfig) -> float:
    """Coulomb length l = (e^2 / (4 pi eps0 m wx^2))^(1/3) in meters."""
    e = constants.elementary_charge
    coulomb = e * e / (4.0 * np.pi * constants.vacuum_permittivity)
    return (coulomb / (constants.ion_mass * trap.omega_x**2)) ** (1.0 / 3.0)


def _alphas(trap: TrapConfig) -> np.ndarray:
    """Dimensionless squared trap frequencies (wx, wy, wz)^2 / wx^2."""
    w = trap.as_array()
    return (w / trap.omega_x) ** 2


def _pair_geometry(pos: np.ndarray):
    """Pairwise displacement tensor and inverse distances with zeroed diagonal."""
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=2))
    np.fill_diagonal(dist, np.inf)
    return diff, 1.0 / dist


def potential(u: np.ndarray, alphas: np.ndarray) -> float:
    """Dimensionless potential energy at flat ion-major coordinates u."""
    pos = u.reshape(-1, 3)
    _, inv = _pair_geometry(pos)
    harmonic = 0.5 * np.sum(alphas * pos**2)
    coulomb = 0.5 * np.sum(inv)
    return harmonic + coulomb


def gradient(u: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Analytic gradient of `potential`, same flat layout as u."""
    pos = u.reshape(-1, 3)
    diff, inv = _pair_geometry(pos)
    grad = alphas * pos - np.sum(diff * inv[:, :, None] ** 3, axis=1)
    return grad.reshape(-1)


def hessian(u: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Analytic Hessian of `potential` as a (3N, 3N) symmetric matrix."""
    pos = u.reshape(-1, 3)
    n = pos.shape[0]
    diff, inv = _pair_geometry(pos)
    inv3 = inv**3
    inv5 = inv**5

    eye3 = np.eye(3)
    # Off-diagonal ion blocks: d^2(1/r)/du_i du_j = delta_ab/r^3 - 3 d_a d_b/r^5.
    # The i == j entries are exactly zero because inv has a zeroed diagonal.
    cross = (inv3[:, :, None, None] * eye3[None, None, :, :]
             - 3.0 * diff[:, :, :, None] * diff[:, :, None, :] * inv5[:, :, None, None])
    blocks = cross.copy()
    idx = np.arange(n)
    # Diagonal ion blocks: trap curvature minus the sum of off-diagonal blocks.
    blocks[idx, idx] = -np.sum(cross, axis=1) + np.diag(alphas)[None, :, :]
    h = blocks.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)
    return 0.5 * (h + h.T)


def _newton_polish(u, alphas, tol, max_steps=60):
    """Newton refinement of a near-converged configuration."""
    u = u.copy()
    energy = potential(u, alphas)
    for _ in range(max_steps):
        g = gradient(u, alphas)
        if np.linalg.norm(g) <= tol:
            break
        h = hessian(u, alphas)
        try:
            step = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            step = -g
        # Backtrack if a full Newton step overshoots.
        for _ in range(30):
            trial = u + step
            trial_energy = potential(trial, alphas)
            if np.isfinite(trial_energy) and trial_energy <= energy + 1e-12 * abs(energy):
                u, energy = trial, trial_energy
                break
            step *= 0.5
        else:
            break
    return u, energy, np.linalg.norm(gradient(u, alphas))


def _canonical_order(pos: np.ndarray) -> np.ndarray:
    """Sort ions lexicographically by rounded (x, y, z) for stable labeling."""
    key = np.round(pos, 7)
    order = np.lexsort((key[:, 2], key[:, 1], key[:, 0]))
    return pos[order]


def solve_equilibrium(constants: PhysicalConstants, trap: TrapConfig, n: int,
                      seed: int, restarts: int = 8, max_iterations: int = 2000,
                      gradient_tol: float = 1e-10) -> IonCrystal:
    """Find the minimum-energy ion configuration by multi-start minimization.

    Runs `restarts` quasi-Newton searches from seeded random initial
    configurations, polishes each with Newton steps, and keeps the
    lowest-energy converged result (ties go to the lowest restart index).
    `gradient_tol` applies to the dimensionless gradient 2-norm.

    Raises ConvergenceError (carrying the best residual force in newtons)
    if no restart converges.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    alphas = _alphas(trap)
    ell = length_scale(constants, trap)
    energy_unit = constants.ion_mass * trap.omega_x**2 * ell**2
    force_unit = constants.ion_mass * trap.omega_x**2 * ell

    rng = np.random.default_rng(seed)
    spread = 0.75 * max(n, 2) ** (1.0 / 3.0)
    inits = rng.normal(scale=spread, size=(restarts, 3 * n))

    best = None
    best_gnorm = np.inf
    for x0 in inits:
        res = scipy.optimize.minimize(
            potential, x0, args=(alphas,), jac=gradient, method="BFGS",
            options={"gtol": 0.1 * gradient_tol, "maxiter": max_iterations})
        u, energy, gnorm = _newton_polish(res.x, alphas, 0.1 * gradient_tol)
        best_gnorm = min(best_gnorm, gnorm)
        if gnorm <= gradient_tol and (best is None or energy < best[0]):
            best = (energy, u)

    if best is None:
        raise ConvergenceError(
            f"equilibrium search failed for n={n}: best residual "
            f"{best_gnorm:.3e} (dimensionless) exceeds {gradient_tol:.1e}",
            best_residual=best_gnorm * force_unit)

    energy, u = best
    pos = _canonical_order(u.reshape(n, 3))
    gnorm = np.linalg.norm(gradient(pos.reshape(-1), alphas))
    return IonCrystal(
        n_ions=n,
        positions=pos * ell,
        potential_energy=energy * energy_unit,
        gradient_norm=gnorm * force_unit,
    )


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip eigenvector signs so the largest-magnitude component is positive.

    np.argmax returns the first maximal entry, so ties resolve to the lowest
    (ion, axis) row index.
    """
    out = vecs.copy()
    for k in range(out.shape[1]):
        lead = np.argmax(np.abs(out[:, k]))
        if out[lead, k] < 0:
            out[:, k] = -out[:, k]
    return out


def _canonical_degenerate_basis(vecs: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of a degenerate eigenspace.

    Projects coordinate-axis unit vectors onto the subspace in row order and
    Gram-Schmidt orthonormalizes, so the result does not depend on the
    arbitrary basis returned by the eigensolver.
    """
    dim = vecs.shape[1]
    projector = vecs @ vecs.T
    basis = []
    for r in range(vecs.shape[0]):
        w = projector[:, r].copy()
        for b in basis:
            w -= (b @ w) * b
        norm = np.linalg.norm(w)
        if norm > 1e-6:
            basis.append(w / norm)
            if len(basis) == dim:
                break
    # Fall back to the eigensolver basis if the projector sweep came up short
    # (cannot happen for an exact projector; guards against pathological input).
    for k in range(dim):
        if len(basis) == dim:
            break
        w = vecs[:, k].copy()
        for b in basis:
            w -= (b @ w) * b
        norm = np.linalg.norm(w)
        if norm > 1e-6:
            basis.append(w / norm)
    if len(basis) != dim:
        raise RuntimeError("degenerate subspace could not be re-spanned")
    return np.column_stack(basis)


def compute_normal_modes(constants: PhysicalConstants, trap: TrapConfig,
                         crystal: IonCrystal,
                         degeneracy_rtol: float = 1e-9) -> NormalModes:
    """Diagonalize the mass-scaled Hessian at the crystal equilibrium.

    Frequencies come back ascending in rad/s; eigenvectors are orthonormal
    with a deterministic sign and degenerate-subspace convention. Raises
    UnstableCrystalError on a negative eigenvalue beyond tolerance.
    """
    alphas = _alphas(trap)
    ell = length_scale(constants, trap)
    u = (crystal.positions / ell).reshape(-1)
    lam, vecs = np.linalg.eigh(hessian(u, alphas))

    neg_tol = 1e-9 * max(lam[-1], 1.0)
    if lam[0] < -neg_tol:
        raise UnstableCrystalError(
            f"negative mode eigenvalue {lam[0]:.3e} (dimensionless, tolerance "
            f"{-neg_tol:.1e}): configuration is not a stable minimum")
    lam = np.clip(lam, 0.0, None)
    freqs = np.sqrt(lam)

    # Re-span degenerate clusters deterministically.
    start = 0
    while start < freqs.size:
        stop = start + 1
        while stop < freqs.size and freqs[stop] - freqs[stop - 1] <= degeneracy_rtol * freqs[stop]:
            stop += 1
        if stop - start > 1:
            vecs[:, start:stop] = _canonical_degenerate_basis(vecs[:, start:stop])
        start = stop

    vecs = _fix_signs(vecs)
    ortho_err = np.max(np.abs(vecs.T @ vecs - np.eye(vecs.shape[0])))
    if ortho_err > 1e-10:
        raise RuntimeError(f"eigenvector orthonormality violated: {ortho_err:.3e}")

    return NormalModes(
        n_ions=crystal.n_ions,
        frequencies=freqs * trap.omega_x,
        eigenvectors=vecs,
    )


def project_modes(modes: NormalModes, direction: np.ndarray,
                  participation_cutoff: float = 1e-9) -> ModeProjection:
    """Per-ion amplitudes b_{i,k} of every mode along a unit direction."""
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (3,) or abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit 3-vector")
    n = modes.n_ions
    # eigenvectors reshaped to (ion, axis, mode); contract the axis index.
    by_ion = modes.eigenvectors.reshape(n, 3, 3 * n)
    amplitudes = np.einsum("iak,a->ki", by_ion, direction)
    participating = np.max(np.abs(amplitudes), axis=1) >= participation_cutoff
    return ModeProjection(
        frequencies=modes.frequencies.copy(),
        amplitudes=amplitudes,
        participating=participating,
    )
