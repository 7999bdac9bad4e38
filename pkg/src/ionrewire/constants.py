"""Physical constants entering the trap potential and spin-spin couplings."""

from dataclasses import dataclass

import scipy.constants as const


@dataclass(frozen=True)
class PhysicalConstants:
    """Charge, permittivity, hbar and ion mass, all in SI units.

    Defaults describe a singly charged ion of mass 171 u (Yb-171).
    """

    elementary_charge: float = const.e
    vacuum_permittivity: float = const.epsilon_0
    reduced_planck: float = const.hbar
    ion_mass: float = 171.0 * const.atomic_mass

    def __post_init__(self):
        for name in ("elementary_charge", "vacuum_permittivity",
                     "reduced_planck", "ion_mass"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")

    @classmethod
    def for_mass_u(cls, mass_u: float) -> "PhysicalConstants":
        """Constants for a singly charged ion of the given mass in u."""
        return cls(ion_mass=mass_u * const.atomic_mass)
