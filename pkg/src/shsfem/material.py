"""Isotropic plane elasticity in Voigt form (s11, s22, s12).

Strains use engineering shear (e11, e22, 2*e12) so that the tensor contraction
s:e is the plain dot product of Voigt vectors. All matrices are for unit
Young's modulus; the random modulus multiplies them from outside.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MODES = ("plane_stress", "plane_strain")


def _check(mode: str, nu: float) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if not 0.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in (0, 0.5), got {nu}")


def lame(mode: str, E: float, nu: float) -> tuple[float, float]:
    """Lame parameters (mu, lambda) for the given mode."""
    _check(mode, nu)
    if E <= 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    mu = E / (2.0 * (1.0 + nu))
    if mode == "plane_strain":
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    else:
        lam = E * nu / ((1.0 + nu) * (1.0 - nu))
    return mu, lam


@dataclass(frozen=True)
class MaterialLaw:
    mode: str
    nu: float

    def __post_init__(self):
        _check(self.mode, self.nu)

    @cached_property
    def mu_hat(self) -> float:
        return lame(self.mode, 1.0, self.nu)[0]

    @cached_property
    def lam_hat(self) -> float:
        return lame(self.mode, 1.0, self.nu)[1]

    @cached_property
    def C(self) -> np.ndarray:
        mu, lam = self.mu_hat, self.lam_hat
        return np.array([[2 * mu + lam, lam, 0.0], [lam, 2 * mu + lam, 0.0], [0.0, 0.0, mu]])

    @cached_property
    def C_inv(self) -> np.ndarray:
        mu, lam = self.mu_hat, self.lam_hat
        # closed form of the 2x2 normal block inverse; avoids cancellation near nu = 0.5
        det = 4.0 * mu * (mu + lam)
        return np.array(
            [[(2 * mu + lam) / det, -lam / det, 0.0], [-lam / det, (2 * mu + lam) / det, 0.0], [0.0, 0.0, 1.0 / mu]]
        )


def stress_from_strain(law: MaterialLaw, E, strain) -> np.ndarray:
    """E * C * strain; broadcasts over leading axes of ``strain``."""
    return np.asarray(E)[..., None] * (np.asarray(strain, dtype=float) @ law.C.T)


def compliance_apply(law: MaterialLaw, stress) -> np.ndarray:
    return np.asarray(stress, dtype=float) @ law.C_inv.T
