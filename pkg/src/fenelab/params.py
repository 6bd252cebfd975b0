"""Physical parameter bundle for the turbulent FENE model."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidArgument


@dataclass(frozen=True)
class PhysParams:
    """Dimensionless model parameters.

    Parameters
    ----------
    kappa : float
        FENE spring constant.
    beta : float
        Polymer relaxation time.
    lam : float
        Turbulence intensity (``lambda``). Zero switches the flow off.
    tau : float
        Dominant time scale of the small-scale flow.
    """

    kappa: float
    beta: float
    lam: float
    tau: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise InvalidArgument(f"kappa must be positive, got {self.kappa}")
        if not self.beta > 0:
            raise InvalidArgument(f"beta must be positive, got {self.beta}")
        if not self.tau > 0:
            raise InvalidArgument(f"tau must be positive, got {self.tau}")
        if not self.lam >= 0:
            raise InvalidArgument(f"lam must be non-negative, got {self.lam}")

    @classmethod
    def from_regime(cls, kappa, zeta, lam, tau):
        """Parameters in the singular-limit regime ``beta = zeta * tau``."""
        return cls(kappa=kappa, beta=zeta * tau, lam=lam, tau=tau)

    @property
    def zeta(self) -> float:
        return self.beta / self.tau

    @property
    def a_tau(self) -> float:
        """Amplitude prefactor of the mode coefficients."""
        return math.sqrt(self.lam / self.tau * 8.0 / (math.pi * math.log(2.0)))

    @property
    def k_T(self) -> float:
        return self.lam / self.tau

    @property
    def gamma(self) -> float:
        """Exponent parameter of the corrected weight, ``k_T * beta / 2``."""
        return self.k_T * self.beta / 2.0

    @property
    def alpha(self) -> float:
        """Mobility parameter of the limit operator, ``zeta * lam / 2``."""
        return self.zeta * self.lam / 2.0
