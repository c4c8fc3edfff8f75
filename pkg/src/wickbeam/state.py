"""The (position, velocity) pair shared by the dynamics and sampling code."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpectralField, sobolev_norm

__all__ = ["PairState"]


@dataclass
class PairState:
    """A pair ``(u, du/dt)`` of fields on one grid at time ``t``."""

    position: SpectralField
    velocity: SpectralField
    t: float = 0.0
    blown_up: bool = False

    def __post_init__(self):
        if self.position.grid != self.velocity.grid:
            raise ValueError("position and velocity must share a grid")
        if self.position.coeffs.shape != self.velocity.coeffs.shape:
            raise ValueError("position and velocity batch shapes differ")

    @property
    def grid(self):
        return self.position.grid

    def copy(self) -> "PairState":
        return PairState(self.position.copy(), self.velocity.copy(), self.t, self.blown_up)

    def norm(self, s: float):
        """``(||u||_{H^s}^2 + ||u_t||_{H^{s-2}}^2)^(1/2)``."""
        a = np.asarray(sobolev_norm(self.position, s))
        b = np.asarray(sobolev_norm(self.velocity, s - 2.0))
        out = np.sqrt(a * a + b * b)
        return float(out) if out.ndim == 0 else out

    def is_finite(self) -> bool:
        return self.position.is_finite() and self.velocity.is_finite()
