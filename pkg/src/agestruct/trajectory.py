from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .grid import AgeGrid, AgeProfile

#: relative dropped-mass level above which a simulation warns
DROPPED_MASS_WARN = 1e-8


class TruncationWarning(UserWarning):
    """Mass left the truncated age domain ``[0, a_max]``."""


@dataclass
class Trajectory:
    """Time series of model states on a fixed grid.

    ``profiles[k]`` is the age profile at ``times[k]`` with shape
    ``(n_nodes, dim)``. ``heads`` holds scalar compartments (``S``, ``T``,
    ``V``) and ``diagnostics`` any derived per-step scalars.
    """

    grid: AgeGrid
    times: np.ndarray
    profiles: np.ndarray
    heads: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def profile(self, k: int) -> AgeProfile:
        return AgeProfile(self.grid, self.profiles[k])

    @property
    def dropped_mass(self) -> float:
        d = self.diagnostics.get("dropped_mass")
        return float(np.sum(d)) if d is not None else 0.0

    def masses(self) -> np.ndarray:
        """Trapezoid total of the profile at every step (summed over components)."""
        return np.einsum("j,kjd->k", self.grid.weights, self.profiles)

    def check_compatible(self, other: "Trajectory"):
        if other.grid != self.grid or other.profiles.shape != self.profiles.shape:
            raise InvalidArgument("trajectories differ in grid or shape")


def warn_if_truncated(traj: Trajectory, initial_mass: float):
    dropped = traj.dropped_mass
    if dropped > DROPPED_MASS_WARN * max(initial_mass, np.finfo(float).tiny):
        warnings.warn(
            f"{dropped:.3g} of mass left [0, {traj.grid.a_max}] "
            f"(initial mass {initial_mass:.3g}); consider a larger a_max",
            TruncationWarning,
            stacklevel=3,
        )
