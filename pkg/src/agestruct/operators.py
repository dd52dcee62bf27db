"""Age transport on characteristics and the explicit resolvent of the age operator.

With ``dt == da`` one time step moves every node one cell to the right, so
the transport semigroup is a shift multiplied by per-cell survival factors
and the boundary node receives the inflow. Nothing here diffuses mass.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgument, OutOfResolventSet
from .grid import AgeGrid, AgeProfile


@dataclass(frozen=True, eq=False)
class SurvivalFactors:
    """Per-cell survival ``s_j = exp(-trapezoid of nu over [a_{j-1}, a_j])``.

    ``factors[j-1]`` belongs to the cell ending at node ``j``.
    """

    grid: AgeGrid
    factors: np.ndarray

    def __post_init__(self):
        f = np.array(self.factors, dtype=float)
        if f.shape != (self.grid.n_cells,):
            raise InvalidArgument(f"need {self.grid.n_cells} cell factors, got shape {f.shape}")
        f.flags.writeable = False
        object.__setattr__(self, "factors", f)

    @classmethod
    def from_rate(cls, grid: AgeGrid, rate) -> "SurvivalFactors":
        """Build factors from a death rate sampled at the nodes."""
        nu = _node_values(grid, rate)
        return cls(grid, np.exp(-cell_integrals(grid, nu)))

    @cached_property
    def log_cumulative(self) -> np.ndarray:
        """``-log`` of survival from age 0 to each node (length ``n_nodes``)."""
        c = np.concatenate(([0.0], np.cumsum(-np.log(self.factors))))
        c.flags.writeable = False
        return c

    def along(self, shift: int) -> np.ndarray:
        """Survival over ``shift`` cells ending at nodes ``shift..n_cells``."""
        c = self.log_cumulative
        return np.exp(-(c[shift:] - c[: len(c) - shift]))


def _node_values(grid: AgeGrid, f) -> np.ndarray:
    if isinstance(f, AgeProfile):
        if f.grid != grid:
            raise InvalidArgument("rate sampled on a different grid")
        return f.scalar
    v = np.asarray(f, dtype=float)
    if v.ndim == 0:
        return np.full(grid.n_nodes, float(v))
    if v.shape != (grid.n_nodes,):
        raise InvalidArgument(f"expected {grid.n_nodes} node samples, got shape {v.shape}")
    return v


def cell_integrals(grid: AgeGrid, nu: np.ndarray) -> np.ndarray:
    """Trapezoid of node samples over each cell."""
    return 0.5 * grid.da * (nu[:-1] + nu[1:])


def resolvent_apply(lam: float, gamma: float, head, tail: AgeProfile) -> AgeProfile:
    """Apply ``(lam I - (A - gamma B))^{-1}`` to ``(head, tail)``.

    Returns ``phi(a) = exp(-(lam+gamma) a) head + int_0^a exp(-(lam+gamma)(a-l)) tail(l) dl``
    with the convolution done by the composite trapezoid rule. The recursion
    over cells is exact because the kernel factorizes.
    """
    kappa = lam + gamma
    if not kappa > 0:
        raise OutOfResolventSet(f"lambda={lam} must exceed -gamma={-gamma}")
    grid = tail.grid
    psi = tail.values
    head = np.broadcast_to(np.asarray(head, float), (tail.dim,))
    h = grid.da
    decay = np.exp(-kappa * h)
    conv = np.zeros_like(psi)
    for j in range(1, grid.n_nodes):
        conv[j] = decay * conv[j - 1] + 0.5 * h * (decay * psi[j - 1] + psi[j])
    phi = np.exp(-kappa * grid.nodes)[:, None] * head[None, :] + conv
    return AgeProfile(grid, phi)


def transport_step(p: AgeProfile, surv: SurvivalFactors, inflow) -> AgeProfile:
    """One characteristic step: ``out_0 = inflow``, ``out_j = s_j p_{j-1}``.

    The content of the last node leaves the domain; see :func:`exit_mass`.
    """
    if surv.grid != p.grid:
        raise InvalidArgument("survival factors and profile use different grids")
    out = np.empty_like(p.values)
    out[1:] = surv.factors[:, None] * p.values[:-1]
    out[0] = np.broadcast_to(np.asarray(inflow, float), (p.dim,))
    return AgeProfile(p.grid, out)


def exit_mass(p: AgeProfile) -> float:
    """Mass carried past ``a_max`` by the next step (density at ``a_max`` times ``da``)."""
    return float(p.grid.da * np.sum(p.values[-1]))
