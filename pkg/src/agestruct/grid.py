"""Uniform age mesh, trapezoid quadrature and the componentwise order on profiles.

The time step is always equal to the age step, so a profile sampled on an
:class:`AgeGrid` is carried along characteristics by a plain index shift.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgument

#: relative factor of the default order tolerance
ORDER_RTOL = 1e-9


@dataclass(frozen=True)
class AgeGrid:
    """Uniform mesh ``a_j = j * da`` on ``[0, a_max]`` with ``n_cells`` cells."""

    a_max: float
    n_cells: int

    def __post_init__(self):
        if not np.isfinite(self.a_max) or self.a_max <= 0:
            raise InvalidArgument(f"a_max must be positive, got {self.a_max}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise InvalidArgument(f"n_cells must be a positive integer, got {self.n_cells}")
        object.__setattr__(self, "a_max", float(self.a_max))
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def da(self) -> float:
        return self.a_max / self.n_cells

    @property
    def dt(self) -> float:
        """Time step; locked to the age step."""
        return self.da

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        a = np.arange(self.n_nodes) * self.da
        a.flags.writeable = False
        return a

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.n_nodes, self.da)
        w[0] = w[-1] = 0.5 * self.da
        w.flags.writeable = False
        return w

    def steps_for(self, horizon: float) -> int:
        """Number of steps covering ``horizon``; it must be a step multiple."""
        k = horizon / self.dt
        kr = int(round(k))
        if horizon < 0 or abs(k - kr) > 1e-9 * max(1.0, k):
            raise InvalidArgument(
                f"horizon {horizon} is not a multiple of the step {self.dt}; "
                f"nearest multiple is {max(kr, 0) * self.dt!r}"
            )
        return kr

    def refine(self, factor: int = 2) -> "AgeGrid":
        return AgeGrid(self.a_max, self.n_cells * factor)


def make_grid(a_max: float, n_cells: int) -> AgeGrid:
    return AgeGrid(a_max, n_cells)


@dataclass(frozen=True, eq=False)
class AgeProfile:
    """Vector-valued density sampled at the grid nodes.

    ``values`` has shape ``(n_nodes, dim)``; a 1-D array is read as ``dim=1``.
    """

    grid: AgeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.n_nodes:
            raise InvalidArgument(
                f"profile needs {self.grid.n_nodes} node rows, got shape {np.shape(self.values)}"
            )
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: AgeGrid, dim: int = 1) -> "AgeProfile":
        return cls(grid, np.zeros((grid.n_nodes, dim)))

    @classmethod
    def constant(cls, grid: AgeGrid, value, dim: int = 1) -> "AgeProfile":
        return cls(grid, np.broadcast_to(np.asarray(value, float), (grid.n_nodes, dim)))

    @classmethod
    def from_function(cls, grid: AgeGrid, f, dim: int = 1) -> "AgeProfile":
        """Sample ``f`` (vectorized over ages) at the nodes."""
        v = np.asarray(f(grid.nodes), dtype=float)
        if v.ndim == 0:
            v = np.full(grid.n_nodes, float(v))
        if v.ndim == 1 and dim > 1:
            v = np.repeat(v[:, None], dim, axis=1)
        return cls(grid, v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def scalar(self) -> np.ndarray:
        """Node values of a ``dim == 1`` profile as a flat array."""
        if self.dim != 1:
            raise InvalidArgument("scalar view requires dim == 1")
        return self.values[:, 0]

    def is_nonnegative(self, tol: float | None = None) -> bool:
        if tol is None:
            tol = default_tol(self.values)
        return bool(np.all(self.values >= -tol))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def _check(self, other: "AgeProfile"):
        if not isinstance(other, AgeProfile):
            raise InvalidArgument(f"expected AgeProfile, got {type(other).__name__}")
        if other.grid != self.grid or other.dim != self.dim:
            raise InvalidArgument("profiles live on different grids or dimensions")

    def __add__(self, other):
        self._check(other)
        return AgeProfile(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return AgeProfile(self.grid, self.values - other.values)

    def __mul__(self, c):
        return AgeProfile(self.grid, self.values * float(c))

    __rmul__ = __mul__


def default_tol(*operands) -> float:
    """``1e-9 * (1 + max |x|)`` over all operands."""
    m = 0.0
    for x in operands:
        x = x.values if isinstance(x, AgeProfile) else np.asarray(x, float)
        if x.size:
            m = max(m, float(np.max(np.abs(x))))
    return ORDER_RTOL * (1.0 + m)


def _kernel_array(kernel, grid: AgeGrid, dim: int) -> np.ndarray:
    """Normalize a kernel to shape ``(n_nodes, dim, dim)``."""
    if isinstance(kernel, AgeProfile):
        if kernel.grid != grid:
            raise InvalidArgument("kernel sampled on a different grid")
        if kernel.dim != 1:
            raise InvalidArgument("profile kernels must be scalar; pass an array for matrices")
        kernel = kernel.scalar
    k = np.asarray(kernel, dtype=float)
    if k.shape[0] != grid.n_nodes:
        raise InvalidArgument(f"kernel has {k.shape[0]} rows, grid has {grid.n_nodes} nodes")
    if k.ndim == 1:
        return k[:, None, None] * np.eye(dim)
    if k.ndim == 2 and k.shape[1] == dim:
        return k[:, :, None] * np.eye(dim)  # per-component diagonal
    if k.ndim == 3 and k.shape[1:] == (dim, dim):
        return k
    raise InvalidArgument(f"kernel shape {k.shape} incompatible with dim {dim}")


def integrate(p: AgeProfile, kernel=None) -> np.ndarray:
    """Trapezoid sum ``sum_j w_j K_j p_j`` returning a ``dim``-vector.

    ``kernel`` may be None, a scalar profile, an ``(n_nodes,)`` array, an
    ``(n_nodes, dim)`` array of diagonals or an ``(n_nodes, dim, dim)`` array.
    """
    w = p.grid.weights
    if kernel is None:
        return w @ p.values
    k = _kernel_array(kernel, p.grid, p.dim)
    return np.einsum("j,jkl,jl->k", w, k, p.values)


def le(p: AgeProfile, q: AgeProfile, tol: float | None = None) -> bool:
    """True iff ``p <= q + tol`` at every node and component."""
    if p.grid != q.grid or p.dim != q.dim:
        raise InvalidArgument("order comparison across different grids or dimensions")
    if tol is None:
        tol = default_tol(p, q)
    return bool(np.all(p.values <= q.values + tol))
