"""Interior and boundary sub-regions and their positive invariance.

``a_star`` marks the last age at which the infectivity (or virion
production) kernel is active. States carrying no infected mass below
``a_star`` (and no virions, for HIV) generate no new infections, so they
simply transport and decay; all other states keep a positive mass there.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, PreconditionError
from .grid import AgeGrid, AgeProfile
from .operators import SurvivalFactors
from .spectral import SpectralData, functional_series
from .trajectory import Trajectory

INFINITE_AGE = math.inf
TOL_MASS_REL = 1e-12
DECAY_SLACK = 1e-9


class Region(enum.Enum):
    INTERIOR = "Interior"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class RegionVerdict:
    region: Region
    mass_below_astar: float
    head: float | None = None

    @property
    def level(self) -> float:
        return self.mass_below_astar + (self.head or 0.0)


def a_star(kernel: AgeProfile) -> float:
    """Last node with a positive kernel sample, ``inf`` if the last sample is positive.

    A kernel still active at ``a_max`` may extend beyond the grid, so no
    finite value can be certified and the infinity marker is returned.
    """
    k = kernel.scalar
    if np.any(k < 0):
        raise PreconditionError("kernel must be nonnegative")
    pos = np.flatnonzero(k > 0)
    if pos.size == 0:
        raise PreconditionError("a_star is undefined for an identically zero kernel")
    if pos[-1] == kernel.grid.n_cells:
        return INFINITE_AGE
    return float(kernel.grid.nodes[pos[-1]])


def _weights_below(grid: AgeGrid, astar: float) -> np.ndarray:
    """Trapezoid weights of ``[0, a_star]`` (``a_star`` snapped to the nearest node)."""
    if astar == INFINITE_AGE or astar >= grid.a_max:
        return grid.weights
    m = int(round(astar / grid.da))
    w = np.zeros(grid.n_nodes)
    if m == 0:
        return w
    w[: m + 1] = grid.da
    w[0] = w[m] = 0.5 * grid.da
    return w


def classify(state, astar: float, tol_mass: float = 0.0) -> RegionVerdict:
    """Interior iff ``head + mass of i on [0, a_star]`` exceeds ``tol_mass``.

    ``head`` is ``V`` for HIV states and absent for SIR states.
    """
    i = state.i
    if not i.is_nonnegative():
        raise PreconditionError("classify needs a nonnegative state")
    mass = float(_weights_below(i.grid, astar) @ i.scalar)
    head = getattr(state, "V", None)
    level = mass + (head or 0.0)
    region = Region.BOUNDARY if level <= tol_mass else Region.INTERIOR
    return RegionVerdict(region, mass, head)


def boundary_explicit(i0: AgeProfile, surv_source: SurvivalFactors, t: float) -> AgeProfile:
    """Shifted, decayed profile with nothing below the characteristic ``a = t``."""
    g = i0.grid
    if surv_source.grid != g:
        raise InvalidArgument("survival factors and profile use different grids")
    k = g.steps_for(t) if t > 0 else 0
    out = np.zeros_like(i0.values)
    if k == 0:
        return i0
    if k <= g.n_cells:
        out[k:] = surv_source.along(k)[:, None] * i0.values[: g.n_nodes - k]
    return AgeProfile(g, out)


@dataclass
class InvarianceReport:
    """Region history of a trajectory.

    ``flip_step`` is the first step whose region differs from step 0
    (``None`` when the region is constant) and ``mass_margin`` the level
    minus ``tol_mass`` there. The boundary-only and interior-only fields stay
    ``None`` when they do not apply or their inputs were not supplied.
    """

    region: Region
    constant: bool
    flip_step: int | None
    mass_margin: float | None
    tol_mass: float
    levels: np.ndarray
    min_level: float
    max_inflow: float | None = None
    decay_ok: bool | None = None
    decay_margin: float | None = None
    explicit_error: float | None = None
    certificate: np.ndarray | None = None
    certified: bool | None = None
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.constant and all(self.checks.values())


def invariance_check(
    traj: Trajectory,
    astar: float,
    tol_mass: float | None = None,
    kernel: AgeProfile | None = None,
    delta: float | None = None,
    surv: SurvivalFactors | None = None,
    spectral: SpectralData | None = None,
    explicit_tol: float = 1e-10,
    cert_slack: float = 0.1,
) -> InvarianceReport:
    """Classify every step and check the invariance consequences.

    Boundary runs: ``int kernel * i`` must stay at rounding level, the total
    mass must decay at least like ``exp(-delta t)``, and with ``surv`` the
    profile must match :func:`boundary_explicit`. Interior runs with
    ``spectral`` data from the lower bounding system additionally report
    ``F(t) / (exp(lam t) F(0))`` for the adjoint functional ``F``; values
    above ``1 - cert_slack`` certify persistence.
    """
    g = traj.grid
    w = _weights_below(g, astar)
    below = traj.profiles[:, :, 0] @ w
    V = traj.heads.get("V")
    levels = below + (np.asarray(V) if V is not None else 0.0)
    total0 = float(traj.masses()[0]) + (float(V[0]) if V is not None else 0.0)
    if tol_mass is None:
        tol_mass = TOL_MASS_REL * total0
    interior = levels > tol_mass
    region = Region.INTERIOR if interior[0] else Region.BOUNDARY
    flips = np.flatnonzero(interior != interior[0])
    flip = int(flips[0]) if flips.size else None
    rep = InvarianceReport(
        region=region,
        constant=flip is None,
        flip_step=flip,
        mass_margin=float(levels[flip] - tol_mass) if flip is not None else None,
        tol_mass=float(tol_mass),
        levels=levels,
        min_level=float(np.min(levels)),
    )
    if region is Region.BOUNDARY:
        if kernel is not None:
            inflow = traj.profiles[:, :, 0] @ (g.weights * kernel.scalar)
            rep.max_inflow = float(np.max(np.abs(inflow)))
            scale = max(total0, 1.0) * max(float(np.max(kernel.scalar)), 1.0)
            rep.checks["inflow"] = rep.max_inflow <= 1e-12 * scale
        if delta is not None:
            mass = traj.masses()
            bound = np.exp(-delta * traj.times) * mass[0] * (1.0 + DECAY_SLACK)
            rep.decay_margin = float(np.min(bound - mass))
            rep.decay_ok = bool(np.all(mass <= bound))
            rep.checks["decay"] = rep.decay_ok
        if surv is not None:
            i0 = traj.profile(0)
            err = 0.0
            for k in range(traj.n_steps + 1):
                ex = boundary_explicit(i0, surv, float(traj.times[k] - traj.times[0]))
                err = max(err, float(np.max(np.abs(ex.values - traj.profiles[k]))))
            rep.explicit_error = err
            rep.checks["explicit"] = err <= explicit_tol
    elif spectral is not None:
        f = functional_series(traj, spectral)
        ref = np.exp(spectral.lam * (traj.times - traj.times[0])) * f[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            rep.certificate = np.where(ref > 0, f / ref, np.inf)
        rep.certified = bool(f[0] > 0 and np.all(rep.certificate >= 1.0 - cert_slack))
        rep.checks["certificate"] = rep.certified
    return rep
