"""Characteristic roots and adjoint eigenprofiles of the frozen linear systems.

For a kernel ``b`` (``beta`` or ``p``) and removal rate ``m`` (``nu_I`` or
``delta``), the frozen SIR system grows like ``exp(lambda t)`` where

    eta S int_0^inf exp(-int_0^theta (m + lambda)) b(theta) dtheta = 1,

and for the HIV system the prefactor ``eta S`` becomes ``k T / (lambda + c)``.
Age integrals are taken cell by cell with the removal rate replaced by its
cell trapezoid average (the same average the survival factors use) and ``b``
linear between nodes; the exponential is then integrated exactly, so
constant coefficients give the exact root. Beyond ``a_max`` both rates are
held at their last samples, which closes the tail in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NoRootError, PreconditionError
from .grid import AgeGrid, AgeProfile, integrate
from .operators import cell_integrals
from .trajectory import Trajectory

ROOT_TOL = 1e-12
FUNCTIONAL_FLOOR = 1e-300


@dataclass(frozen=True)
class SpectralData:
    """Root ``lam``, adjoint profile ``Gamma_I`` (``Gamma_I(0) = 1``) and head coefficient.

    ``head_coeff`` is ``k T / (lam + c)`` for the HIV functional and 0 for SIR.
    """

    lam: float
    gamma_profile: AgeProfile
    head_coeff: float = 0.0

    def functional(self, V: float, i: AgeProfile) -> float:
        return gamma_functional_hiv(self, V, i)


def _phi(z):
    """``int_0^1 exp(-z u) du`` and ``int_0^1 u exp(-z u) du``, elementwise."""
    z = np.asarray(z, float)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 0.0, z)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        e = np.exp(-zs)
        f1 = np.where(small, 0.0, -np.expm1(-zs) / zs)
        f2 = np.where(small, 0.0, (1.0 - e * (1.0 + zs)) / (zs * zs))
    if np.any(small):
        zz = z[small]
        s1 = np.zeros_like(zz)
        s2 = np.zeros_like(zz)
        term = np.ones_like(zz)
        for k in range(8):
            s1 += term / (k + 1)
            s2 += term / (k + 2)
            term = term * (-zz) / (k + 1)
        f1 = np.array(f1)
        f2 = np.array(f2)
        f1[small] = s1
        f2[small] = s2
    return f1, f2


class _Kernel:
    """Cell data for ``int exp(-int (m + lam)) b``."""

    def __init__(self, grid: AgeGrid, kernel: AgeProfile, rate: AgeProfile):
        if kernel.grid != grid or rate.grid != grid:
            raise InvalidArgument("kernel and rate must be sampled on the grid")
        self.grid = grid
        self.b = kernel.scalar
        self.m = rate.scalar
        cell = cell_integrals(grid, self.m)
        self.mbar = cell / grid.da
        self.cum = np.concatenate(([0.0], np.cumsum(cell)))

    def cells(self, lam):
        """Per-cell integrals from the left node, and the cell decay factors."""
        h = self.grid.da
        z = (self.mbar + lam) * h
        f1, f2 = _phi(z)
        b0, b1 = self.b[:-1], self.b[1:]
        with np.errstate(over="ignore"):
            decay = np.exp(-z)
        return h * (b0 * f1 + (b1 - b0) * f2), decay

    def tail_rate(self, lam):
        return self.m[-1] + lam

    def tail(self, lam):
        """``int_{a_max}^inf exp(-(m_N + lam)(theta - a_max)) b_N dtheta``."""
        if self.b[-1] == 0.0:
            return 0.0
        r = self.tail_rate(lam)
        return self.b[-1] / r if r > 0 else math.inf

    def total(self, lam) -> float:
        """Integral over ``[0, inf)``."""
        cells, _ = self.cells(lam)
        a = self.grid.nodes
        with np.errstate(over="ignore", invalid="ignore"):
            left = np.exp(-(self.cum[:-1] + lam * a[:-1]))
            body = float(np.sum(left * cells))
            t = self.tail(lam)
            if t:
                body += math.exp(min(700.0, -(self.cum[-1] + lam * a[-1]))) * t
        return body

    def adjoint(self, lam, prefactor) -> np.ndarray:
        """Backward sweep of ``G' = (m + lam) G - prefactor b`` from the closed-form tail."""
        cells, decay = self.cells(lam)
        G = np.empty(self.grid.n_nodes)
        G[-1] = prefactor * self.tail(lam)
        for j in range(self.grid.n_cells, 0, -1):
            G[j - 1] = decay[j - 1] * G[j] + prefactor * cells[j - 1]
        return G


def _bisect(fn, lo, hi, floor=None, what="characteristic equation"):
    """Root of the decreasing function ``fn - 1`` with bracket search.

    ``lo`` moves down (never below ``floor``) until ``fn(lo) > 1``; ``hi``
    doubles its distance from ``lo`` until ``fn(hi) < 1``.
    """
    g_lo = fn(lo)
    step = 1.0
    while not g_lo > 1.0:
        if floor is not None and lo <= floor + 1e-12:
            raise NoRootError(f"{what}: value {g_lo:.6g} <= 1 at lower limit {lo}", {"lo": lo, "g_lo": g_lo})
        cand = lo - step
        lo = cand if floor is None else max(cand, floor + 1e-9)
        step *= 2
        g_lo = fn(lo)
        if step > 1e6:
            raise NoRootError(f"{what}: no lower bracket found", {"lo": lo, "g_lo": g_lo})
    width = 1.0
    hi = max(hi, lo + width)
    g_hi = fn(hi)
    while not g_hi < 1.0:
        width *= 2
        hi = lo + width
        g_hi = fn(hi)
        if width > 1e8:
            raise NoRootError(f"{what}: no upper bracket found", {"hi": hi, "g_hi": g_hi, "lo": lo, "g_lo": g_lo})
    while hi - lo > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if fn(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _sir_kernel(p, g):
    if p.grid != g:
        raise InvalidArgument("parameters sampled on a different grid")
    if not np.any(p.beta.scalar > 0):
        raise NoRootError("beta vanishes on the grid; no characteristic root")
    return _Kernel(g, p.beta, p.nu_I)


def sir_characteristic(lam: float, S_frozen: float, p, g: AgeGrid) -> float:
    """Left side of the SIR characteristic equation at ``lam``."""
    return p.eta * S_frozen * _sir_kernel(p, g).total(lam)


def solve_lambda_sir(S_frozen: float, p, g: AgeGrid) -> float:
    if not S_frozen > 0:
        raise PreconditionError("S_frozen must be positive")
    ker = _sir_kernel(p, g)
    fn = lambda lam: p.eta * S_frozen * ker.total(lam)
    floor = -p.nu_I.scalar[-1] if ker.b[-1] > 0 else None
    lo = -p.delta_floor + 1e-6
    if floor is not None:
        lo = max(lo, floor + 1e-6)
    return _bisect(fn, lo, lo + 1.0, floor=floor)


def _hiv_kernel(p, g):
    if p.grid != g:
        raise InvalidArgument("parameters sampled on a different grid")
    if not np.any(p.p_prod.scalar > 0):
        raise NoRootError("p vanishes on the grid; no characteristic root")
    return _Kernel(g, p.p_prod, p.delta_a)


def hiv_characteristic(lam: float, T_frozen: float, p, g: AgeGrid) -> float:
    return p.k * T_frozen / (lam + p.c) * _hiv_kernel(p, g).total(lam)


def solve_lambda_hiv(T_frozen: float, p, g: AgeGrid) -> float:
    if not T_frozen > 0:
        raise PreconditionError("T_frozen must be positive")
    ker = _hiv_kernel(p, g)

    def fn(lam):
        return p.k * T_frozen / (lam + p.c) * ker.total(lam)

    floor = -p.c
    if ker.b[-1] > 0:
        floor = max(floor, -p.delta_a.scalar[-1])
    lo = max(-p.c, -p.delta0) + 1e-6
    return _bisect(fn, lo, lo + 1.0, floor=floor)


def gamma_profile_sir(lam: float, S_frozen: float, p, g: AgeGrid) -> AgeProfile:
    """``Gamma_I(a) = eta S int_a^inf exp(-int_a^theta (nu_I + lam)) beta``."""
    ker = _sir_kernel(p, g)
    return AgeProfile(g, ker.adjoint(lam, p.eta * S_frozen))


def gamma_profile_hiv(lam: float, T_frozen: float, p, g: AgeGrid) -> AgeProfile:
    ker = _hiv_kernel(p, g)
    return AgeProfile(g, ker.adjoint(lam, p.k * T_frozen / (lam + p.c)))


def spectral_sir(S_frozen: float, p, g: AgeGrid) -> SpectralData:
    lam = solve_lambda_sir(S_frozen, p, g)
    return SpectralData(lam, gamma_profile_sir(lam, S_frozen, p, g), 0.0)


def spectral_hiv(T_frozen: float, p, g: AgeGrid) -> SpectralData:
    lam = solve_lambda_hiv(T_frozen, p, g)
    return SpectralData(lam, gamma_profile_hiv(lam, T_frozen, p, g), p.k * T_frozen / (lam + p.c))


def gamma_functional_hiv(sd: SpectralData, V: float, i: AgeProfile) -> float:
    """``head_coeff * V + int Gamma_I(a) i(a) da`` (``V`` is ignored for SIR data)."""
    if i.grid != sd.gamma_profile.grid:
        raise InvalidArgument("profile and adjoint live on different grids")
    return sd.head_coeff * V + float(integrate(i, sd.gamma_profile)[0])


def functional_series(traj: Trajectory, sd: SpectralData) -> np.ndarray:
    if traj.grid != sd.gamma_profile.grid:
        raise InvalidArgument("trajectory and adjoint live on different grids")
    vals = traj.profiles[:, :, 0] @ (traj.grid.weights * sd.gamma_profile.scalar)
    if sd.head_coeff and "V" in traj.heads:
        vals = vals + sd.head_coeff * np.asarray(traj.heads["V"])
    return vals


def conservation_residual(traj: Trajectory, sd: SpectralData, growth_normalized: bool = False) -> float:
    """``max_t |F(t) - exp(lam t) F(0)| / max(F(0), floor)`` for the adjoint functional ``F``.

    With ``growth_normalized`` the deviation at time ``t`` is divided by
    ``exp(lam t)`` as well, which keeps the measure comparable across
    horizons when ``lam > 0``.
    """
    f = functional_series(traj, sd)
    growth = np.exp(sd.lam * (traj.times - traj.times[0]))
    dev = np.abs(f - growth * f[0])
    if growth_normalized:
        dev = dev / growth
    scale = max(abs(f[0]), FUNCTIONAL_FLOOR * max(1.0, float(np.max(np.abs(f)))))
    return float(np.max(dev) / scale)
