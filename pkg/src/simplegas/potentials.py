"""Radial pair potentials and the zero-energy scattering length."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import NoDecay
from .radial_field import RadialFn, RadialGrid


class Potential:
    """Base radial potential v(r) >= 0.

    Subclasses provide ``__call__`` (real space), ``fourier`` (3D transform)
    and ``sine_kernel``: J(k, q) = int_0^inf v(r) sin(kr) sin(qr) dr, which is
    the kernel of the k-space convolution used by the continuum solvers.
    """

    spec: str = ""

    def __post_init__(self):
        self._a_cache = None

    def __call__(self, r):
        raise NotImplementedError

    def fourier(self, k):
        raise NotImplementedError

    def sine_kernel(self, k, q):
        raise NotImplementedError

    @property
    def integral(self) -> float:
        return float(self.fourier(np.array([0.0]))[0])

    @property
    def sup(self) -> float:
        return float(self(np.array([0.0]))[0])

    @property
    def is_zero(self) -> bool:
        return self.sup == 0.0 and self.integral == 0.0

    def scattering_length(self, r_max: float | None = None) -> float:
        if self._a_cache is None or r_max is not None:
            a = scattering_length(self, r_max=r_max)
            if r_max is not None:
                return a
            self._a_cache = a
        return self._a_cache


@dataclass
class Exponential(Potential):
    lam: float = 16.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("strength must be nonnegative")
        super().__post_init__()
        self.spec = f"exp:{self.lam:.17g}"

    def __call__(self, r):
        return self.lam * np.exp(-np.abs(np.asarray(r, dtype=float)))

    def fourier(self, k):
        k = np.asarray(k, dtype=float)
        return 8.0 * np.pi * self.lam / (1.0 + k * k) ** 2

    def sine_kernel(self, k, q):
        k = np.asarray(k, dtype=float)[:, None]
        q = np.asarray(q, dtype=float)[None, :]
        return 2.0 * self.lam * k * q / ((1.0 + (k - q) ** 2) * (1.0 + (k + q) ** 2))

    @property
    def default_range(self) -> float:
        return 64.0


@dataclass
class Gaussian(Potential):
    """v(r) = lam exp(-r^2 / sigma^2)."""

    lam: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.lam < 0 or self.sigma <= 0:
            raise ValueError("need lam >= 0 and sigma > 0")
        super().__post_init__()
        self.spec = f"gauss:{self.lam:.17g}:{self.sigma:.17g}"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.lam * np.exp(-(r / self.sigma) ** 2)

    def fourier(self, k):
        k = np.asarray(k, dtype=float)
        s = self.sigma
        return self.lam * np.pi**1.5 * s**3 * np.exp(-(s * k) ** 2 / 4.0)

    def sine_kernel(self, k, q):
        k = np.asarray(k, dtype=float)[:, None]
        q = np.asarray(q, dtype=float)[None, :]
        s = self.sigma
        return (self.lam * s * math.sqrt(math.pi) / 4.0
                * np.exp(-(s * (k - q)) ** 2 / 4.0) * (-np.expm1(-s * s * k * q)))

    @property
    def default_range(self) -> float:
        return max(64.0, 16.0 * self.sigma)


@dataclass
class TableRadial(Potential):
    """Potential given by samples on a radial grid (zero beyond r_max)."""

    table: RadialFn = None
    source: str = "table"

    def __post_init__(self):
        if self.table is None or self.table.dual:
            raise ValueError("TableRadial needs a real-space RadialFn")
        if np.any(self.table.values < 0):
            raise ValueError("potential must be nonnegative")
        super().__post_init__()
        self.spec = f"table:{self.source}"
        g = self.table.grid
        r = np.concatenate([[0.0], g.r, [g.r_max]])
        # even extension at 0, cut to zero at r_max
        v = self.table.values
        vals = np.concatenate([[v[0]], v, [0.0]])
        self._spline = CubicSpline(r, vals, bc_type=((1, 0.0), "not-a-knot"))

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = self._spline(np.minimum(r, self.table.grid.r_max))
        return np.where(r < self.table.grid.r_max, np.maximum(out, 0.0), 0.0)

    def fourier(self, k):
        g = self.table.grid
        k = np.atleast_1d(np.asarray(k, dtype=float))
        out = np.empty_like(k)
        small = k < 1e-12
        rv = g.r * self.table.values * g.dr
        out[small] = 4.0 * np.pi * np.sum(g.r * rv)
        kk = k[~small]
        out[~small] = 4.0 * np.pi / kk * (np.sin(np.outer(kk, g.r)) @ rv)
        return out

    def sine_kernel(self, k, q):
        g = self.table.grid
        sk = np.sin(np.outer(np.asarray(k, dtype=float), g.r))
        sq = np.sin(np.outer(np.asarray(q, dtype=float), g.r))
        return (sk * (self.table.values * g.dr)) @ sq.T

    @property
    def default_range(self) -> float:
        return max(64.0, 2.0 * self.table.grid.r_max)


def parse_potential(spec: str) -> Potential:
    """Parse ``exp:LAMBDA``, ``gauss:LAMBDA:SIGMA`` or ``table:PATH``."""
    parts = spec.split(":")
    kind = parts[0].lower()
    try:
        if kind == "exp" and len(parts) == 2:
            return Exponential(float(parts[1]))
        if kind == "gauss" and len(parts) == 3:
            return Gaussian(float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise ValueError(f"bad potential spec {spec!r}: {exc}") from None
    if kind == "table" and len(parts) >= 2:
        path = ":".join(parts[1:])
        return load_table(path)
    raise ValueError(f"bad potential spec {spec!r}")


def load_table(path: str) -> TableRadial:
    from .io import read_csv

    names, data = read_csv(path)
    if names[:2] != ["r", "value"]:
        raise ValueError(f"{path}: expected header 'r,value'")
    r, v = data[:, 0], data[:, 1]
    n = len(r)
    dr = r[1] - r[0]
    grid = RadialGrid(r_max=float(n * dr), n=n)
    if not np.allclose(r, grid.r, rtol=1e-12, atol=1e-12 * grid.r_max):
        raise ValueError(f"{path}: nodes must form a midpoint grid (j+1/2) r_max/n")
    return TableRadial(RadialFn(grid, v), source=path)


def sample(v: Potential, grid: RadialGrid) -> RadialFn:
    return RadialFn(grid, v(grid.r))


def sample_torus(v: Potential, torus) -> np.ndarray:
    """TI profile v(|x|) on the torus using the minimal-image distance."""
    return v(torus.distance_profile())


# --- scattering length -----------------------------------------------------

def _rk4_phi(vfun, r_end: float, nsteps: int):
    """Integrate phi'' = v phi, phi(0)=0, phi'(0)=1 with classical RK4.

    Returns nodes and (phi, phi') at every node.
    """
    h = r_end / nsteps
    t = np.arange(nsteps + 1) * h
    v0 = vfun(t)
    vh = vfun(t[:-1] + 0.5 * h)
    phi = np.empty(nsteps + 1)
    dphi = np.empty(nsteps + 1)
    y, z = 0.0, 1.0
    cy = cz = 0.0
    phi[0], dphi[0] = y, z
    for i in range(nsteps):
        a, b, c = v0[i], vh[i], v0[i + 1]
        k1y, k1z = z, a * y
        y2, z2 = y + 0.5 * h * k1y, z + 0.5 * h * k1z
        k2y, k2z = z2, b * y2
        y3, z3 = y + 0.5 * h * k2y, z + 0.5 * h * k2z
        k3y, k3z = z3, b * y3
        y4, z4 = y + h * k3y, z + h * k3z
        k4y, k4z = z4, c * y4
        # compensated accumulation keeps roundoff from growing with nsteps
        dy = h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y) - cy
        ty = y + dy
        cy = (ty - y) - dy
        y = ty
        dz = h / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z) - cz
        tz = z + dz
        cz = (tz - z) - dz
        z = tz
        phi[i + 1], dphi[i + 1] = y, z
    return t, phi, dphi


def _fit_a(t, phi, dphi, r_end):
    outer = t >= 0.75 * r_end
    A = np.vstack([t[outer], np.ones(outer.sum())]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, phi[outer], rcond=None)
    fit_res = np.max(np.abs(A @ np.array([slope, icpt]) - phi[outer])) / np.max(np.abs(phi[outer]))
    j_half = np.searchsorted(t, 0.5 * r_end)
    slope_drift = abs(dphi[-1] - dphi[j_half]) / abs(dphi[-1])
    return -icpt / slope, fit_res, slope_drift


def scattering_length(v: Potential, r_max: float | None = None, steps_per_unit: int = 256,
                      tol: float = 1e-10) -> float:
    """Zero-energy scattering length of -phi'' + v phi = 0, phi ~ r - a.

    RK4 on [0, r_max] at two step sizes; the finer result is returned once
    the Richardson error estimate is below 1e-9 relative.
    """
    r_end = float(r_max if r_max is not None else getattr(v, "default_range", 64.0))
    if v.is_zero:
        return 0.0
    n = int(math.ceil(r_end * steps_per_unit))
    t1, p1, d1 = _rk4_phi(v, r_end, n)
    t2, p2, d2 = _rk4_phi(v, r_end, 2 * n)
    a1, _, _ = _fit_a(t1, p1, d1, r_end)
    a2, fit_res, drift = _fit_a(t2, p2, d2, r_end)
    if drift > tol or fit_res > 1e3 * tol:
        raise NoDecay(f"phi' not constant on the outer half (drift {drift:.3g}); increase r_max")
    rich = abs(a2 - a1) / 15.0
    if rich > 1e-9 * max(abs(a2), 1e-300):
        raise NoDecay(f"Richardson estimate {rich:.3g} too large; refine the step")
    if a2 < 0:
        warnings.warn("negative scattering length for a nonnegative potential", RuntimeWarning)
    return float(a2)
