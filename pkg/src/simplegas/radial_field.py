"""Spherically symmetric functions on R^3 and their radial Fourier transform.

Functions are sampled on a uniform midpoint grid r_j = (j + 1/2) r_max / n.
The dual grid k_m = (m + 1/2) pi / r_max makes the map r f(r) -> k f_hat(k)
a type-IV discrete sine transform, which is its own inverse up to a factor.

Convention: f_hat(k) = int dx e^{ikx} f(|x|) = (4 pi / k) int_0^inf r sin(kr) f(r) dr.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dst

from .errors import GridMismatch


@dataclass(frozen=True)
class RadialGrid:
    r_max: float = 64.0
    n: int = 2048

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8:
            raise ValueError(f"n must be an integer >= 8, got {self.n}")
        if not self.r_max > 0:
            raise ValueError(f"r_max must be positive, got {self.r_max}")

    @property
    def dr(self) -> float:
        return self.r_max / self.n

    @property
    def dk(self) -> float:
        return np.pi / self.r_max

    @property
    def r(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dr

    @property
    def k(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dk


@dataclass(frozen=True, eq=False)
class RadialFn:
    """Samples of a radial function on a grid (``dual=True`` for k-space)."""

    grid: RadialGrid
    values: np.ndarray
    dual: bool = False

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("RadialFn values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.k if self.dual else self.grid.r

    def _check(self, other: "RadialFn"):
        if other.grid != self.grid or other.dual != self.dual:
            raise GridMismatch("RadialFn operands live on different grids")

    def _binary(self, other, op):
        if isinstance(other, RadialFn):
            self._check(other)
            other = other.values
        return RadialFn(self.grid, op(self.values, other), self.dual)

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return RadialFn(self.grid, -self.values, self.dual)

    def to_csv(self, path, header_lines=()):
        from .io import write_csv

        name = "k" if self.dual else "r"
        write_csv(path, [name, "value"], [self.nodes, self.values], header_lines)


def from_function(grid: RadialGrid, func, dual: bool = False) -> RadialFn:
    nodes = grid.k if dual else grid.r
    return RadialFn(grid, func(nodes), dual)


def fourier(f: RadialFn) -> RadialFn:
    if f.dual:
        raise GridMismatch("fourier expects a real-space RadialFn")
    g = f.grid
    # sum_j r_j sin(k_m r_j) f_j = dst4(r f) / 2
    vals = 2.0 * np.pi * g.dr / g.k * dst(g.r * f.values, type=4)
    return RadialFn(g, vals, dual=True)


def inverse_fourier(fh: RadialFn) -> RadialFn:
    if not fh.dual:
        raise GridMismatch("inverse_fourier expects a dual-grid RadialFn")
    g = fh.grid
    vals = g.dk / (4.0 * np.pi**2 * g.r) * dst(g.k * fh.values, type=4)
    return RadialFn(g, vals, dual=False)


def convolve(f: RadialFn, h: RadialFn) -> RadialFn:
    f._check(h)
    return inverse_fourier(fourier(f) * fourier(h))


def integrate(f: RadialFn) -> float:
    if f.dual:
        # (2 pi)^-3 measure for k-space functions
        g = f.grid
        return float(np.sum(g.k**2 * f.values) * g.dk / (2.0 * np.pi**2))
    g = f.grid
    return float(4.0 * np.pi * np.sum(g.r**2 * f.values) * g.dr)


def inner(f: RadialFn, h: RadialFn) -> float:
    """L2 inner product int f h dx (or int f h dk/(2pi)^3 on the dual grid)."""
    f._check(h)
    return integrate(f * h)
