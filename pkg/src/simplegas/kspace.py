"""Composite Gauss-Legendre quadrature in |k| and Nystrom convolution kernels.

At low density the solutions have structure on two scales, the range of v
and the healing scale sqrt(e), which can differ by six decades or more. The
continuum solvers therefore discretize the radial k-line with Gauss-Legendre
panels that are geometric near k = 0, uniform across the range of v, then
geometric again in the tail.

For radial functions, with f_hat(k) = (4 pi / k) int r sin(kr) f(r) dr,

    FT(u v)(k) = (2 / (pi k)) int_0^inf dq q u_hat(q) J(k, q),
    J(k, q)    = int_0^inf v(r) sin(kr) sin(qr) dr,

and FT(u v)(0) = int dq q^2 u_hat(q) v_hat(q) / (2 pi^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss


@dataclass(frozen=True)
class KQuadrature:
    k: np.ndarray
    w: np.ndarray
    breaks: np.ndarray
    nodes_per_panel: int

    @property
    def size(self) -> int:
        return self.k.size

    @property
    def measure(self) -> np.ndarray:
        """Weights for int dk/(2 pi)^3 of a radial function."""
        return self.w * self.k**2 / (2.0 * np.pi**2)

    def integrate(self, fvals) -> float:
        return float(np.dot(self.measure, fvals))


def panel_breaks(k_low: float, k_max: float, width) -> np.ndarray:
    """Breakpoints from 0: one panel [0, k_low], then each panel doubles in
    size, capped by ``width(k)`` at its left end."""
    out = [0.0, k_low]
    k = k_low
    while k < k_max:
        step = min(k, width(k))
        k = min(k + step, k_max)
        out.append(k)
    return np.array(out)


def gauss_panels(breaks, nodes_per_panel: int = 12) -> KQuadrature:
    x, w0 = leggauss(nodes_per_panel)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    k = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
    w = half[:, None] * w0[None, :]
    return KQuadrature(k.ravel(), w.ravel(), np.asarray(breaks), nodes_per_panel)


def solver_quadrature(e: float, length: float = 1.0, nodes_per_panel: int = 12,
                      low_frac: float = 1e-4, k_uniform: float = 40.0,
                      k_max: float = 1e4, tail_ratio: float = 0.25,
                      refine: int = 1) -> KQuadrature:
    """Quadrature adapted to the healing scale 2 sqrt(e) and the range ``length``.

    ``refine`` divides every panel width by that factor (used for
    resolution studies).
    """
    kh = 2.0 * np.sqrt(e)
    kr = 1.0 / length
    k_uni = max(k_uniform * kr, 20.0 * kh)
    k_max = max(k_max * kr, 10.0 * k_uni)

    def width(k):
        w = kr if k < k_uni else tail_ratio * k
        return w / refine

    k_low = min(low_frac * kh, 0.5 * kr) / refine
    return gauss_panels(panel_breaks(k_low, k_max, width), nodes_per_panel)


def eval_quadrature(sol_quad: KQuadrature, r_max: float, k_cut: float,
                    length: float = 1.0, k_max: float | None = None,
                    nodes_per_panel: int = 12) -> KQuadrature:
    """Quadrature for inverse transforms at radii up to ``r_max``.

    Panels resolve sin(k r_max) up to ``k_cut`` and sin(k r) for r of order
    the potential range up to ``k_max``.
    """
    k_low = sol_quad.breaks[1]
    k_max = sol_quad.breaks[-1] if k_max is None else k_max
    per = 2.0 * np.pi / r_max
    fine = 0.5 * per
    coarse = min(1.0 / length, 2.0 * np.pi / (4.0 * length))

    def width(k):
        return fine if k < k_cut else coarse

    return gauss_panels(panel_breaks(k_low, k_max, width), nodes_per_panel)


def conv_matrix(v, k_eval, quad: KQuadrature) -> np.ndarray:
    """Matrix A with FT(u v)(k_eval) = A @ u_hat(quad.k).

    k_eval may contain zeros; those rows use the k -> 0 limit.
    """
    k_eval = np.asarray(k_eval, dtype=float)
    q, w = quad.k, quad.w
    out = np.empty((k_eval.size, q.size))
    zero = k_eval == 0.0
    if np.any(zero):
        out[zero] = (w * q * q * v.fourier(q) / (2.0 * np.pi**2))[None, :]
    kk = k_eval[~zero]
    if kk.size:
        out[~zero] = v.sine_kernel(kk, q) * (2.0 / np.pi) / kk[:, None] * (w * q)[None, :]
    return out


def conv_apply(v, k_eval, quad: KQuadrature, fhat, chunk: int = 2048) -> np.ndarray:
    """FT(f v)(k_eval) for f given by its transform at the quadrature nodes."""
    k_eval = np.asarray(k_eval, dtype=float)
    out = np.empty(k_eval.size)
    for s in range(0, k_eval.size, chunk):
        out[s:s + chunk] = conv_matrix(v, k_eval[s:s + chunk], quad) @ fhat
    return out


def inverse_transform(quad: KQuadrature, fhat, r, chunk: int = 256) -> np.ndarray:
    """f(r) = (1 / (2 pi^2 r)) int dk k sin(kr) f_hat(k)."""
    r = np.asarray(r, dtype=float)
    out = np.empty(r.size)
    kw = quad.k * quad.w * fhat
    for s in range(0, r.size, chunk):
        rr = r[s:s + chunk]
        out[s:s + chunk] = np.sin(np.outer(rr, quad.k)) @ kw / (2.0 * np.pi**2 * rr)
    return out


def closed_form(kap2, y):
    """Stable evaluation of g = kap2 + 1 - sqrt((kap2+1)^2 - y) and 1 - g.

    Returns (g, one_minus_g, sqrt_disc). The discriminant is expanded as
    kap2^2 + 2 kap2 + (1 - y) so that no large terms cancel.
    """
    disc = kap2 * kap2 + 2.0 * kap2 + (1.0 - y)
    sq = np.sqrt(disc)
    g = y / (kap2 + 1.0 + sq)
    den = sq + kap2
    with np.errstate(invalid="ignore", divide="ignore"):
        one_minus = np.where(den > 0, (2.0 * kap2 + (1.0 - y)) / np.where(den > 0, den, 1.0), 1.0 - g)
    return g, one_minus, sq
