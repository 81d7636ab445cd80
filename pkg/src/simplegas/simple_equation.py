"""Simple Equation: -Δu = (1-u)v - 4eu + 2ρe u*u, with e = (ρ/2)∫(1-u)v.

In Fourier space the equation is solved in closed form,

    ρû(k) = k²/4e + 1 - sqrt((k²/4e + 1)² - Ŝ(k)),   Ŝ = FT(S)/FT(S)(0),

with S = (1-u)v. The unknown of the fixed point is the smooth function
FT(S)(k) = v̂(k) - FT(uv)(k) on a Gauss-Legendre k-quadrature (see
``kspace``). The map is solved by Newton's method with an analytic
Jacobian; the plain fixed-point iteration diverges for strong potentials.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq
from scipy.special import sici

from . import kspace
from .errors import (BracketingFailure, DegeneratePotential, DiscriminantNegative,
                     NonConvergence, ResolutionLimit)
from .potentials import Potential
from .radial_field import RadialFn, RadialGrid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimpleOptions:
    tol: float = 1e-10
    max_iter: int = 60
    nodes_per_panel: int = 12
    low_frac: float = 1e-4
    k_uniform: float = 40.0
    k_max: float = 1e4
    refine: int = 1
    max_nodes: int = 6000      # dense Nyström matrices are quadratic in this


@dataclass(eq=False)
class SimpleSolution:
    potential: Potential
    e: float
    rho: float
    quad: kspace.KQuadrature
    S_raw: np.ndarray          # FT((1-u)v) at quad.k
    S0: float                  # FT((1-u)v)(0)
    iterations: int
    residual: float
    grid: RadialGrid = field(default_factory=RadialGrid)
    history: list = field(default_factory=list)

    # --- values at quadrature nodes
    @cached_property
    def kap2(self) -> np.ndarray:
        return self.quad.k**2 / (4.0 * self.e)

    @cached_property
    def _closed(self):
        return kspace.closed_form(self.kap2, self.S_raw / self.S0)

    @property
    def rho_uhat(self) -> np.ndarray:
        return self._closed[0]

    @property
    def one_minus_rho_uhat(self) -> np.ndarray:
        return self._closed[1]

    @property
    def uhat(self) -> np.ndarray:
        return self.rho_uhat / self.rho

    # --- interpolation to arbitrary k and r
    def S_raw_at(self, k) -> np.ndarray:
        k = np.atleast_1d(np.asarray(k, dtype=float))
        return self.potential.fourier(k) - kspace.conv_apply(self.potential, k, self.quad, self.uhat)

    def closed_at(self, k):
        """(ρû, 1 - ρû, sqrt-discriminant) at arbitrary k > 0."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        return kspace.closed_form(k * k / (4.0 * self.e), self.S_raw_at(k) / self.S0)

    def uhat_at(self, k) -> np.ndarray:
        k = np.atleast_1d(np.asarray(k, dtype=float))
        out = np.empty(k.size)
        zero = k == 0.0
        out[zero] = 1.0 / self.rho
        if np.any(~zero):
            out[~zero] = self.closed_at(k[~zero])[0] / self.rho
        return out

    @cached_property
    def eval_quad(self) -> kspace.KQuadrature:
        return kspace.eval_quadrature(self.quad, r_max=self.grid.r_max, k_cut=64.0,
                                      k_max=1024.0)

    @cached_property
    def uhat_eval(self) -> np.ndarray:
        return self.uhat_at(self.eval_quad.k)

    def u_at(self, r) -> np.ndarray:
        return kspace.inverse_transform(self.eval_quad, self.uhat_eval, r)

    @cached_property
    def u(self) -> RadialFn:
        return RadialFn(self.grid, self.u_at(self.grid.r))

    @cached_property
    def u_hat(self) -> RadialFn:
        return RadialFn(self.grid, self.uhat_at(self.grid.k), dual=True)

    # --- diagnostics
    @property
    def S_hat0(self) -> float:
        """Ŝ(0) = ρ FT((1-u)v)(0) / 2e."""
        return self.rho * self.S0 / (2.0 * self.e)

    @property
    def rho_int_u(self) -> float:
        """ρ∫u = ρû(0), from the closed form at k = 0."""
        g, _, _ = kspace.closed_form(np.array([0.0]), np.array([self.S_hat0]))
        return float(g[0])

    def energy_check(self) -> float:
        """(ρ/2)∫(1-u)v recomputed from û at the nodes."""
        s0 = self.potential.integral - self.quad.integrate(self.uhat * self.potential.fourier(self.quad.k))
        return 0.5 * self.rho * s0

    def fixed_point_defect(self) -> float:
        """Relative sup-norm change of FT((1-u)v) under one application of
        the closed-form map, recomputed from the stored û."""
        v = self.potential
        kk = np.concatenate([[0.0], self.quad.k])
        s_old = np.concatenate([[self.S0], self.S_raw])
        s_new = v.fourier(kk) - kspace.conv_apply(v, kk, self.quad, self.uhat)
        return float(np.max(np.abs(s_new - s_old)) / np.max(np.abs(s_old)))

    def summary(self) -> dict:
        return {
            "e": self.e, "rho": self.rho, "potential": self.potential.spec,
            "iterations": self.iterations, "residual": self.residual,
            "S_hat0": self.S_hat0, "rho_int_u": self.rho_int_u,
            "quadrature_nodes": self.quad.size,
        }


def _newton(e, v, quad, tol, max_iter, s_init=None):
    k = quad.k
    n = k.size
    kk = np.concatenate([[0.0], k])
    A = kspace.conv_matrix(v, kk, quad)
    B = A / (2.0 * e)
    vh = v.fourier(kk)
    kap2 = k * k / (4.0 * e)
    base = kap2 * kap2 + 2.0 * kap2 + 1.0

    if s_init is None:
        s = vh.copy()   # u = 0
    else:
        s = np.array(s_init, dtype=float)

    def defect(s):
        g, _, sq = kspace.closed_form(kap2, s[1:] / s[0])
        return s - (vh - s[0] * (B @ g)), g, sq

    history = []
    r, g, sq = defect(s)
    for it in range(1, max_iter + 1):
        Bg = B @ g
        J = np.eye(n + 1)
        dg = 1.0 / (2.0 * sq)
        J[:, 1:] += B * dg[None, :]
        J[:, 0] += Bg - B @ (dg * s[1:] / s[0])
        ds = np.linalg.solve(J, r)
        t = 1.0
        for _ in range(60):
            trial = s - t * ds
            if trial[0] > 0 and np.all(base - trial[1:] / trial[0] >= 0):
                break
            t *= 0.5
        else:
            raise DiscriminantNegative("discriminant negative after step halving")
        step = t * np.max(np.abs(ds))
        s = trial
        r, g, sq = defect(s)
        rel = float(np.max(np.abs(r)) / np.max(np.abs(s)))
        history.append(rel)
        log.debug("newton it=%d step=%.3e defect=%.3e damping=%g", it, step, rel, t)
        if step <= tol * np.max(np.abs(s)) and rel <= tol:
            return s, it, rel, history
    raise NonConvergence(f"Simple Equation did not converge in {max_iter} Newton steps", history)


def solve_at_e(e: float, v: Potential, grid: RadialGrid | None = None,
               opts: SimpleOptions | None = None, s_init=None) -> SimpleSolution:
    if not e > 0:
        raise ValueError("e must be positive")
    if v.is_zero:
        raise DegeneratePotential("∫(1-u)v = 0 for v ≡ 0")
    opts = opts or SimpleOptions()
    grid = grid or RadialGrid()
    length = getattr(v, "sigma", 1.0)
    quad = kspace.solver_quadrature(e, length=length, nodes_per_panel=opts.nodes_per_panel,
                                    low_frac=opts.low_frac, k_uniform=opts.k_uniform,
                                    k_max=opts.k_max, refine=opts.refine)
    if quad.size > opts.max_nodes:
        raise ResolutionLimit(f"e = {e:g} needs {quad.size} k-nodes (cap {opts.max_nodes})")
    if s_init is not None and len(s_init) != quad.size + 1:
        s_init = None
    s, its, rel, hist = _newton(e, v, quad, opts.tol, opts.max_iter, s_init)
    s0 = float(s[0])
    if not s0 > 0:
        raise DegeneratePotential("∫(1-u)v <= 0 at the fixed point")
    rho = 2.0 * e / s0
    sol = SimpleSolution(v, float(e), rho, quad, s[1:].copy(), s0, its, rel, grid, hist)
    if np.any(sol.rho_uhat < 0):
        log.info("monitor: û < 0 at %d nodes", int(np.sum(sol.rho_uhat < 0)))
    return sol


def _log_rho(log_e, v, grid, opts, cache):
    sol = solve_at_e(math.exp(log_e), v, grid, opts, s_init=cache.get("s"))
    cache["s"] = np.concatenate([[sol.S0], sol.S_raw])
    cache["sol"] = sol
    return math.log(sol.rho)


def solve_at_rho(rho: float, v: Potential, grid: RadialGrid | None = None,
                 opts: SimpleOptions | None = None, e_range=(1e-14, 1e6)) -> SimpleSolution:
    """Invert the increasing map e -> ρ(e) by Brent's method on log e."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    opts = opts or SimpleOptions()
    cache = {}
    target = math.log(rho)
    try:
        a = v.scattering_length()
    except Exception:
        a = v.integral / (4.0 * math.pi)
    lo_lim, hi_lim = math.log(e_range[0]), math.log(e_range[1])
    x0 = min(max(math.log(2.0 * math.pi * rho * max(a, 1e-300)), lo_lim), hi_lim)

    def f(x):
        return _log_rho(x, v, grid, opts, cache) - target

    def limit(exc):
        return BracketingFailure(f"ρ = {rho:g} is out of reach: {exc}")

    lo, hi = x0 - 0.05, x0 + 0.05
    try:
        flo, fhi = f(lo), f(hi)
    except ResolutionLimit as exc:
        raise limit(exc) from exc
    scanned = [flo + target, fhi + target]
    step = 0.5
    while flo > 0 and lo > lo_lim:
        lo, hi, fhi = max(lo - step, lo_lim), lo, flo
        flo = f(lo)
        scanned.append(flo + target)
        step *= 2
    while fhi < 0 and hi < hi_lim:
        lo, flo, hi = hi, fhi, min(hi + step, hi_lim)
        try:
            fhi = f(hi)
        except ResolutionLimit as exc:
            raise limit(exc) from exc
        scanned.append(fhi + target)
        step *= 2
    if flo > 0 or fhi < 0:
        rng = (math.exp(min(scanned)), math.exp(max(scanned)))
        raise BracketingFailure(f"ρ(e) does not bracket {rho:g}; scanned ρ in [{rng[0]:.3g}, {rng[1]:.3g}]")
    x = brentq(f, lo, hi, xtol=1e-13, rtol=1e-15, maxiter=200)
    sol = cache["sol"]
    if abs(sol.rho - rho) > 1e-10 * rho:
        f(x)
        sol = cache["sol"]
    return sol


def _sin_tail(r, K, c):
    """IFT of -c/k^4 restricted to k > K, in closed form via Si."""
    x = K * r
    si, _ = sici(x)
    I = np.sin(x) / (2.0 * x * x) + np.cos(x) / (2.0 * x) - 0.5 * (0.5 * np.pi - si)
    return -(c / (2.0 * np.pi**2)) * r * I


def residual_profile(sol: SimpleSolution, eps: float = 0.0, F=None,
                     r_interior: float | None = None):
    """Pointwise -Δu - (1-u)v + 4eu - 2ρe u*u - εF on the grid interior.

    The k-space part T = (k² + 4e)û - 2ρe û² - v̂ is inverted with a
    quadrature independent of the solver's, plus the closed-form
    contribution of its k⁻⁴ tail beyond the last node; (1-u)v is formed
    pointwise in real space. ``F`` is a RadialFn on ``sol.grid`` or a
    callable of r. The interior defaults to r <= r_max / 4.
    """
    g = sol.grid
    r_int = g.r_max / 4.0 if r_interior is None else r_interior
    r = g.r[g.r <= r_int]
    q = sol.eval_quad
    uh = sol.uhat_eval
    vh = sol.potential.fourier(q.k)
    T = (q.k**2 + 4.0 * sol.e) * uh - 2.0 * sol.rho * sol.e * uh * uh - vh
    c = -float(np.mean(T[-q.nodes_per_panel:] * q.k[-q.nodes_per_panel:] ** 4))
    res = (kspace.inverse_transform(q, T, r) + _sin_tail(r, q.breaks[-1], c)
           + sol.u_at(r) * sol.potential(r))
    if eps != 0.0 and F is not None:
        Fv = F.values[: r.size] if isinstance(F, RadialFn) else np.asarray(F(r))
        res = res - eps * Fv
    return r, res


def residual_simpleq(sol: SimpleSolution, eps: float = 0.0, F=None,
                     r_interior: float | None = None) -> float:
    """sup-norm of the Simple Equation defect, see ``residual_profile``."""
    return float(np.max(np.abs(residual_profile(sol, eps, F, r_interior)[1])))
