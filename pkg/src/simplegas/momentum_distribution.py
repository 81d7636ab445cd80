"""Momentum distribution of the Simple Equation by linear response.

With the resolvent 𝔎_e = (-Δ + v + 4e(1 - ρu*))^{-1} and 𝔜_e its v = 0
counterpart (diagonal in k with multiplier 1/(k² + 4e(1 - ρû(k)))),

    M(k) = ρû(k) (I₁ - I₂) / D,
    I₁ = v̂(k) / (k² + 4e(1-ρû(k))),
    I₂ = FT(v 𝔎_e v)(k) / (k² + 4e(1-ρû(k))),
    D  = 1 - ρ ⟨𝔎_e v, 2u - ρ u*u⟩.

Radial functions are represented by their transforms at the nodes of the
solution's k-quadrature, and 𝔎_e is inverted with the Nyström kernel of
``kspace.conv_matrix``.

The module also provides an independent finite-difference check on the
torus, where the perturbed Simple Equation is solved directly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, cg

from . import kspace
from .errors import (DenominatorNearZero, DiscriminantNegative, LinearSolveFailure,
                     NonConvergence)
from .potentials import Potential, sample_torus
from .radial_field import RadialFn, RadialGrid
from .simple_equation import SimpleSolution
from .torus_field import Torus, lattice_laplacian

log = logging.getLogger(__name__)


@dataclass(eq=False)
class MomentumCurve:
    k: np.ndarray
    M: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        if np.any(self.k <= 0):
            raise ValueError("momentum curve requires k > 0")
        if not np.all(np.isfinite(self.M)):
            raise ValueError("non-finite momentum distribution values")


def scaling_function(kappa) -> np.ndarray:
    """-½(1 - (κ²+1)/√((κ²+1)²-1)), written without cancellation."""
    kap = np.asarray(kappa, dtype=float)
    k2 = kap * kap
    sq = kap * np.sqrt(k2 + 2.0)
    return 1.0 / (2.0 * sq * (k2 + 1.0 + sq))


def _check_k(k) -> np.ndarray:
    k = np.abs(np.atleast_1d(np.asarray(k, dtype=float)))
    if np.any(k == 0):
        raise ValueError("momentum distribution is defined for k != 0")
    return k


def momentum_bogolyubov(k, rho: float, a: float) -> MomentumCurve:
    """M(k) = -(1/2ρ)(1 - (k²+b)/√(k⁴+2bk²)), b = 8πρa."""
    if not (rho > 0 and a > 0):
        raise ValueError("rho and a must be positive")
    k = _check_k(k)
    b = 8.0 * np.pi * rho * a
    k2 = k * k
    sq = k * np.sqrt(k2 + 2.0 * b)
    M = b * b / (2.0 * rho * sq * (k2 + b + sq))
    return MomentumCurve(k, M, {"rho": rho, "a": a, "method": "bogolyubov"})


# --- resolvent ---------------------------------------------------------------

@dataclass(eq=False)
class ResolventResult:
    """𝔎_e applied to a right-hand side, stored as ŵ at the quadrature nodes."""
    ws: "ResolventWorkspace"
    hat: np.ndarray
    residual: float
    method: str
    history: list


class ResolventWorkspace:
    def __init__(self, sol: SimpleSolution, tol: float = 1e-10, max_iter: int = 200):
        self.sol = sol
        self.tol = tol
        self.max_iter = max_iter
        q = sol.quad
        self.denom = q.k**2 + 4.0 * sol.e * sol.one_minus_rho_uhat
        if np.any(self.denom <= 0):
            raise DiscriminantNegative("k² + 4e(1 - ρû) must be positive for k > 0")
        self.m = 1.0 / self.denom

    @cached_property
    def A(self) -> np.ndarray:
        return kspace.conv_matrix(self.sol.potential, self.sol.quad.k, self.sol.quad)

    @cached_property
    def C(self) -> np.ndarray:
        sm = np.sqrt(self.sol.quad.measure)
        d = np.sqrt(self.m)
        B = (sm[:, None] * self.A) / sm[None, :]
        B = 0.5 * (B + B.T)
        return np.eye(B.shape[0]) + d[:, None] * B * d[None, :]

    def forward(self, what: np.ndarray) -> np.ndarray:
        return self.denom * what + self.A @ what

    def denom_at(self, k) -> np.ndarray:
        _, om, _ = self.sol.closed_at(k)
        return k * k + 4.0 * self.sol.e * om

    @cached_property
    def Ke_v(self) -> np.ndarray:
        """ŵ with w = 𝔎_e v, shared by every k."""
        return apply_Ke(self, self.sol.potential.fourier(self.sol.quad.k)).hat

    def Ke_v_at(self, k) -> np.ndarray:
        k = np.atleast_1d(np.asarray(k, dtype=float))
        v = self.sol.potential
        return (v.fourier(k) - kspace.conv_apply(v, k, self.sol.quad, self.Ke_v)) / self.denom_at(k)

    @cached_property
    def D(self) -> float:
        g = self.sol.rho_uhat
        return 1.0 - self.sol.quad.integrate(self.Ke_v * (2.0 * g - g * g))


def _rhs_hat(ws: ResolventWorkspace, rhs) -> np.ndarray:
    k = ws.sol.quad.k
    if isinstance(rhs, RadialFn):
        if rhs.dual:
            raise ValueError("rhs must be a real-space RadialFn")
        # direct sine transform on the radial grid
        g = rhs.grid
        kern = np.sin(np.outer(k, g.r)) * (g.r * rhs.values * g.dr)[None, :]
        return 4.0 * np.pi * kern.sum(axis=1) / k
    if callable(rhs):
        return np.asarray(rhs(k), dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != k.shape:
        raise ValueError("rhs must be given at the quadrature nodes")
    return rhs


def apply_Ke(ws: ResolventWorkspace, rhs) -> ResolventResult:
    """Solve (-Δ + v + 4e(1-ρu*)) w = rhs.

    rhs: transform at the quadrature nodes, a callable k -> f̂(k), or a
    real-space RadialFn. Tries the stationary iteration w ← 𝔜_e(rhs - v w),
    then CG on the symmetrically scaled system, then a dense Cholesky solve.
    """
    r = _rhs_hat(ws, rhs)
    scale = max(float(np.max(np.abs(r))), 1e-300)
    history = []

    def rel(w):
        return float(np.max(np.abs(ws.forward(w) - r))) / scale

    if ws.sol.potential.is_zero:
        w = ws.m * r
        return ResolventResult(ws, w, rel(w), "diagonal", history)

    # stationary iteration, abandoned as soon as it stops contracting
    w = ws.m * r
    prev = rel(w)
    history.append(("stationary", prev))
    for _ in range(ws.max_iter):
        if prev <= ws.tol:
            return ResolventResult(ws, w, prev, "stationary", history)
        w_new = ws.m * (r - ws.A @ w)
        cur = rel(w_new)
        history.append(("stationary", cur))
        if not cur < 0.9 * prev:
            break
        w, prev = w_new, cur

    # The operator is symmetric for the measure k²w/2π². With
    # C = I + 𝔜^½ μ^½ A μ^-½ 𝔜^½ the system is SPD and well conditioned.
    sm = np.sqrt(ws.sol.quad.measure)
    d = np.sqrt(ws.m)
    b = d * sm * r

    def unscale(y):
        return d * y / sm

    C = ws.C
    y, info = cg(LinearOperator(C.shape, matvec=lambda x: C @ x, dtype=float), b,
                 rtol=0.01 * ws.tol, atol=0.0, maxiter=ws.max_iter)
    w = unscale(y)
    res = rel(w)
    history.append(("cg", res))
    if info == 0 and res <= ws.tol:
        return ResolventResult(ws, w, res, "cg", history)

    w = unscale(sla.cho_solve(sla.cho_factor(C), b))
    res = rel(w)
    history.append(("dense", res))
    if not res <= ws.tol:
        raise LinearSolveFailure(f"resolvent solve residual {res:.3e} above {ws.tol:.1e}", history)
    return ResolventResult(ws, w, res, "dense", history)


# --- Simple Equation momentum distribution ----------------------------------

def linear_response_terms(sol: SimpleSolution, k, ws: ResolventWorkspace | None = None) -> dict:
    """ρû(k), I₁(k), I₂(k) and D at the given |k|."""
    ws = ws or ResolventWorkspace(sol)
    k = _check_k(k)
    v = sol.potential
    den = ws.denom_at(k)
    return {"k": k, "rho_uhat": sol.closed_at(k)[0], "I1": v.fourier(k) / den,
            "I2": kspace.conv_apply(v, k, sol.quad, ws.Ke_v) / den, "D": ws.D}


def momentum_simpleq(sol: SimpleSolution, k, ws: ResolventWorkspace | None = None) -> MomentumCurve:
    ws = ws or ResolventWorkspace(sol)
    t = linear_response_terms(sol, k, ws)
    D = t["D"]
    if abs(D) < 1e-6:
        raise DenominatorNearZero(f"D = {D:.3e}")
    M = t["rho_uhat"] * (t["I1"] - t["I2"]) / D
    if np.any(M <= 0):
        log.warning("M(k) <= 0 at %d points", int(np.sum(M <= 0)))
    return MomentumCurve(t["k"], M, {"e": sol.e, "rho": sol.rho, "a": sol.potential.scattering_length(),
                                     "method": "simpleq-linear-response", "D": D})


def _check_quadrature(sol: SimpleSolution) -> kspace.KQuadrature:
    """A k-quadrature laid out independently of the solver's (more nodes,
    panel breaks at other positions)."""
    return kspace.solver_quadrature(sol.e, nodes_per_panel=16, low_frac=3e-5,
                                    k_uniform=30.0, k_max=3e3, tail_ratio=0.2)


def healing_dual_grid(sol: SimpleSolution, n: int = 16384, healing_lengths: float = 50.0) -> RadialGrid:
    """Radial grid whose dual spacing resolves the scale k ~ 2√e."""
    r_max = max(sol.grid.r_max, healing_lengths / (2.0 * np.sqrt(sol.e)))
    return RadialGrid(r_max, n)


def condensate_fraction(sol: SimpleSolution, ws: ResolventWorkspace | None = None,
                        grid: RadialGrid | None = None) -> dict:
    """Uncondensed fraction ∫dk/(2π)³ M(k).

    ``closed`` is ρ⟨𝔎_e v, u⟩/D. ``dual_grid`` is the midpoint sum of
    momentum_simpleq over the dual nodes of ``grid`` (default: a grid
    spanning 50 healing lengths); ``quadrature`` integrates it on an
    independent Gauss k-quadrature.
    """
    ws = ws or ResolventWorkspace(sol)
    closed = sol.quad.integrate(ws.Ke_v * sol.rho_uhat) / ws.D
    cq = _check_quadrature(sol)
    quad = cq.integrate(momentum_simpleq(sol, cq.k, ws).M)
    g = grid or healing_dual_grid(sol)
    kd = g.k
    dual = float(np.sum(momentum_simpleq(sol, kd, ws).M * kd**2) * g.dk / (2 * np.pi**2))
    return {"closed": float(closed), "quadrature": float(quad), "dual_grid": dual, "D": ws.D,
            "dual_r_max": g.r_max, "dual_n": g.n}


def scaling_comparison(sol: SimpleSolution, kappa, ws: ResolventWorkspace | None = None) -> dict:
    """Columns κ, ρM_simpleq(2√eκ), ρM_bog(2√eκ), scaling function, deviations."""
    kappa = np.asarray(kappa, dtype=float)
    k = 2.0 * np.sqrt(sol.e) * kappa
    a = sol.potential.scattering_length()
    ms = sol.rho * momentum_simpleq(sol, k, ws).M
    mb = sol.rho * momentum_bogolyubov(k, sol.rho, a).M
    f = scaling_function(kappa)
    return {"kappa": kappa, "k": k, "rhoM_simpleq": ms, "rhoM_bog": mb, "scaling_fn": f,
            "dev_simpleq": ms / f - 1.0, "dev_bog": mb / f - 1.0}


# --- torus finite-difference check ------------------------------------------

@dataclass(eq=False)
class TorusSimpleSolution:
    torus: Torus
    rho: float
    e: float
    u: np.ndarray
    S_hat: np.ndarray
    iterations: int
    residual: float
    jacobian: np.ndarray | None = None


class TorusSimple:
    """The Simple Equation with a forcing term on the torus,

        -Δu = (1-u)v - 4eu + 2ρe u*u + εF,   e = (ρ/2)∫(1-u)v,

    solved in Fourier variables: with s = FT((1-u)v), ρû is given by the
    closed form with y = (s + εF̂)/s(0), and s is found by Newton's method
    with a dense Jacobian. ∫F must vanish.
    """

    def __init__(self, v: Potential, rho: float, torus: Torus):
        self.torus = torus
        self.rho = rho
        self.vprof = sample_torus(v, torus)
        self.k2 = torus.k2

    def hat(self, f) -> np.ndarray:
        return (self.torus.dv * self.torus.fft(f)).real

    def _map(self, s, Fh):
        t = self.torus
        e = 0.5 * self.rho * s[0]
        K = self.k2 / (4.0 * e)
        y = (s + Fh) / s[0]
        g, _, sq = kspace.closed_form(K, y)
        u = t.ifft(g).real / (self.rho * t.dv)
        return self.hat((1.0 - u) * self.vprof), g, K, y, sq, u

    def _jacobian(self, s, K, y, sq):
        t = self.torus
        with np.errstate(divide="ignore", invalid="ignore"):
            dgdy = np.where(sq > 0, 0.5 / sq, 0.0)
            dgdK = np.where(sq > 0, 1.0 - (K + 1.0) / sq, 0.0)
        col = -(dgdy * y + dgdK * K) / s[0]
        col[0] = 0.0
        Dt = np.diag(dgdy / s[0])
        Dt[0, :] += col                         # Dt[j, κ] = ∂g_κ/∂s_j
        X = t.ifft(Dt)
        Jt = t.fft(X * self.vprof[None, :]).real / self.rho
        return np.eye(t.Ns) + Jt.T

    def _disc_ok(self, s, Fh):
        e = 0.5 * self.rho * s[0]
        if not e > 0:
            return False
        K = self.k2 / (4.0 * e)
        disc = K * K + 2.0 * K + 1.0 - (s + Fh) / s[0]
        return bool(np.all(disc[1:] >= 0))

    def solve(self, F=None, eps: float = 0.0, init: TorusSimpleSolution | None = None,
              tol: float = 1e-14, max_iter: int = 60) -> TorusSimpleSolution:
        t = self.torus
        Fh = np.zeros(t.Ns) if F is None else eps * self.hat(F)
        if abs(Fh[0]) > 1e-12 * max(1.0, np.max(np.abs(Fh))):
            raise ValueError("forcing must integrate to zero")
        Fh[0] = 0.0
        s = self.hat(self.vprof) if init is None else init.S_hat.copy()
        J = None if init is None else init.jacobian
        if not self._disc_ok(s, Fh):
            raise DiscriminantNegative("forcing too strong: negative discriminant at the start")
        history = []
        for it in range(1, max_iter + 1):
            ph, g, K, y, sq, u = self._map(s, Fh)
            r = s - ph
            nr = float(np.max(np.abs(r)) / abs(s[0]))
            history.append(nr)
            if nr <= tol or (it > 3 and nr >= 0.5 * history[-2] and nr < 1e3 * tol):
                break
            # reuse a supplied Jacobian while it contracts well
            if J is None or (len(history) > 1 and nr > 0.1 * history[-2]):
                J = self._jacobian(s, K, y, sq)
            ds = np.linalg.solve(J, r)
            lam = 1.0
            while not self._disc_ok(s - lam * ds, Fh):
                lam *= 0.5
                if lam < 1e-8:
                    raise DiscriminantNegative("negative discriminant on the torus")
            s = s - lam * ds
        else:
            raise NonConvergence("torus Simple Equation did not converge", history)
        e = 0.5 * self.rho * s[0]
        if init is None:
            J = self._jacobian(s, K, y, sq)
        return TorusSimpleSolution(t, self.rho, e, u, s, it, nr, J)


def _torus_Ke_solve(ts: TorusSimple, sol: TorusSimpleSolution, rhs) -> np.ndarray:
    t, rho, e = ts.torus, ts.rho, sol.e
    u = sol.u
    diag = ts.vprof + 4.0 * e

    def mv(x):
        return -lattice_laplacian(x, t) + diag * x - 4.0 * e * rho * t.conv(u, x)

    shift = float(np.mean(diag))

    def pc(x):
        return t.ifft(t.fft(x) / (ts.k2 + shift)).real

    N = t.Ns
    z, info = cg(LinearOperator((N, N), matvec=mv, dtype=float), rhs, rtol=1e-14, atol=0.0,
                 M=LinearOperator((N, N), matvec=pc, dtype=float), maxiter=50 * N)
    if info != 0 or np.max(np.abs(mv(z) - rhs)) > 1e-10 * np.max(np.abs(rhs)):
        raise LinearSolveFailure("lattice resolvent solve failed")
    return z


def hellmann_feynman_fd(v: Potential, rho: float, torus: Torus, m, delta: float,
                        base: TorusSimpleSolution | None = None, details: bool = False):
    """(M_fd, M_formula) for the lattice momentum k = 2πm/L.

    M_fd = (e(+δ) - e(-δ))/2δ with F = -2û(k)cos(kx). On the torus ρ∫u = 1
    holds exactly for every ε, so the linear-response denominator vanishes
    and the formula is taken with the perturbation constrained by ∫∂u/∂ε = 0:
        M = -û(k) ⟨𝔎_e 1, cos kx⟩ / ⟨𝔎_e 1, 2u - ρu*u⟩.
    """
    m = np.asarray(m, dtype=int)
    if m.shape != (torus.d,) or not np.any(m):
        raise ValueError("k must be a nonzero lattice momentum of the torus")
    ts = TorusSimple(v, rho, torus)
    base = base or ts.solve()
    kidx = int(torus.flat_index(m))
    uk = ts.hat(base.u)[kidx]
    phase = torus.plane_wave(m).real
    F = -2.0 * uk * phase
    ep = ts.solve(F, delta, init=base).e
    em = ts.solve(F, -delta, init=base).e
    M_fd = (ep - em) / (2.0 * delta)
    z = _torus_Ke_solve(ts, base, np.ones(torus.Ns))
    q = 2.0 * base.u - rho * torus.conv(base.u, base.u)
    M_formula = -uk * float(z @ phase) / float(z @ q)
    if details:
        return M_fd, M_formula, {"e": base.e, "e_plus": ep, "e_minus": em, "uhat_k": uk}
    return M_fd, M_formula
