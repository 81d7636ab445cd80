"""Coupled equations for (g₁, u₂) without translation invariance.

All sums use the site measure h^d. Pair fields are dense N_s x N_s arrays;
f₁ ∗̄ f₂ (x,y) = h^d Σ_z g₁(z) f₁(x,z) f₂(z,y). The quartic part of L̄ is a
four-index contraction and costs O(N_s⁴); it is evaluated one row at a time
with matrix products.

ϖ operators act on the last axis of an array (``WinOperator.apply``); ϖ_x on
a pair field is applied through the transpose.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .complete_equation import CompleteSolution
from .errors import NonConvergence, PositivityLoss
from .potentials import Potential, sample_torus
from .torus_field import Torus, WinOperator, ZeroWin, lattice_laplacian, pair_laplacian_sum

log = logging.getLogger(__name__)


@dataclass(eq=False)
class CoupledState:
    torus: Torus
    g1: np.ndarray
    u2: np.ndarray
    win: WinOperator
    rho: float

    def check(self, tol: float = 1e-6) -> dict:
        t = self.torus
        norm = float(t.integral(self.g1).real / t.V)
        cons = t.integral(self.g1[None, :] * self.u2)
        sym = float(np.max(np.abs(self.u2 - self.u2.T)))
        diag = {"normalization": norm, "constraint": float(np.max(np.abs(cons))), "asymmetry": sym,
                "g1_min": float(np.min(np.real(self.g1)))}
        if abs(norm - 1) > tol or diag["constraint"] > tol or sym > tol:
            log.warning("CoupledState invariants violated: %s", diag)
        return diag


@dataclass(eq=False)
class TermBundle:
    Sbar: np.ndarray
    Ebar: np.ndarray
    Abar: np.ndarray
    Cbar: np.ndarray
    Kbar: np.ndarray         # symmetric part of S̄ ∗̄ u₂
    Lbar: np.ndarray         # symmetric part, see build_terms
    Rbar2: np.ndarray        # multiplicative part; ϖ_x + ϖ_y act in residual_g2
    avg_E: complex
    avg_A: complex
    avg_win: complex
    vpair: np.ndarray


def ti_state(torus: Torus, profile, rho: float, win: WinOperator | None = None) -> CoupledState:
    """g₁ ≡ 1 and u₂(x,y) = w(x-y)."""
    return CoupledState(torus, np.ones(torus.Ns), torus.ti_pair(profile), win or ZeroWin(), rho)


def state_from_complete(sol: CompleteSolution) -> CoupledState:
    return ti_state(sol.torus, sol.u, sol.rho)


def pair_potential(v: Potential | np.ndarray, torus: Torus) -> np.ndarray:
    """v(x,y) from a Potential, a displacement profile (N_s,) or a pair array."""
    if isinstance(v, Potential):
        return torus.ti_pair(sample_torus(v, torus))
    v = np.asarray(v)
    if v.shape == (torus.Ns,):
        return torus.ti_pair(v)
    if v.shape != (torus.Ns, torus.Ns):
        raise ValueError(f"pair potential has shape {v.shape}")
    return v


def _bar(g1dv, A, B):
    return (A * g1dv[None, :]) @ B


def _sym(F):
    return 0.5 * (F + F.T)


def quartic_term(torus: Torus, g1, u2, Sbar) -> np.ndarray:
    """Q(x,y) = h^{2d} Σ_{z,t} g₁(z)g₁(t)S̄(z,t)u₂(x,z)u₂(x,t)u₂(y,z)u₂(y,t)."""
    N = torus.Ns
    w = g1 * torus.dv
    dtype = np.result_type(u2, Sbar, w)
    Q = np.empty((N, N), dtype=dtype)
    for x in range(N):
        Y = u2 * (u2[x] * w)[None, :]      # Y[y, z] = w(z) u2(x,z) u2(y,z)
        Q[x] = np.sum((Y @ Sbar) * Y, axis=1)
    return Q


def build_terms(st: CoupledState, v) -> TermBundle:
    t = st.torus
    st.check()
    rho, g1, u2, win = st.rho, st.g1, st.u2, st.win
    dv, V = t.dv, t.V
    g1dv = g1 * dv

    def avg(f):
        return np.sum(g1dv * f) / V

    vpair = pair_potential(v, t)
    Sbar = vpair * (1.0 - u2)
    Ebar = 0.5 * rho * (Sbar @ g1dv)
    Su = _bar(g1dv, Sbar, u2)                    # S̄ ∗̄ u₂ = K̄
    Suu = _bar(g1dv, Su, u2)                     # S̄ ∗̄ u₂ ∗̄ u₂
    Abar = rho**2 * np.diagonal(Suu).copy()
    uS = _bar(g1dv, u2, Sbar)                    # u₂ ∗̄ S̄
    Cbar = 2.0 * rho**2 * (uS @ g1dv) + 2.0 * rho * win.integral_of(t, g1[None, :] * u2)
    # K̄ and L̄ as written are symmetric only under translation invariance;
    # the pair equation is used in its x <-> y averaged form
    Kbar = _sym(Su)
    Lbar = _sym(Suu - 2.0 * _bar(g1dv, u2, u2 * uS)) + 0.5 * quartic_term(t, g1, u2, Sbar)
    aE, aA = avg(Ebar), avg(Abar)
    aW = win.average(t, g1)
    uu = _bar(g1dv, u2, u2)
    Ed = Ebar - aE
    R = (2.0 * (Ebar[:, None] + Ebar[None, :] - 2.0 * aE)
         + 0.5 * (Abar[:, None] + Abar[None, :] - 2.0 * aA - Cbar[:, None] - Cbar[None, :])
         + 2.0 * rho * ((u2 * (g1dv * Ed)[None, :]) @ u2)
         + rho * win.integral_of(t, (g1[None, None, :] * u2[:, None, :] * u2[None, :, :]))
         - rho * uu * aW)
    return TermBundle(Sbar, Ebar, Abar, Cbar, Kbar, Lbar, R, aE, aA, aW, vpair)


def _win_pair(win: WinOperator, t: Torus, G):
    """(ϖ_x + ϖ_y) G."""
    if win.is_zero():
        return np.zeros_like(G)
    return win.apply(t, G) + win.apply(t, G.T).T


def residual_g1(st: CoupledState, terms: TermBundle) -> np.ndarray:
    t, g1 = st.torus, st.g1
    lap = lattice_laplacian(g1, t)
    return (-0.5 * lap + st.win.apply(t, g1) - terms.avg_win * g1
            + 2.0 * (terms.Ebar - terms.avg_E) * g1
            + 0.5 * (terms.Abar - terms.avg_A - terms.Cbar) * g1)


def residual_g2(st: CoupledState, terms: TermBundle, v=None) -> np.ndarray:
    t, g1, rho = st.torus, st.g1, st.rho
    vpair = terms.vpair if v is None else pair_potential(v, t)
    G = g1[:, None] * g1[None, :] * (1.0 - st.u2)
    mult = vpair - 2.0 * rho * terms.Kbar + rho**2 * terms.Lbar + terms.Rbar2
    return (-0.5 * pair_laplacian_sum(G, t) + mult * G
            + _win_pair(st.win, t, G) - 2.0 * terms.avg_win * G)


def energy(st: CoupledState, terms: TermBundle):
    return terms.avg_E + terms.avg_win


# --- best-effort coupled solver ----------------------------------------------

@dataclass(frozen=True)
class CoupledOptions:
    tol: float = 1e-7
    max_iter: int = 50
    max_sites: int = 64


@dataclass(eq=False)
class CoupledResult:
    state: CoupledState
    energy: float
    iterations: int
    res_g1: float
    res_g2: float
    res_g2_raw: float
    converged: bool
    history: list = field(default_factory=list)


def project_constraint(t: Torus, g1, u2) -> np.ndarray:
    """Rank-one row correction so that h^d Σ_y g₁(y)u₂(x,y) = 0, resymmetrized.

    Alternating the row correction with symmetrization converges
    geometrically; for g₁ ≡ 1 a single pass is exact.
    """
    w = g1 * t.dv
    tot = np.sum(w)
    for _ in range(200):
        s = u2 @ w
        u2 = u2 - s[:, None] / tot
        u2 = 0.5 * (u2 + u2.T)
        if np.max(np.abs(u2 @ w)) <= 1e-15 * max(1.0, float(np.max(np.abs(u2)))) * tot:
            break
    return u2


def multiplier_part(r2) -> np.ndarray:
    """Least-squares fit of λ(x) + λ(y) to a symmetric pair field.

    These are the directions the constraint h^d Σ_y g₁u₂ = 0 removes from
    the pair equation; for a TI state the fit is the constant mean shift.
    """
    N = r2.shape[0]
    rows = np.sum(r2, axis=1)
    S = np.sum(rows) / (2.0 * N)
    lam = (rows - S) / N
    return lam[:, None] + lam[None, :]


def projected_residuals(st: CoupledState, terms: TermBundle):
    r1 = residual_g1(st, terms)
    r2 = residual_g2(st, terms)
    return r1, r2 - multiplier_part(r2), r2


class _Param:
    """Maps a flat vector to a state: g₁ = normalized 1 + φ, u₂ from its upper
    triangle, projected onto the row constraint."""

    def __init__(self, torus, win, rho):
        self.t, self.win, self.rho = torus, win, rho
        self.iu = np.triu_indices(torus.Ns)

    def pack(self, st: CoupledState) -> np.ndarray:
        return np.concatenate([st.g1 - 1.0, st.u2[self.iu]])

    def unpack(self, p) -> CoupledState:
        t, N = self.t, self.t.Ns
        g1 = 1.0 + p[:N]
        g1 = g1 / (t.integral(g1) / t.V)
        u2 = np.zeros((N, N))
        u2[self.iu] = p[N:]
        u2 = u2 + np.triu(u2, 1).T
        return CoupledState(t, g1, project_constraint(t, g1, u2), self.win, self.rho)


def solve_coupled(v: Potential, rho: float, torus: Torus, win: WinOperator | None = None,
                  opts: CoupledOptions | None = None, init: CoupledState | None = None) -> CoupledResult:
    """Least-squares solve of (residual_g1, projected residual_g2).

    Frozen-coefficient fixed-point updates of u₂ are unstable away from
    translation invariance, so the whole system is minimized with a
    trust-region least-squares method and a finite-difference Jacobian.
    If the tolerance is not met the best iterate is attached to the raised
    NonConvergence as ``.result``.
    Intended for small lattices (``opts.max_sites``).
    """
    from scipy.optimize import least_squares

    opts = opts or CoupledOptions()
    win = win or ZeroWin()
    t = torus
    if not rho > 0:
        raise ValueError("rho must be positive")
    if t.Ns > opts.max_sites:
        raise ValueError(f"coupled solver limited to {opts.max_sites} sites (got {t.Ns})")
    vpair = pair_potential(v, t)
    vmax = float(np.max(np.abs(vpair)))
    par = _Param(t, win, rho)
    if init is None:
        init = CoupledState(t, np.ones(t.Ns), np.zeros((t.Ns, t.Ns)), win, rho)
    p0 = par.pack(CoupledState(t, np.asarray(init.g1, float), np.asarray(init.u2, float), win, rho))

    def evaluate(p):
        st = par.unpack(p)
        if np.any(st.g1 <= 0):
            raise PositivityLoss("g1 <= 0 during coupled iteration")
        terms = build_terms(st, vpair)
        r1, r2, raw = projected_residuals(st, terms)
        return st, terms, np.real(r1), np.real(r2), raw

    def fun(p):
        _, _, r1, r2, _ = evaluate(p)
        return np.concatenate([r1, r2[par.iu]]) / vmax

    def norms(p):
        st, terms, r1, r2, raw = evaluate(p)
        return st, terms, float(np.max(np.abs(r1))), float(np.max(np.abs(r2))), float(np.max(np.abs(raw)))

    st, terms, n1, n2, raw = norms(p0)
    history = [(n1, n2)]
    it = 0
    if not (n1 <= opts.tol * vmax and n2 <= opts.tol * vmax):
        out = least_squares(fun, p0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=opts.max_iter, x_scale="jac")
        it = int(out.nfev)
        st, terms, n1, n2, raw = norms(out.x)
        history.append((n1, n2))
    converged = n1 <= opts.tol * vmax and n2 <= opts.tol * vmax
    result = CoupledResult(st, float(np.real(energy(st, terms))), it, n1, n2, raw, converged, history)
    if not converged:
        err = NonConvergence(f"coupled solver stopped with res_g1={n1:.3e}, res_g2={n2:.3e}", history)
        err.result = result
        raise err
    return result
