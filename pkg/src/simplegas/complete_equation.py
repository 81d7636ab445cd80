"""Translation-invariant complete equation on the torus.

    -Δu = (1-u)(v - 2ρK + ρ²L),   K = u*S,   S = (1-u)v,
    L = u*u*S - 2u*(u(u*S)) + ½∫dydz u(y)u(z-x)u(z)u(y-x)S(z-y).

Profiles are TorusFields indexed by displacement. The solver treats the
multiplicative part of W = v - 2ρK + ρ²L implicitly: each outer step solves
the linear problem (-Δ + W_n) u = W_n - c, where c is the κ=0 defect,
with conjugate gradients preconditioned by (-Δ + mean W_n)^{-1}.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import NonConvergence
from .potentials import Potential, sample_torus
from .torus_field import Torus, lattice_laplacian

log = logging.getLogger(__name__)


def eval_K(torus: Torus, u, S) -> np.ndarray:
    return torus.conv(u, S)


def eval_term3(torus: Torus, u, S, chunk: int | None = None) -> np.ndarray:
    """term3(x) = ½ h^{2d} Σ_{y,z} u(y)u(y-x)u(z)u(z-x)S(z-y).

    For each x, with H_x(y) = u(y)u(y-x), the double sum is
    (1/N) Σ_κ |Ĥ_x(κ)|² Re Ŝ(κ) (S real).
    """
    N = torus.Ns
    u = np.asarray(u, dtype=float)
    Sh = torus.fft(np.asarray(S, dtype=float)).real
    chunk = chunk or max(1, min(N, 2**22 // N))
    out = np.empty(N)
    for s in range(0, N, chunk):
        rows = np.arange(s, min(s + chunk, N))
        # difference_index: idx[x, y] = y - x
        H = u[None, :] * u[torus.difference_index(rows)]
        Hh = torus.fft(H)
        out[rows] = (np.abs(Hh) ** 2) @ Sh
    return 0.5 * torus.dv**2 * out / N


def eval_L(torus: Torus, u, S, parts: bool = False):
    uS = torus.conv(u, S)
    t1 = torus.conv(u, uS)
    t2 = -2.0 * torus.conv(u, u * uS)
    t3 = eval_term3(torus, u, S)
    if parts:
        return t1, t2, t3
    return t1 + t2 + t3


def kernel_W(torus: Torus, rho: float, vprof, u):
    S = (1.0 - u) * vprof
    K = eval_K(torus, u, S)
    L = eval_L(torus, u, S)
    return vprof - 2.0 * rho * K + rho**2 * L, K, L


@dataclass(frozen=True)
class CompleteOptions:
    tol: float = 1e-9
    alpha: float = 1.0
    max_iter: int = 500
    mode0: str = "zero-mean"
    cg_tol: float = 1e-13


@dataclass(eq=False)
class CompleteSolution:
    torus: Torus
    u: np.ndarray
    e: float
    rho: float
    iterations: int
    residual: float
    vprof: np.ndarray
    mode0: str
    mean_shift: float
    history: list = field(default_factory=list)

    def summary(self) -> dict:
        t = self.torus
        return {"d": t.d, "n": t.n, "L": t.L, "rho": self.rho, "e": self.e,
                "iterations": self.iterations, "residual": self.residual,
                "mode0": self.mode0, "mean_shift": self.mean_shift}


def energy_of(torus: Torus, rho: float, vprof, u) -> float:
    return 0.5 * rho * float(torus.integral(vprof * (1.0 - u)))


def residual_profile(torus: Torus, rho: float, vprof, u) -> np.ndarray:
    """(-Δ + W)(1-u) = Δu + (1-u)W, the defect of the complete equation."""
    W, _, _ = kernel_W(torus, rho, vprof, u)
    return lattice_laplacian(u, torus) + (1.0 - u) * W


def residual_complete(torus: Torus, rho: float, vprof, u, project_mean: bool = True) -> float:
    """sup-norm of the defect; with ``project_mean`` the constant κ=0 part
    (the mean shift imposed by the zero-mean constraint) is removed."""
    r = residual_profile(torus, rho, vprof, u)
    if project_mean:
        r = r - np.mean(r)
    return float(np.max(np.abs(r)))


def _linear_solve(torus: Torus, W, rhs, tol):
    """Solve (-Δ + W) x = rhs by CG with a Fourier preconditioner."""
    shift = max(float(np.mean(W)), 1e-3 * float(np.max(np.abs(W))), 1e-12)
    k2 = torus.k2

    def mv(x):
        return -lattice_laplacian(x, torus) + W * x

    def pc(x):
        return torus.ifft(torus.fft(x) / (k2 + shift)).real

    N = torus.Ns
    A = LinearOperator((N, N), matvec=mv, dtype=float)
    M = LinearOperator((N, N), matvec=pc, dtype=float)
    x, info = cg(A, rhs, rtol=tol, atol=0.0, M=M, maxiter=20 * N)
    if info != 0:
        raise NonConvergence(f"inner CG solve failed (info={info})")
    return x


def _step(torus, rho, vprof, u, mode0, cg_tol):
    W, _, _ = kernel_W(torus, rho, vprof, u)
    x1 = _linear_solve(torus, W, W, cg_tol)
    if mode0 == "free":
        return x1, 0.0
    x0 = _linear_solve(torus, W, np.ones_like(W), cg_tol)
    c = float(np.sum(x1) / np.sum(x0))
    # u = x1 - c x0 has zero mean and solves -Δu + W u = W - c
    return x1 - c * x0, c


def solve_complete(rho: float, v: Potential, torus: Torus,
                   opts: CompleteOptions | None = None, u0=None) -> CompleteSolution:
    opts = opts or CompleteOptions()
    if not rho > 0:
        raise ValueError("rho must be positive")
    if opts.mode0 not in ("zero-mean", "free"):
        raise ValueError("mode0 must be 'zero-mean' or 'free'")
    vprof = sample_torus(v, torus)
    u = np.zeros(torus.Ns) if u0 is None else np.array(u0, dtype=float)
    if not np.any(vprof):
        return CompleteSolution(torus, u * 0.0, 0.0, rho, 0, 0.0, vprof, opts.mode0, 0.0)
    history = []
    alpha = opts.alpha
    prev = np.inf
    c = 0.0
    for it in range(1, opts.max_iter + 1):
        try:
            cand, c = _step(torus, rho, vprof, u, opts.mode0, opts.cg_tol)
        except NonConvergence as exc:
            raise NonConvergence(f"complete equation iteration broke down at step {it}: {exc}",
                                 history) from exc
        change = float(np.max(np.abs(cand - u)))
        history.append(change)
        log.debug("complete it=%d change=%.3e alpha=%g", it, change, alpha)
        if change <= opts.tol:
            u = cand
            break
        if change > prev and alpha > 0.05:
            alpha *= 0.5
        prev = change
        u = (1.0 - alpha) * u + alpha * cand
    else:
        raise NonConvergence(f"complete equation did not converge in {opts.max_iter} steps", history)
    if np.any(1.0 - u < 0):
        log.warning("1 - u < 0 at %d sites", int(np.sum(1.0 - u < 0)))
    e = energy_of(torus, rho, vprof, u)
    res_vec = residual_profile(torus, rho, vprof, u)
    shift = float(np.mean(res_vec))
    res = float(np.max(np.abs(res_vec - shift))) if opts.mode0 == "zero-mean" else float(np.max(np.abs(res_vec)))
    return CompleteSolution(torus, u, e, rho, it, res, vprof, opts.mode0, shift, history)
