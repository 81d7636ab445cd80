"""Periodic lattice fields: one-point fields, dense pair fields, ϖ operators.

A field on the torus is stored flat, one value per site, with sites in
C order of their integer coordinates m in {0..n-1}^d. The measure of a
site is h^d. Pair fields are dense N_s x N_s arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import TorusMismatch


def _workers():
    import os

    val = os.environ.get("SIMPLEGAS_THREADS")
    return int(val) if val else None


@dataclass(frozen=True)
class Torus:
    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        if self.n < 4 or self.n % 2:
            raise ValueError("n must be even and >= 4")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def V(self) -> float:
        return self.L**self.d

    @property
    def Ns(self) -> int:
        return self.n**self.d

    @property
    def dv(self) -> float:
        """Site measure h^d."""
        return self.h**self.d

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @cached_property
    def indices(self) -> np.ndarray:
        """Integer coordinates of every site, shape (N_s, d)."""
        grids = np.meshgrid(*([np.arange(self.n)] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @property
    def coords(self) -> np.ndarray:
        return self.indices * self.h

    @cached_property
    def momenta(self) -> np.ndarray:
        """Lattice momenta per site in FFT order, components in (-n/2, n/2]·2π/L."""
        m = np.fft.fftfreq(self.n, d=1.0 / self.n)
        m = np.where(m == -self.n // 2, self.n // 2, m)
        grids = np.meshgrid(*([m] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1) * (2.0 * np.pi / self.L)

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.momenta**2, axis=1)

    @cached_property
    def min_image(self) -> np.ndarray:
        m = self.indices
        return np.minimum(m, self.n - m) * self.h

    def distance_profile(self) -> np.ndarray:
        """Minimal-image |x| for each site (TI profile indexed by displacement)."""
        return np.sqrt(np.sum(self.min_image**2, axis=1))

    def flat_index(self, m) -> np.ndarray:
        m = np.mod(np.asarray(m), self.n)
        return np.ravel_multi_index(tuple(np.moveaxis(m, -1, 0)), self.shape)

    def difference_index(self, rows=None) -> np.ndarray:
        """idx[x, y] = site index of y - x, for x in ``rows``."""
        m = self.indices
        mx = m if rows is None else m[rows]
        return self.flat_index(m[None, :, :] - mx[:, None, :])

    # --- spectral helpers on flat arrays (last axis, or trailing d axes)
    def fft(self, f):
        f = np.asarray(f)
        lead = f.shape[:-1]
        g = sfft.fftn(f.reshape(lead + self.shape), axes=range(len(lead), len(lead) + self.d),
                      workers=_workers())
        return g.reshape(lead + (self.Ns,))

    def ifft(self, g):
        g = np.asarray(g)
        lead = g.shape[:-1]
        f = sfft.ifftn(g.reshape(lead + self.shape), axes=range(len(lead), len(lead) + self.d),
                       workers=_workers())
        return f.reshape(lead + (self.Ns,))

    def conv(self, a, b):
        """Circular convolution with measure: h^d Σ_y a(x-y) b(y)."""
        out = self.ifft(self.fft(a) * self.fft(b)) * self.dv
        return out.real if np.isrealobj(a) and np.isrealobj(b) else out

    def integral(self, f, axis=-1):
        return np.sum(f, axis=axis) * self.dv

    def mean(self, f, axis=-1):
        return np.sum(f, axis=axis) / self.Ns

    def plane_wave(self, m_int) -> np.ndarray:
        kvec = 2.0 * np.pi / self.L * np.asarray(m_int, dtype=float)
        return np.exp(1j * self.coords @ kvec)

    def ti_pair(self, profile) -> np.ndarray:
        """Pair field F(x, y) = p(x - y) from a displacement profile p."""
        p = np.asarray(profile)
        return p[self.difference_index().T]


@dataclass(frozen=True, eq=False)
class TorusField:
    torus: Torus
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != (self.torus.Ns,):
            raise ValueError(f"expected {self.torus.Ns} values, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("TorusField values must be finite")
        object.__setattr__(self, "values", vals)


SYMMETRIC_KINDS = {"u2", "Sbar", "Kbar", "Lbar", "Rbar2", "symmetric"}


@dataclass(frozen=True, eq=False)
class PairField:
    torus: Torus
    values: np.ndarray
    kind: str = "general"

    def __post_init__(self):
        vals = np.asarray(self.values)
        n = self.torus.Ns
        if vals.shape != (n, n):
            raise ValueError(f"expected ({n}, {n}) values, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("PairField values must be finite")
        if self.kind in SYMMETRIC_KINDS:
            scale = max(np.max(np.abs(vals)), 1e-300)
            if np.max(np.abs(vals - vals.T)) > 1e-12 * scale:
                raise ValueError(f"{self.kind} must be symmetric")
        object.__setattr__(self, "values", vals)


# --- single-particle operators ----------------------------------------------

class WinOperator:
    """Self-adjoint single-particle operator ϖ acting on the last axis."""

    def apply(self, torus: Torus, f):
        raise NotImplementedError

    def average(self, torus: Torus, g1) -> complex:
        """⟨ϖ⟩ = ∫(dy/V) ϖg₁(y)."""
        return torus.integral(self.apply(torus, g1)) / torus.V

    def integral_of(self, torus: Torus, F):
        """∫dy ϖ_y F(..., y) for each leading index."""
        return torus.integral(self.apply(torus, F))

    def is_zero(self) -> bool:
        return False


class ZeroWin(WinOperator):
    def apply(self, torus, f):
        return np.zeros_like(f)

    def integral_of(self, torus, F):
        return np.zeros(np.shape(F)[:-1])

    def is_zero(self) -> bool:
        return True

    def __repr__(self):
        return "ZeroWin()"


@dataclass(frozen=True, eq=False)
class ExternalPotential(WinOperator):
    v0: np.ndarray

    def apply(self, torus, f):
        return np.asarray(self.v0) * f


@dataclass(frozen=True, eq=False)
class PlaneWaveProjector(WinOperator):
    """ϖf = ε e^{ikx} h^d Σ_y e^{-iky} f(y), k = 2π m / L with integer m ≠ 0."""

    m: tuple
    eps: float

    def __post_init__(self):
        m = tuple(int(x) for x in self.m)
        if all(x == 0 for x in m):
            raise ValueError("plane-wave momentum must be nonzero")
        object.__setattr__(self, "m", m)

    def check(self, torus):
        if len(self.m) != torus.d:
            raise TorusMismatch("projector momentum has wrong dimension")

    def apply(self, torus, f):
        self.check(torus)
        phase = torus.plane_wave(self.m)
        amp = (np.asarray(f) @ np.conj(phase)) * torus.dv
        return self.eps * amp[..., None] * phase

    def integral_of(self, torus, F):
        # ∫dy e^{iky} = 0 for k ≠ 0 on the lattice
        return np.zeros(np.shape(F)[:-1])


@dataclass(frozen=True, eq=False)
class SymmetrizedProjector(WinOperator):
    """Real form ε/2 (P_k + P_{-k}) = ε(|c⟩⟨c| + |s⟩⟨s|), c, s the cosine/sine waves."""

    m: tuple
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "_p", PlaneWaveProjector(self.m, self.eps))
        object.__setattr__(self, "_q", PlaneWaveProjector(tuple(-x for x in self.m), self.eps))

    def apply(self, torus, f):
        out = 0.5 * (self._p.apply(torus, f) + self._q.apply(torus, f))
        if np.isrealobj(f):
            return out.real
        return out

    def imaginary_residue(self, torus, f) -> float:
        out = 0.5 * (self._p.apply(torus, f) + self._q.apply(torus, f))
        return float(np.max(np.abs(out.imag)))

    def integral_of(self, torus, F):
        return np.zeros(np.shape(F)[:-1])


def apply_win(w: WinOperator, f: TorusField) -> np.ndarray:
    return w.apply(f.torus, f.values)


def lattice_laplacian(f, torus: Torus | None = None) -> np.ndarray:
    """Spectral Laplacian: multiply Fourier coefficients by -|κ|²."""
    if isinstance(f, TorusField):
        torus, f = f.torus, f.values
    out = torus.ifft(-torus.k2 * torus.fft(f))
    return out.real if np.isrealobj(f) else out


def pair_laplacian(F, slot: str, torus: Torus | None = None) -> np.ndarray:
    if isinstance(F, PairField):
        torus, F = F.torus, F.values
    if slot == "y":
        return lattice_laplacian(F, torus)
    if slot == "x":
        return lattice_laplacian(np.asarray(F).T, torus).T
    raise ValueError("slot must be 'x' or 'y'")


def pair_laplacian_sum(F, torus: Torus) -> np.ndarray:
    """(Δ_x + Δ_y) F with one 2d-dimensional FFT."""
    F = np.asarray(F)
    n, d = torus.n, torus.d
    G = sfft.fftn(F.reshape(torus.shape * 2), workers=_workers())
    k2 = torus.k2.reshape(torus.shape)
    mult = -(k2.reshape(torus.shape + (1,) * d) + k2.reshape((1,) * d + torus.shape))
    out = sfft.ifftn(G * mult, workers=_workers()).reshape(F.shape)
    return out.real if np.isrealobj(F) else out


def weighted_pair_convolve(g1, F, G, torus: Torus | None = None) -> np.ndarray:
    """(F ∗̄ G)(x, y) = h^d Σ_z g₁(z) F(x, z) G(z, y)."""
    if isinstance(F, PairField):
        torus = F.torus
    g1 = g1.values if isinstance(g1, TorusField) else np.asarray(g1)
    F = F.values if isinstance(F, PairField) else np.asarray(F)
    G = G.values if isinstance(G, PairField) else np.asarray(G)
    return (F * (g1 * torus.dv)[None, :]) @ G


# --- serialization ---------------------------------------------------------

def field_to_csv(path, f: TorusField, header_lines=()):
    t = f.torus
    cols = ["site_index"] + [f"x{i + 1}" for i in range(t.d)] + ["value"]
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(cols) + "\n")
        X = t.coords
        for i in range(t.Ns):
            row = [str(i)] + [format(x, ".17g") for x in X[i]] + [format(float(np.real(f.values[i])), ".17g")]
            fh.write(",".join(row) + "\n")


def save_pair(path_base, F: PairField, extra=None):
    """Raw little-endian float64 row-major dump plus a one-line JSON sidecar."""
    t = F.torus
    meta = {"d": t.d, "n": t.n, "L": t.L, "kind": F.kind}
    if extra:
        meta.update(extra)
    np.ascontiguousarray(F.values, dtype="<f8").tofile(f"{path_base}.bin")
    with open(f"{path_base}.json", "w") as fh:
        fh.write(json.dumps(meta, sort_keys=True) + "\n")


def load_pair(path_base) -> PairField:
    with open(f"{path_base}.json") as fh:
        meta = json.loads(fh.readline())
    t = Torus(int(meta["d"]), int(meta["n"]), float(meta["L"]))
    data = np.fromfile(f"{path_base}.bin", dtype="<f8")
    if data.size != t.Ns**2:
        raise ValueError(f"{path_base}.bin has {data.size} values, expected {t.Ns ** 2}")
    return PairField(t, data.reshape(t.Ns, t.Ns), meta.get("kind", "general"))
