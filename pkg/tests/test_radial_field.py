import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import radial_convolution
from simplegas.errors import GridMismatch
from simplegas.radial_field import (RadialFn, RadialGrid, convolve, fourier, from_function, integrate,
                                    inner, inverse_fourier)

GAUSS = RadialGrid(r_max=12.0, n=512)
EXPG = RadialGrid(r_max=40.0, n=2048)


def rel(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


def test_grid_nodes():
    g = RadialGrid(10.0, 16)
    assert np.allclose(np.diff(g.r), g.dr) and g.dr > 0
    assert np.allclose(np.diff(g.k), g.dk) and g.dk > 0
    assert g.r[0] == pytest.approx(0.5 * g.dr) and g.k[0] == pytest.approx(0.5 * np.pi / 10.0)
    assert g.r.size == g.k.size == 16


@pytest.mark.parametrize("kw", [dict(n=4), dict(n=7.5), dict(r_max=0.0), dict(r_max=-1.0)])
def test_grid_rejects(kw):
    with pytest.raises(ValueError):
        RadialGrid(**{"r_max": 1.0, "n": 16, **kw})


def test_fn_invariants():
    with pytest.raises(ValueError):
        RadialFn(GAUSS, np.zeros(3))
    vals = np.zeros(GAUSS.n)
    vals[2] = np.nan
    with pytest.raises(ValueError):
        RadialFn(GAUSS, vals)
    f = from_function(GAUSS, np.exp)
    with pytest.raises(GridMismatch):
        f + from_function(RadialGrid(12.0, 256), np.exp)
    with pytest.raises(GridMismatch):
        f + fourier(f)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_gaussian_pair():
    f = from_function(GAUSS, lambda r: np.exp(-r * r))
    exact = np.pi**1.5 * np.exp(-GAUSS.k**2 / 4)
    fh = fourier(f)
    assert fh.dual
    assert rel(fh.values, exact) <= 1e-6


@pytest.mark.parametrize("n", [512, 2048])
def test_exponential_pair(n):
    # relative to the sup norm: the k^-4 tail aliases near the top of the dual grid
    g = RadialGrid(40.0, n)
    f = from_function(g, lambda r: np.exp(-r))
    exact = 8 * np.pi / (1 + g.k**2) ** 2
    assert rel(fourier(f).values, exact) <= 1e-6


def test_zero_transforms():
    z = RadialFn(GAUSS, np.zeros(GAUSS.n))
    assert not np.any(fourier(z).values)
    assert not np.any(inverse_fourier(fourier(z)).values)
    assert integrate(z) == 0.0
    assert not np.any(convolve(from_function(GAUSS, np.exp), z).values)


@pytest.mark.parametrize("func,grid", [(lambda r: np.exp(-r), EXPG), (lambda r: np.exp(-r * r), GAUSS)])
def test_round_trip(func, grid):
    f = from_function(grid, func)
    back = inverse_fourier(fourier(f))
    assert not back.dual
    assert rel(back.values, f.values) <= 1e-6


def test_inverse_of_gaussian_transform():
    g = from_function(GAUSS, lambda k: np.pi**1.5 * np.exp(-k * k / 4), dual=True)
    assert rel(inverse_fourier(g).values, np.exp(-GAUSS.r**2)) <= 1e-6


def test_gaussian_self_convolution():
    f = from_function(GAUSS, lambda r: np.exp(-r * r))
    exact = (np.pi / 2) ** 1.5 * np.exp(-GAUSS.r**2 / 2)
    assert rel(convolve(f, f).values, exact) <= 1e-5


def test_convolution_matches_quadrature_oracle():
    grid = RadialGrid(40.0, 2048)
    fexp = lambda r: np.exp(-r)  # noqa: E731
    fgau = lambda r: np.exp(-r * r)  # noqa: E731
    c = convolve(from_function(grid, fexp), from_function(grid, fgau))
    for j in (12, 25, 51, 76, 128):
        x = grid.r[j]
        ref = radial_convolution(lambda r: float(np.exp(-r)), lambda r: float(np.exp(-r * r)), x)
        assert abs(c.values[j] / ref - 1) <= 1e-6, x


def test_convolution_is_transform_product():
    f = from_function(EXPG, lambda r: np.exp(-r))
    h = from_function(EXPG, lambda r: np.exp(-2 * r) * (1 + r))
    lhs = fourier(convolve(f, h)).values
    rhs = fourier(f).values * fourier(h).values
    assert rel(lhs, rhs) <= 1e-10
    assert rel(convolve(f, h).values, convolve(h, f).values) <= 1e-12


def test_integrals():
    f = from_function(EXPG, lambda r: np.exp(-r))
    assert integrate(f) == pytest.approx(8 * np.pi, rel=1e-6)
    # k → 0 limit of the transform: f̂ is even in k, extrapolate in k² from the first nodes
    f0 = np.polyfit(EXPG.k[:4] ** 2, fourier(f).values[:4], 3)[-1]
    assert f0 == pytest.approx(integrate(f), rel=1e-6)


def test_parseval():
    f = from_function(EXPG, lambda r: np.exp(-r))
    h = from_function(EXPG, lambda r: np.exp(-1.5 * r))
    assert inner(f, h) == pytest.approx(inner(fourier(f), fourier(h)), rel=1e-6)
    # closed form ∫ e^{-2.5 r} dx = 8π/2.5³
    assert inner(f, h) == pytest.approx(8 * np.pi / 2.5**3, rel=1e-6)


def test_csv(tmp_path):
    f = from_function(RadialGrid(2.0, 8), lambda r: r * r)
    f.to_csv(tmp_path / "f.csv", ["hash abc"])
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "# hash abc" and lines[1] == "r,value"
    assert float(lines[2].split(",")[1]) == f.values[0]
    fourier(f).to_csv(tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_text().splitlines()[0] == "k,value"


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 3.0), st.floats(0.5, 3.0))
def test_linearity(a, b, s1, s2):
    f = from_function(EXPG, lambda r: np.exp(-s1 * r))
    g = from_function(EXPG, lambda r: np.exp(-s2 * r * r))
    lhs = fourier(a * f + b * g).values
    rhs = a * fourier(f).values + b * fourier(g).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(rhs)))
    lin = inverse_fourier(fourier(a * f + b * g)).values
    assert np.max(np.abs(lin - (a * inverse_fourier(fourier(f)).values + b * inverse_fourier(fourier(g)).values))) \
        <= 1e-12 * (1 + np.max(np.abs(lin)))
    assert integrate(a * f + b * g) == pytest.approx(a * integrate(f) + b * integrate(g), abs=1e-10)
