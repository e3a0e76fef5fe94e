import math

import numpy as np
import pytest

import geoxray as gx
from geoxray.grid import ScalarField2D, gaussian_curvature, make_cutoff, metric_laplacian, smoothstep


def test_grid_geometry():
    g = gx.Grid2D(129)
    assert g.spacing == pytest.approx(2.0 / 128)
    ax = g.axis()
    assert ax[0] == -1.0 and ax[-1] == 1.0
    with pytest.raises(ValueError):
        gx.Grid2D(8)


def test_field_shape_and_finite(grid64):
    with pytest.raises(ValueError):
        ScalarField2D(grid64, np.zeros((5, 5)))
    bad = np.zeros((64, 64))
    bad[3, 3] = np.inf
    with pytest.raises(ValueError):
        ScalarField2D(grid64, bad)


def test_bilinear_is_exact_on_bilinear_functions(grid64):
    X, Y = grid64.mesh()
    f = ScalarField2D(grid64, 2.0 + 3.0 * X - 1.5 * Y + 0.7 * X * Y)
    rng = np.random.default_rng(0)
    xs = rng.uniform(-1, 1, 200)
    ys = rng.uniform(-1, 1, 200)
    expected = 2.0 + 3.0 * xs - 1.5 * ys + 0.7 * xs * ys
    assert np.allclose(f.evaluate(xs, ys), expected, atol=1e-12)


def test_make_speed_values(grid129):
    unit = gx.make_speed("unit", grid129)
    assert unit.speed.evaluate(0.3, 0.4) == pytest.approx(1.0, abs=1e-14)

    c1 = gx.make_speed("c1", grid129)
    for x in (-0.5, 0.0, 0.25, 0.875):
        assert c1.speed.evaluate(x, 0.0) == pytest.approx(math.exp(0.3), rel=2e-4)

    c2 = gx.make_speed("c2", grid129)
    expected = math.exp(0.3 * math.exp(-0.5))
    assert c2.speed.evaluate(0.0, 0.12) == pytest.approx(expected, rel=2e-3)

    with pytest.raises(ValueError):
        gx.make_speed("c9", grid129)


def test_log_speed_consistency(grid129):
    m = gx.make_speed("c3", grid129)
    assert np.max(np.abs(np.exp(m.log_speed.values) - m.speed.values)) < 1e-12


def test_curvature_flat_is_zero(metric_unit):
    K = gaussian_curvature(metric_unit)
    assert np.max(np.abs(K.values)) < 1e-12


def test_curvature_c1_origin_matches_symbolic(metric_c1):
    # symbolic oracle: K = -(d2/dx2 + d2/dy2) ln c / c^2 at the origin
    sympy = pytest.importorskip("sympy")
    x, y = sympy.symbols("x y")
    ln_c = sympy.Rational(3, 10) * sympy.exp(-(y ** 2) / (2 * sympy.Rational(1, 4) ** 2))
    lap = sympy.diff(ln_c, x, 2) + sympy.diff(ln_c, y, 2)
    K_exact = float((-lap * sympy.exp(-2 * ln_c)).subs({x: 0, y: 0}))
    K = gaussian_curvature(metric_c1)
    assert K.evaluate(0.0, 0.0) == pytest.approx(K_exact, rel=1e-3)
    # guided core: positive curvature on the ridge, negative on the flanks
    assert K.evaluate(0.0, 0.0) > 0
    assert K.evaluate(0.0, 0.45) < 0


def test_curvature_c3_against_closed_form(metric_c3):
    # symbolic oracle for the two-lens profile, including the far field
    sympy = pytest.importorskip("sympy")
    x, y = sympy.symbols("x y")
    s3 = sympy.Rational(1, 4)
    amp = sympy.Rational(65, 100)
    ln_c = amp * (
        sympy.exp(-(x ** 2 + (y - sympy.Rational(3, 10)) ** 2) / (2 * s3 ** 2))
        + sympy.exp(-(x ** 2 + (y + sympy.Rational(3, 10)) ** 2) / (2 * s3 ** 2))
    )
    K_expr = -(sympy.diff(ln_c, x, 2) + sympy.diff(ln_c, y, 2)) * sympy.exp(-2 * ln_c)
    K = gaussian_curvature(metric_c3)
    for px, py in [(0.0, 0.3), (0.0, 0.0), (0.6, 0.0), (0.9, 0.0)]:
        want = float(K_expr.subs({x: px, y: py}))
        assert K.evaluate(px, py) == pytest.approx(want, rel=5e-3, abs=5e-3)
    # the lens curvature decays away from the pair of bumps
    assert abs(K.evaluate(0.9, 0.0)) < 0.1 * abs(K.evaluate(0.6, 0.0))


def test_curvature_second_order_convergence():
    # node-aligned grids: n and 2n-1 share every other node
    vals = {}
    for n in (65, 129, 257):
        m = gx.make_speed("c1", gx.Grid2D(n))
        vals[n] = gaussian_curvature(m).values
    # restrict to common interior nodes of the coarse grid
    e1 = np.max(np.abs(vals[65][1:-1, 1:-1] - vals[129][2:-2:2, 2:-2:2]))
    e2 = np.max(np.abs(vals[129][1:-1, 1:-1] - vals[257][2:-2:2, 2:-2:2]))
    assert 3.0 < e1 / e2 < 5.5


def test_curvature_refuses_coarse_grid():
    m = gx.make_speed("c1", gx.Grid2D(16))
    with pytest.raises(ValueError):
        gaussian_curvature(m)


def test_metric_laplacian_quadratic(metric_unit):
    g = metric_unit.grid
    X, Y = g.mesh()
    u = ScalarField2D(g, X ** 2 + Y ** 2)
    out = metric_laplacian(metric_unit, u)
    # interior nodes away from the disk boundary: five-point is exact on quadratics
    r = np.hypot(X, Y)
    sel = r < 0.8
    sel[0, :] = sel[-1, :] = sel[:, 0] = sel[:, -1] = False
    assert np.allclose(out.values[sel], 4.0, atol=1e-9)


def test_metric_laplacian_zero_and_mismatch(metric_c1, grid64):
    g = metric_c1.grid
    z = ScalarField2D(g, np.zeros((g.n, g.n)))
    assert np.all(metric_laplacian(metric_c1, z).values == 0.0)
    with pytest.raises(ValueError):
        metric_laplacian(metric_c1, ScalarField2D(grid64, np.zeros((64, 64))))


def test_metric_laplacian_even_symmetry(metric_c1):
    g = metric_c1.grid
    X, Y = g.mesh()
    u = ScalarField2D(g, np.cos(2 * X) * np.exp(-(Y ** 2)))
    out = metric_laplacian(metric_c1, u).values
    scale = np.max(np.abs(out))
    assert np.max(np.abs(out - out[::-1, :])) < 1e-12 * scale  # even in y
    assert np.max(np.abs(out - out[:, ::-1])) < 1e-12 * scale  # even in x


def test_metric_laplacian_weighted_symmetry(metric_c1):
    # <lap u, v c^-2> == <u c^-2, lap v> for compactly supported u, v
    g = metric_c1.grid
    X, Y = g.mesh()
    rng = np.random.default_rng(3)
    bump = np.exp(-((X ** 2 + Y ** 2)) / (2 * 0.3 ** 2))
    u = ScalarField2D(g, bump * rng.standard_normal((g.n, g.n)))
    v = ScalarField2D(g, bump * rng.standard_normal((g.n, g.n)))
    c2 = metric_c1.speed.values ** 2
    lu = metric_laplacian(metric_c1, u).values
    lv = metric_laplacian(metric_c1, v).values
    lhs = np.sum(lu * v.values / c2)
    rhs = np.sum(u.values / c2 * lv)
    scale = max(np.abs(lhs), np.abs(rhs), 1.0)
    assert abs(lhs - rhs) / scale < 1e-10


def test_cutoff_profile(grid129):
    chi = make_cutoff(grid129)
    assert chi.evaluate(0.0, 0.0) == 1.0
    assert chi.evaluate(0.99, 0.0) == 0.0
    assert np.all(chi.values >= 0.0) and np.all(chi.values <= 1.0)
    # monotone along rays
    r = np.linspace(0, 0.999, 400)
    vals = chi.evaluate(r * np.cos(0.7), r * np.sin(0.7))
    assert np.all(np.diff(vals) <= 1e-12)
    with pytest.raises(ValueError):
        make_cutoff(grid129, 0.9, 0.8)


def test_smoothstep_c2_endpoints():
    t = np.array([0.0, 1.0])
    assert np.allclose(smoothstep(t), [0.0, 1.0])
    # derivative and second derivative vanish at both joins
    eps = 1e-5
    for edge in (0.0, 1.0):
        d1 = (smoothstep(edge + eps) - smoothstep(edge - eps)) / (2 * eps)
        assert abs(d1) < 1e-8


def test_field_binary_roundtrip(tmp_path, grid64):
    rng = np.random.default_rng(1)
    f = ScalarField2D(grid64, rng.standard_normal((64, 64)))
    p = tmp_path / "f.bin"
    f.to_binary(p)
    f2 = ScalarField2D.from_binary(p)
    assert f2.grid.n == 64
    assert np.array_equal(f.values, f2.values)


def test_field_csv_shape(tmp_path, grid64):
    f = ScalarField2D(grid64, np.arange(64 * 64, dtype=float).reshape(64, 64))
    p = tmp_path / "f.csv"
    f.to_csv(p)
    back = np.loadtxt(p, delimiter=",")
    assert np.array_equal(back, f.values)
