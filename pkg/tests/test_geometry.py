import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heatlayer.errors import ConfigurationError, DomainError
from heatlayer.geometry import build_boundary, outward_normal, straighten, unstraighten


def parabola(y):
    return 0.5 * np.atleast_2d(y)[:, 0] ** 2


def parabola_grad(y):
    return np.atleast_2d(y)[:, :1].copy()


def test_circle_weights_sum_to_circumference():
    _, quad = build_boundary("circle", 64)
    assert abs(quad.weights.sum() - 2 * np.pi) <= 1e-10


@pytest.mark.parametrize("radius", [1.0, 2.5])
def test_circle_normals_are_radial(radius):
    _, quad = build_boundary("circle", 40, radius=radius)
    np.testing.assert_allclose(np.linalg.norm(quad.normals, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(quad.normals, quad.nodes / radius, atol=1e-12)


def test_sphere_area_converges_spectrally():
    errs = []
    for r in (4, 8, 16):
        _, quad = build_boundary("sphere", r)
        errs.append(abs(quad.weights.sum() - 4 * np.pi))
    # Gauss in theta times trapezoid in phi: error drops far faster than any fixed power
    assert errs[1] < 1e-2 * errs[0]
    assert errs[2] <= 1e-12


def test_sphere_normals_unit_and_radial():
    _, quad = build_boundary("sphere", 10, radius=1.5)
    np.testing.assert_allclose(np.linalg.norm(quad.normals, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(quad.normals, quad.nodes / 1.5, atol=1e-12)


@pytest.mark.parametrize("kind,n", [("circle", 3), ("sphere", 2), ("slab", 4), ("torus", 3)])
def test_unsupported_kind_dimension(kind, n):
    with pytest.raises(ConfigurationError):
        build_boundary(kind, 8, n=n)


def test_resolution_lower_bound():
    with pytest.raises(ConfigurationError):
        build_boundary("circle", 3)


def test_graph_requires_function():
    with pytest.raises(ConfigurationError):
        build_boundary("graph", 8)


def test_outward_normal_examples():
    b, _ = build_boundary("circle", 16, radius=2.0)
    np.testing.assert_allclose(outward_normal(b, [2.0, 0.0]), [1.0, 0.0], atol=1e-15)
    for n in (2, 3):
        slab, _ = build_boundary("slab", 8, n=n)
        xi = np.zeros(n)
        xi[0] = 0.7
        expected = np.zeros(n)
        expected[-1] = -1.0
        np.testing.assert_array_equal(outward_normal(slab, xi), expected)


def test_outward_normal_graph_parabola():
    b, _ = build_boundary("graph", 8, graph_function=parabola, graph_gradient=parabola_grad)
    # (f'(y), -1) / sqrt(1 + f'(y)^2): at y = 0 -> (0, -1), at y = 1 -> (1, -1)/sqrt(2)
    np.testing.assert_allclose(outward_normal(b, [0.0, 0.0]), [0.0, -1.0], atol=1e-15)
    np.testing.assert_allclose(outward_normal(b, [1.0, 0.5]), [2**-0.5, -(2**-0.5)], atol=1e-15)


def test_outward_normal_off_surface():
    b, _ = build_boundary("circle", 16)
    with pytest.raises(DomainError):
        outward_normal(b, [0.5, 0.0])
    with pytest.raises(DomainError):
        outward_normal(b, [1.0, 0.0, 0.0])


def test_graph_weights_carry_surface_factor():
    b, quad = build_boundary("graph", 16, graph_function=parabola, graph_gradient=parabola_grad, half_width=2.0)
    h = 4.0 / 16
    y = quad.nodes[:, 0]
    np.testing.assert_allclose(quad.weights, h * np.sqrt(1 + y**2), rtol=1e-14)
    np.testing.assert_allclose(quad.nodes[:, 1], 0.5 * y**2, rtol=1e-14)


def test_graph_mean_curvature_from_hessian():
    # parabola y^2/2 at its vertex has curvature 1; self coefficient is -H/2
    b, quad = build_boundary("graph", 17, graph_function=parabola, graph_gradient=parabola_grad, half_width=2.0)
    centre = np.argmin(np.abs(quad.nodes[:, 0]))
    assert quad.self_coefficient[centre] == pytest.approx(-0.5, rel=1e-4)


@pytest.mark.parametrize("kind,n,res", [("circle", 2, 64), ("sphere", 3, 12), ("slab", 3, 8)])
def test_nodes_distinct(kind, n, res):
    _, quad = build_boundary(kind, res, n=n)
    d = np.linalg.norm(quad.nodes[:, None] - quad.nodes[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert d.min() > 1e-12


@pytest.mark.parametrize("kind,res", [("circle", 48), ("sphere", 10)])
def test_partition_of_unity(kind, res, rng):
    b, quad = build_boundary(kind, res)
    beta = b.partition_weights(quad.nodes)
    assert beta.shape[1] == len(b.charts)
    assert np.all(beta >= 0)
    np.testing.assert_allclose(beta.sum(axis=1), 1.0, atol=1e-12)
    pts = rng.standard_normal((200, b.n))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    np.testing.assert_allclose(b.partition_weights(pts).sum(axis=1), 1.0, atol=1e-12)


def test_membership_tolerance_scales_with_diameter():
    b, _ = build_boundary("circle", 8, radius=3.0)
    assert b.tolerance == pytest.approx(1e-9 * 6.0)
    assert b.on_surface([3.0 + 1e-9, 0.0])
    assert not b.on_surface([3.0 + 1e-7, 0.0])
    assert b.is_interior([0.0, 0.0]) and not b.is_interior([3.0, 0.0])


def test_circle_transfer_exact_for_band_limited():
    b, quad = build_boundary("circle", 16)
    fine, P = b.transfer_matrix(quad, 4)
    f = lambda x: np.cos(3 * np.arctan2(x[:, 1], x[:, 0])) + 0.2  # noqa: E731
    np.testing.assert_allclose(P @ f(quad.nodes), f(fine.nodes), atol=1e-13)


def test_sphere_transfer_interpolates_smooth_function():
    f = lambda x: np.exp(0.3 * x[:, 0]) * (1 + x[:, 2] ** 2)  # noqa: E731
    errs = []
    for r in (8, 12):
        b, quad = build_boundary("sphere", r)
        fine, P = b.transfer_matrix(quad, 2)
        errs.append(np.max(np.abs(P @ f(quad.nodes) - f(fine.nodes))))
    # the fine polar nodes nearest the poles lie outside the coarse Gauss nodes
    assert errs[1] < 1e-4 and errs[1] < 0.2 * errs[0]


def test_straighten_examples():
    b, _ = build_boundary("slab", 8)
    np.testing.assert_array_equal(straighten(b.charts[0], [1.0, 2.0]), [1.0, 2.0])
    lin, _ = build_boundary(
        "graph", 8, graph_function=lambda y: np.atleast_2d(y)[:, 0], graph_gradient=lambda y: np.ones((len(np.atleast_2d(y)), 1))
    )
    np.testing.assert_array_equal(straighten(lin.charts[0], [1.0, 3.0]), [1.0, 2.0])


@given(
    coeffs=st.lists(st.floats(-2, 2), min_size=3, max_size=3),
    y=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
)
def test_straighten_round_trip(coeffs, y):
    a, b_, c = coeffs

    def f(yp):
        yp = np.atleast_2d(yp)
        return a * yp[:, 0] + b_ * np.sin(yp[:, 1]) + c * yp[:, 0] * yp[:, 1]

    def grad(yp):
        yp = np.atleast_2d(yp)
        return np.column_stack([a + c * yp[:, 1], b_ * np.cos(yp[:, 1]) + c * yp[:, 0]])

    b, _ = build_boundary("graph", 4, n=3, graph_function=f, graph_gradient=grad)
    chart = b.charts[0]
    y = np.array(y)
    np.testing.assert_allclose(unstraighten(chart, straighten(chart, y)), y, atol=1e-14, rtol=0)
    z = straighten(chart, y)
    assert z[2] == pytest.approx(y[2] - f(y[:2])[0], abs=1e-14)


@given(st.integers(4, 80), st.floats(0.2, 5.0))
def test_circle_normals_unit_property(m, radius):
    _, quad = build_boundary("circle", m, radius=radius)
    assert np.max(np.abs(np.linalg.norm(quad.normals, axis=1) - 1.0)) <= 1e-12
    assert abs(quad.weights.sum() - 2 * np.pi * radius) <= 1e-10 * radius
