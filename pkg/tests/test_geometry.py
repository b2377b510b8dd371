import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hookean_mkv.errors import BeadOutsideDomain, ConfigError, PointNotOnBoundary
from hookean_mkv.fokker_planck import Maxwellian
from hookean_mkv.geometry import (ConfigurationDomain, ConvexDomain, center_of_mass, outward_normal,
                                  signed_distance, specular_reflect)

SQUARE = ConvexDomain.box([-1, -1], [1, 1])
finite = st.floats(-10, 10, allow_nan=False)


def test_signed_distance_examples():
    assert signed_distance(SQUARE, [0, 0]) == -1.0
    assert signed_distance(SQUARE, [1, 0.3]) == 0.0
    assert signed_distance(ConvexDomain.disk(2.0), [3, 0]) == 1.0


def test_signed_distance_outside_corner():
    assert signed_distance(SQUARE, [2, 2]) == pytest.approx(np.sqrt(2))


def test_box_is_recentred():
    dom = ConvexDomain.box([0, 2], [4, 3])
    np.testing.assert_allclose(dom.lo, [-2, -0.5])
    np.testing.assert_allclose(dom.hi, [2, 0.5])
    np.testing.assert_allclose(dom.shift, [2, 2.5])
    assert dom.to_config()["extents"] == [[0, 4], [2, 3]]


@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.1, 5))
def test_centroid_distance_is_half_min_side(a, b, c):
    dom = ConvexDomain.box([0, 0, 0], [a, b, c])
    assert signed_distance(dom, np.zeros(3)) == pytest.approx(-min(a, b, c) / 2, rel=1e-12)


@given(arrays(float, (2,), elements=finite), arrays(float, (2,), elements=finite))
def test_signed_distance_is_1_lipschitz(z1, z2):
    for dom in (SQUARE, ConvexDomain.disk(1.5)):
        gap = abs(signed_distance(dom, z1) - signed_distance(dom, z2))
        assert gap <= np.linalg.norm(z1 - z2) + 1e-12


def test_outward_normal_examples():
    np.testing.assert_array_equal(outward_normal(SQUARE, [1, 0]), [1, 0])
    np.testing.assert_array_equal(outward_normal(ConvexDomain.disk(1.0), [0, -1]), [0, -1])
    np.testing.assert_array_equal(outward_normal(SQUARE, [-1, 0.5]), [-1, 0])


def test_outward_normal_corner_tie_goes_to_first_axis():
    np.testing.assert_array_equal(outward_normal(SQUARE, [1, 1]), [1, 0])
    np.testing.assert_array_equal(outward_normal(SQUARE, [-1, -1]), [-1, 0])


def test_outward_normal_rejects_interior_point():
    with pytest.raises(PointNotOnBoundary):
        outward_normal(SQUARE, [0.5, 0.0])


@given(st.floats(0, 2 * np.pi))
def test_disk_normal_is_unit_and_outward(theta):
    z = 1.7 * np.array([np.cos(theta), np.sin(theta)])
    n = outward_normal(ConvexDomain.disk(1.7), z)
    assert np.linalg.norm(n) == pytest.approx(1.0)
    assert signed_distance(ConvexDomain.disk(1.7), z + 1e-3 * n) > 0


def test_specular_reflect_examples():
    v = np.array([[0.0, 0.0], [-1.0, 2.0]])
    np.testing.assert_array_equal(specular_reflect(v, 1, [1, 0])[1], [1, 2])
    tang = np.array([[0.0, 5.0]])
    np.testing.assert_array_equal(specular_reflect(tang, 0, [1, 0]), tang)
    out = specular_reflect(np.array([[3.0, -4.0]]), 0, [0, 1])
    assert np.sum(out[0] ** 2) == 25.0


unit_normals = st.floats(0, 2 * np.pi).map(lambda a: np.array([np.cos(a), np.sin(a)]))


@given(arrays(float, (3, 2), elements=finite), st.integers(0, 2), unit_normals)
def test_specular_reflect_properties(v, j, n):
    w = specular_reflect(v, j, n)
    np.testing.assert_allclose(specular_reflect(w, j, n), v, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(w), np.linalg.norm(v), rtol=1e-12, atol=1e-12)
    assert w[j] @ n == pytest.approx(-(v[j] @ n), abs=1e-10)
    others = [k for k in range(3) if k != j]
    np.testing.assert_array_equal(w[others], v[others])
    m = Maxwellian(beta=1.3, d=2)
    assert m(w) == pytest.approx(m(v), rel=1e-10)


def test_center_of_mass_examples():
    np.testing.assert_allclose(center_of_mass([[0, 0], [1, 0]]), [0.5, 0])
    p = np.array([0.3, -0.2])
    np.testing.assert_allclose(center_of_mass([p, p, p]), p)
    np.testing.assert_allclose(center_of_mass([[-1, 0], [0, 0], [1, 0]]), [0, 0])


def test_center_of_mass_rejects_outside_bead():
    with pytest.raises(BeadOutsideDomain):
        center_of_mass([[0, 0], [1.5, 0]], SQUARE)


@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_center_of_mass_stays_in_convex_domain(J, seed):
    rng = np.random.default_rng(seed)
    for dom in (ConvexDomain.box([-1, -2], [3, 0.5]), ConvexDomain.disk(0.7)):
        lo, hi = dom.bounding_box
        pts = rng.uniform(lo, hi, (200, 2))
        pts = pts[dom.contains(pts)][: J + 1]
        if len(pts) == J + 1:
            assert dom.contains(center_of_mass(pts, dom))


def test_configuration_domain_of_box():
    D = ConfigurationDomain(ConvexDomain.box([0, 0], [2, 1]))
    np.testing.assert_allclose(D.half_widths, [2, 1])
    assert D.L == 2.0
    assert D.sup_norm_sq == 5.0
    assert D.contains([[0, 0], [-2, 1]]).all()
    assert not D.contains([2.1, 0])


def test_configuration_domain_of_disk():
    D = ConfigurationDomain(ConvexDomain.disk(1.5))
    assert D.sup_norm_sq == 9.0
    assert D.contains([3.0, 0.0]) and not D.contains([2.2, 2.2])


@pytest.mark.parametrize("cfg", [{"kind": "box", "dim": 1},
                                 {"kind": "box", "dim": 2, "extents": [[0, 1]]},
                                 {"kind": "disk", "dim": 2},
                                 {"kind": "disk", "dim": 2, "radius": -1},
                                 {"kind": "hexagon"},
                                 {"kind": "box", "extents": [[0, 1]], "radius": 1, "color": 2}])
def test_domain_config_errors(cfg):
    with pytest.raises(ConfigError):
        ConvexDomain.from_config(cfg)


@pytest.mark.parametrize("bad", [dict(kind="box", dim=1, lo=[1.0], hi=[0.0]),
                                 dict(kind="disk", dim=2, radius=0.0),
                                 dict(kind="box", dim=4, lo=[0] * 4, hi=[1] * 4)])
def test_domain_invariants_enforced(bad):
    with pytest.raises(ValueError):
        ConvexDomain(**bad)
