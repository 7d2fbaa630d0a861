import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grassmann_harmonics.geometry import (
    Geometry, GroupElement, KElement, WeylElement, a_matrix, boundary_pair, cartan,
    cartan_arrays, distance, h_matrix, in_chamber, iwasawa, iwasawa_arrays, iwasawa_boundary,
    iwasawa_boundary_at, lemma_a_limit, make_a, polar_k, polar_k_arrays, random_group,
    radial_part, rho, rho_l, tau, tau_min, weyl_density, weyl_group)
from grassmann_harmonics.numerics import haar_k_arrays, make_rng

from conftest import GEOMETRIES

seeds = st.integers(0, 2 ** 32 - 1)
geoms = st.sampled_from(GEOMETRIES)


def test_geometry_fields():
    g = Geometry(2, 1)
    assert g.n == 5
    assert g.killing_scale == 2 * (2 * 2 + 1)
    with pytest.raises(ValueError):
        Geometry(0, 0)
    with pytest.raises(ValueError):
        Geometry(1, -1)


def test_make_a_examples():
    geom = Geometry(2, 1)
    assert np.allclose(make_a([0, 0], geom).m, np.eye(5))
    s = 0.83
    a = make_a([s], Geometry(1, 0)).m
    assert np.allclose(a, [[np.cosh(s), np.sinh(s)], [np.sinh(s), np.cosh(s)]])
    t = np.array([1.2, -0.4])
    assert np.abs(make_a(t, geom).m @ make_a(-t, geom).m - np.eye(5)).max() < 1e-12
    with pytest.raises(ValueError):
        make_a([1.0, 2.0, 3.0], geom)


def test_make_a_is_exp_of_h():
    from scipy.linalg import expm

    t = np.array([0.9, 0.3])
    assert np.allclose(expm(h_matrix(t, 2)), a_matrix(t, 2), atol=1e-13)


def _rho_from_roots(r, b):
    # restricted roots of SU(r, r+b): t_j (mult 2b), 2t_j (1), t_j +- t_k (2)
    e = np.eye(r)
    roots = [(e[j], 2 * b) for j in range(r)] + [(2 * e[j], 1) for j in range(r)]
    for j, k in itertools.combinations(range(r), 2):
        roots += [(e[j] + e[k], 2), (e[j] - e[k], 2)]
    return 0.5 * sum(m * v for v, m in roots)


def test_rho_examples():
    assert rho(Geometry(1, 0)).tolist() == [1.0]
    assert rho(Geometry(2, 0)).tolist() == [3.0, 1.0]
    assert rho_l(Geometry(1, 2), 3).tolist() == [0.0]


@pytest.mark.parametrize("r,b", [(1, 0), (1, 3), (2, 0), (2, 1), (3, 2)])
def test_rho_is_half_sum(r, b):
    assert np.allclose(rho(Geometry(r, b)), _rho_from_roots(r, b))


def test_iwasawa_trivial_cases():
    geom = Geometry(2, 1)
    t = np.array([0.7, -0.2])
    f = iwasawa(make_a(t, geom))
    assert np.allclose(f.k.m, np.eye(5), atol=1e-12)
    assert np.allclose(f.H, t)
    assert np.allclose(f.n_part.m, np.eye(5), atol=1e-12)
    k = haar_k_arrays(geom, make_rng(1), 1)[0]
    f = iwasawa(KElement.from_matrix(k, 2).as_group())
    assert np.allclose(f.k.m, k, atol=1e-12)
    assert np.allclose(f.H, 0, atol=1e-12)
    assert np.allclose(f.n_part.m, np.eye(5), atol=1e-12)


@given(geoms, seeds)
def test_iwasawa_recovers_parts(rb, seed):
    geom = Geometry(*rb)
    rng = make_rng(seed)
    g = random_group(geom, rng, 4)
    k, H, n = iwasawa_arrays(g, geom)
    assert np.abs(k @ a_matrix(H, geom.b) @ n - g).max() < 1e-9
    # constructing k a n by hand and decomposing returns the same parts
    k2, H2, n2 = iwasawa_arrays(k @ a_matrix(H, geom.b) @ n, geom)
    assert np.allclose(k2, k, atol=1e-9) and np.allclose(H2, H, atol=1e-9)
    assert np.allclose(n2, n, atol=1e-9)


@given(geoms, seeds)
def test_iwasawa_left_equivariance(rb, seed):
    geom = Geometry(*rb)
    rng = make_rng(seed)
    g = random_group(geom, rng, 3)
    k0 = haar_k_arrays(geom, rng, 3)
    k, H, _ = iwasawa_arrays(g, geom)
    kk, HH, _ = iwasawa_arrays(k0 @ g, geom)
    assert np.allclose(HH, H, atol=1e-9)
    assert np.allclose(kk, k0 @ k, atol=1e-9)


def test_iwasawa_rejects_non_group():
    geom = Geometry(1, 0)
    with pytest.raises(ValueError):
        iwasawa(GroupElement(np.diag([2.0, 1.0]), geom))


def test_cartan_examples():
    geom = Geometry(2, 1)
    t = np.array([1.3, 0.4])
    f = cartan(make_a(t, geom))
    assert np.allclose(f.H, t)
    assert np.abs(f.compose() - make_a(t, geom).m).max() < 1e-9
    rng = make_rng(3)
    k1, k2 = haar_k_arrays(geom, rng, 2)
    g = k1 @ a_matrix(t, 1) @ k2
    assert np.allclose(cartan(GroupElement(g, geom)).H, t, atol=1e-10)


@given(geoms, seeds)
def test_cartan_bi_invariance(rb, seed):
    geom = Geometry(*rb)
    rng = make_rng(seed)
    g = random_group(geom, rng, 3)
    k, kp = haar_k_arrays(geom, rng, 3), haar_k_arrays(geom, rng, 3)
    k1, H, k2 = cartan_arrays(g, geom)
    assert np.all(in_chamber(H, tol=1e-12))
    assert np.abs(k1 @ a_matrix(H, geom.b) @ k2 - g).max() < 1e-9
    _, H2, _ = cartan_arrays(k @ g @ kp, geom)
    assert np.allclose(H2, H, atol=1e-9)
    s, _ = radial_part(g, geom)
    assert np.allclose(s, H, atol=1e-9)


def test_polar_k_examples():
    geom = Geometry(1, 1)
    k = haar_k_arrays(geom, make_rng(4), 1)[0]
    assert np.allclose(polar_k(KElement.from_matrix(k, 1).as_group()).m, k, atol=1e-12)
    t = np.array([0.8])
    assert np.allclose(polar_k(make_a(t, geom)).m, np.eye(3), atol=1e-12)


@given(geoms, seeds)
def test_polar_k_right_equivariance(rb, seed):
    geom = Geometry(*rb)
    rng = make_rng(seed)
    g = random_group(geom, rng, 3)
    k = haar_k_arrays(geom, rng, 3)
    assert np.allclose(polar_k_arrays(g @ k, geom), polar_k_arrays(g, geom) @ k, atol=1e-9)


def test_tau_examples():
    geom = Geometry(1, 0)
    assert tau(KElement.identity(geom), 5) == 1
    th, l = 0.37, 3
    k = KElement([[np.exp(1j * th)]], [[np.exp(-1j * th)]])
    assert abs(tau(k, l) - np.exp(-1j * l * th)) < 1e-14


@given(geoms, seeds, st.integers(-4, 4))
def test_tau_is_character(rb, seed, l):
    geom = Geometry(*rb)
    k, kp = haar_k_arrays(geom, make_rng(seed), 2)
    a, b = (KElement.from_matrix(x, geom.r) for x in (k, kp))
    assert abs(tau(a @ b, l) - tau(a, l) * tau(b, l)) < 1e-12
    assert abs(abs(tau(a, l)) - 1) < 1e-12


def test_boundary_pair_at_identity():
    geom = Geometry(2, 0)
    k = KElement.from_matrix(haar_k_arrays(geom, make_rng(5), 1)[0], 2)
    H, kappa = boundary_pair(GroupElement(np.eye(4), geom), k)
    assert np.allclose(H, 0, atol=1e-12)
    assert np.allclose(kappa.m, k.m, atol=1e-12)


@given(geoms, seeds)
def test_stable_boundary_matches_iwasawa(rb, seed):
    geom = Geometry(*rb)
    rng = make_rng(seed)
    g = random_group(geom, rng, 4)
    k, H, _ = iwasawa_arrays(g, geom)
    H2, detD = iwasawa_boundary(g, geom)
    assert np.allclose(H2, H, atol=1e-9)
    assert np.allclose(detD, np.linalg.det(k[:, geom.r:, geom.r:]), atol=1e-9)
    # a_{-t} applied in the weight basis equals the explicit product
    t = rng.uniform(0, 2, geom.r)
    H3, d3 = iwasawa_boundary_at(g, t, geom)
    H4, d4 = iwasawa_boundary(a_matrix(-t, geom.b) @ g, geom)
    assert np.allclose(H3, H4, atol=1e-9) and np.allclose(d3, d4, atol=1e-9)


def test_weyl_density_examples():
    t = 0.9
    d, w, u = weyl_density(np.array([t]), 0)
    assert np.isclose(d, 2 * np.sinh(2 * t)) and w == 1 and np.isclose(u, 2 * np.cosh(t))
    d, w, _ = weyl_density(np.array([1.1, 1.1]), 1)
    assert d == 0 and w == 0
    _, _, u = weyl_density(np.zeros(3), 2)
    assert u == 8


def test_tau_min_and_distance():
    assert tau_min(np.array([3.0, 1.0]), 1) == 1
    assert tau_min(np.array([3.0, 1.0]), 0) == 2
    s = 0.6
    assert np.isclose(distance(make_a([s], Geometry(1, 0))), 2 * np.sqrt(2) * s)
    geom = Geometry(2, 1)
    rng = make_rng(6)
    g = random_group(geom, rng, 1)[0]
    k, kp = haar_k_arrays(geom, rng, 2)
    assert np.isclose(distance(g, geom), distance(k @ g @ kp, geom))


def test_lemma_a_trivial_sequences():
    geom = Geometry(1, 1)
    k = haar_k_arrays(geom, make_rng(8), 1)[0]
    vals = lemma_a_limit(k, [1.0], [5, 10, 20], 2, geom)
    assert np.allclose(vals, np.linalg.det(k[1:, 1:]) ** 2, atol=1e-12)
    vals = lemma_a_limit(make_a([0.7], geom), [1.0], [5, 10, 20], 2)
    assert np.allclose(vals, 1, atol=1e-12)
    with pytest.raises(ValueError):
        lemma_a_limit(k, [0.0], [5], 1, geom)


def test_lemma_a_random_rank_one():
    geom = Geometry(1, 1)
    g = random_group(geom, make_rng(9), 1)[0]
    k, _, _ = iwasawa_arrays(g, geom)
    target = np.linalg.det(k[1:, 1:]) ** 2
    assert abs(lemma_a_limit(g, [1.0], [30.0], 2, geom)[0] - target) < 1e-6


def test_weyl_group_is_hyperoctahedral():
    for r in (1, 2, 3):
        W = weyl_group(r)
        assert len(W) == 2 ** r * math.factorial(r)
        keys = {(s.signs, s.perm) for s in W}
        assert len(keys) == len(W)
        e = WeylElement.identity(r)
        lam = np.arange(1.0, r + 1)
        for s in W:
            assert np.allclose((s * s.inv()).act(lam), lam)
            assert (s * e).act(lam).tolist() == s.act(lam).tolist()
            for u in W[:4]:
                assert np.allclose((s * u).act(lam), s.act(u.act(lam)))
                assert (s.signs, s.perm) in keys


def test_ball_volume_quadrature_vs_sampling():
    # vol B(R) from the Weyl integration formula, two routes at rank one
    from grassmann_harmonics.numerics import QuadSpec, quad_chamber

    kf = 2 * np.sqrt(2)
    R = 6.0
    quad, _ = quad_chamber(lambda t: weyl_density(t, 0)[0] * kf, QuadSpec(1, R / kf, 1e-12, 1e-12))
    t = make_rng(10).uniform(0, R / kf, 400_000)
    mc = np.mean(weyl_density(t[:, None], 0)[0]) * R
    assert abs(mc / quad - 1) < 5e-3
    assert np.isclose(quad, kf * (np.cosh(2 * R / kf) - 1), rtol=1e-10)


@pytest.mark.parametrize("r,b", [(1, 0), (2, 0), (2, 1)])
def test_density_growth_matches_two_rho(r, b):
    geom = Geometry(r, b)
    H = np.arange(r, 0, -1) / r
    vals = [weyl_density(s * H, b)[0] * np.exp(-2 * rho(geom) @ (s * H)) for s in (20.0, 30.0)]
    assert vals[0] > 0
    assert abs(vals[1] / vals[0] - 1) < 1e-6
