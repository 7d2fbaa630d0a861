import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import ks_2samp

from grassmann_harmonics import numerics as nm
from grassmann_harmonics.geometry import Geometry, tau


def test_quad_chamber_rank_one():
    spec = nm.QuadSpec(1, 1.0)
    val, err = nm.quad_chamber(lambda p: 2 * np.sinh(2 * p[:, 0]), spec)
    assert abs(val - (math.cosh(2) - 1)) < 1e-12
    assert err <= 1e-10


def test_quad_chamber_rank_two_area():
    val, err = nm.quad_chamber(lambda p: np.ones(len(p)), nm.QuadSpec(2, 1.0))
    assert abs(val - math.pi / 8) < 1e-12


def test_quad_interval_oscillatory():
    lam = 7.0
    val, _ = nm.quad_interval(lambda t: np.exp(1j * lam * t), 0.0, 10.0)
    exact = (np.exp(1j * lam * 10) - 1) / (1j * lam)
    assert abs(val - exact) < 1e-10


def test_quad_spec_validation():
    with pytest.raises(ValueError):
        nm.QuadSpec(3, 1.0)
    with pytest.raises(ValueError):
        nm.QuadSpec(1, 1.0, abs_tol=0)
    with pytest.raises(nm.QuadratureError):
        nm.quad_interval(lambda t: 1 / np.sqrt(np.abs(t - 0.3)), 0, 1, max_evals=200)


BATTERY = [
    (lambda t: np.exp(-3 * t), 0, 4, (1 - math.exp(-12)) / 3),
    (lambda t: np.cos(20 * t) ** 2, 0, 2, 1 + math.sin(80) / 80),
    (lambda t: np.sqrt(t), 0, 1, 2 / 3),
    (lambda t: 1 / (1 + 100 * t ** 2), -1, 1, 0.2 * math.atan(10)),
    (lambda t: t ** 2 * np.sinh(t), 0, 3, 11 * math.cosh(3) - 6 * math.sinh(3) - 2),
]


@pytest.mark.parametrize("f,a,b,exact", BATTERY)
def test_error_estimate_is_conservative(f, a, b, exact):
    for tol in (1e-4, 1e-8):
        val, err = nm.quad_interval(f, a, b, abs_tol=tol, rel_tol=tol)
        assert abs(val - exact) <= 2 * err + 1e-15 * max(1.0, abs(exact))


def test_divided_ratio_examples():
    f = lambda t: (t - 1) * (t - 2)
    assert abs(nm.divided_ratio(f, [1, 2], 5.0) - 1) < 1e-14
    v = nm.divided_ratio(math.sin, [0.0, math.pi], math.pi / 2)
    assert abs(v) <= 1.0
    assert abs(v - 1 / (math.pi / 2 * (math.pi / 2 - math.pi))) < 1e-14


def test_divided_ratio_confluent_limit():
    f = lambda t: math.exp(t) - math.e
    derivs = lambda k, x: math.exp(x) - (math.e if k == 0 else 0)
    conf = nm.divided_ratio(f, [1.0, 1.0], 2.5, derivs=derivs)
    # separated-node values are linear in the gap; extrapolate to zero gap
    sep = lambda h: nm.divided_ratio(f, [1.0, 1.0 + h], 2.5)
    h = 1e-4
    assert abs(conf - (2 * sep(h / 2) - sep(h))) < 1e-8
    # finite-difference derivatives are used when none are supplied
    assert abs(nm.divided_ratio(f, [1.0, 1.0], 2.5) - conf) < 1e-8


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=4), st.floats(-5, 5))
def test_divided_ratio_matches_naive(nodes, t):
    pts = sorted(nodes + [t])
    if np.min(np.diff(pts)) <= 0.1:
        return
    f = lambda x: math.prod(x - s for s in nodes) * math.cos(x)
    naive = f(t) / math.prod(t - s for s in nodes)
    assert abs(nm.divided_ratio(f, nodes, t) - naive) <= 1e-12 * max(1.0, abs(naive)) * 10 ** len(nodes)


def test_fd_second():
    assert abs(nm.fd_second(lambda t: t ** 3, 1.0) - 6) < 1e-6
    assert abs(nm.fd_first(math.sin, 0.4) - math.cos(0.4)) < 1e-10


def test_haar_character_mean():
    geom = Geometry(1, 1)
    ks = nm.haar_k_arrays(geom, nm.make_rng(11), 1_000_000)
    assert abs(tau(ks, 1, 1).mean()) < 3e-3


@pytest.mark.parametrize("r,b", [(1, 0), (2, 1)])
def test_haar_samples_in_k(r, b):
    geom = Geometry(r, b)
    for k in nm.haar_k_sample(geom, 3, 20):
        m = k.m
        assert np.abs(m.conj().T @ m - np.eye(geom.n)).max() < 1e-12
        assert abs(np.linalg.det(k.A) * np.linalg.det(k.D) - 1) < 1e-12


def test_haar_seeded():
    geom = Geometry(2, 0)
    a = nm.haar_k_arrays(geom, nm.make_rng(5), 4)
    b = nm.haar_k_arrays(geom, nm.make_rng(5), 4)
    assert np.array_equal(a, b)


def test_haar_right_invariance():
    geom = Geometry(2, 1)
    n = 20_000
    k = nm.haar_k_arrays(geom, nm.make_rng(1), n)
    k0 = nm.haar_k_arrays(geom, nm.make_rng(99), 1)[0]
    kk = nm.haar_k_arrays(geom, nm.make_rng(2), n) @ k0
    for stat in (lambda m: m[:, 0, 0].real, lambda m: np.abs(m[:, 2, 3]) ** 2):
        assert ks_2samp(stat(k), stat(kk)).pvalue > 1e-3
    for l in (1, 2, -1):
        assert abs(tau(k, l, 2).mean()) < 0.03
        assert abs(tau(kk, l, 2).mean()) < 0.03


def test_fit_inverse_r():
    R = np.array([5.0, 10, 20, 40])
    v_inf, c, rms = nm.fit_inverse_r(R, 3.0 + 2.0 / R)
    assert abs(v_inf - 3) < 1e-12 and abs(c - 2) < 1e-12 and rms < 1e-12


def test_parallel_map_order(monkeypatch):
    items = list(range(50))
    assert nm.parallel_map(lambda x: x * x, items, workers=4) == [x * x for x in items]
    monkeypatch.setenv(nm.THREADS_ENV, "3")
    assert nm.worker_count() == 3
    monkeypatch.setenv(nm.THREADS_ENV, "0")
    with pytest.raises(ValueError):
        nm.worker_count()
    monkeypatch.delenv(nm.THREADS_ENV)
    assert nm.worker_count() == 1
