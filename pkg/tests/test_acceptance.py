"""Acceptance criteria 1-10.  Each test prints one PASS/FAIL line with the
measured quantities and its runtime against the budget."""
import cmath
import math
import time

import mpmath as mp
import numpy as np
import pytest

from grassmann_harmonics import specfun as sf
from grassmann_harmonics import spherical as sp
from grassmann_harmonics import transforms as tr
from grassmann_harmonics.geometry import (Geometry, a_matrix, cartan_arrays, iwasawa_arrays,
                                          lemma_a_values, random_group, weyl_group)
from grassmann_harmonics.numerics import fit_inverse_r, loglog_slope, make_rng

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail, elapsed, budget):
        status = "PASS" if ok and elapsed < budget else "FAIL"
        with capsys.disabled():
            print(f"\n{status} criterion {n} ({title}): {detail}; {elapsed:.1f} s (budget {budget:g} s)")
        assert ok, detail
        assert elapsed < budget, f"runtime {elapsed:.1f} s over budget {budget} s"
    return emit


def test_criterion_1_decompositions(report):
    t0 = time.perf_counter()
    worst = 0.0
    for r, b in [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1)]:
        geom = Geometry(r, b)
        g = random_group(geom, make_rng(100 + 10 * r + b), 1000)
        scale = np.maximum(1.0, np.abs(g).max(axis=(-1, -2)))
        k, H, n = iwasawa_arrays(g, geom)
        e_iw = np.abs(k @ a_matrix(H, b) @ n - g).max(axis=(-1, -2)) / scale
        k1, s, k2 = cartan_arrays(g, geom)
        e_ca = np.abs(k1 @ a_matrix(s, b) @ k2 - g).max(axis=(-1, -2)) / scale
        worst = max(worst, e_iw.max(), e_ca.max())
    report(1, "decomposition round trips", worst <= 1e-9, f"max error {worst:.2e} (<= 1e-9)",
           time.perf_counter() - t0, 10)


def _hyp_oracle(a, b, c, x, terms=500):
    with mp.workdps(30):
        z = mp.mpf(x) / (x - 1)
        A, B, C = mp.mpc(a), mp.mpc(c - b), mp.mpc(c)
        term, total = mp.mpf(1), mp.mpf(1)
        for k in range(terms):
            term *= (A + k) * (B + k) / ((C + k) * (k + 1)) * z
            total += term
        return complex((1 - mp.mpf(x)) ** (-A) * total)


def test_criterion_2_special_functions(report):
    t0 = time.perf_counter()
    # duplication identity on a grid, compared through Gamma values
    dup = 0.0
    for x in np.linspace(-5.9, 6.1, 49):  # offset keeps z, 2z, z + 1/2 off the poles
        for y in np.linspace(-6.0, 6.0, 25):
            z = complex(x, y)
            lhs = sf.ln_gamma(2 * z)
            rhs = (2 * z - 1) * math.log(2) - 0.5 * math.log(math.pi) + sf.ln_gamma(z) \
                + sf.ln_gamma(z + 0.5)
            dup = max(dup, abs(cmath.exp(lhs - rhs) - 1))
    # 2F1 against the 500-term oracle at the mapped argument, |parameters| <= 10
    rng = make_rng(2)
    hyp = 0.0
    for _ in range(300):
        a = complex(*rng.uniform(-10, 10, 2))
        b = complex(*rng.uniform(-10, 10, 2))
        c = rng.uniform(0.05, 10)
        x = rng.uniform(-1.5, 0.0)
        ref = _hyp_oracle(a, b, c, x)
        hyp = max(hyp, abs(sf.gauss_2f1(a, b, c, x) - ref) / abs(ref))
    # connection formula over mu in [0.3, 20], t in [1.2, 10], b <= 2, |l| <= 4
    conn = 0.0
    for b in range(3):
        for l in range(-4, 5):
            o = sf.JacobiOrder.from_bundle(b, l)
            for mu in np.linspace(0.3, 20.0, 12):
                cp, cm = sf.jacobi_c(mu, o), sf.jacobi_c(-mu, o)
                for t in np.linspace(1.2, 10.0, 8):
                    p = cp * sf.jacobi_psi(mu, t, o)
                    q = cm * sf.jacobi_psi(-mu, t, o)
                    res = abs(sf.jacobi_phi(mu, t, o) - p - q) / max(1.0, abs(p), abs(q))
                    conn = max(conn, res)
    ok = dup <= 1e-12 and hyp <= 1e-12 and conn <= 1e-8
    report(2, "special-function oracles", ok,
           f"duplication {dup:.1e}, 2F1 {hyp:.1e} (<= 1e-12); connection {conn:.1e} (<= 1e-8)",
           time.perf_counter() - t0, 30)


def test_criterion_3_spherical_cross_validation(report):
    t0 = time.perf_counter()
    torus = 0.0
    for lam, t, l in [(0.7, 1.1, 0), (2.9, 2.0, 1), (1.3, 0.4, -2), (6.0, 1.5, 3), (4.0, 1.2, -3)]:
        v, _ = sp.phi_defining_integral([lam], [t], 0, l, nodes=2048)
        torus = max(torus, abs(v - sp.phi([lam], [t], 0, l).value))
    mc = 0.0
    for lam, t, b, l, seed in [([1.1], [0.8], 1, 2, 7), ([1.4, 0.6], [0.7, 0.3], 0, 0, 3)]:
        v, _ = sp.phi_defining_integral(lam, t, b, l, samples=1_000_000, seed=seed)
        mc = max(mc, abs(v - sp.phi(lam, t, b, l).value))
    series = max(abs(sp.phi_series(lam, t, 1, 1) - sp.phi(lam, t, 1, 1).value)
                 for lam, t in [([2.3, 1.1], [6.0, 3.0]), ([1.7, 0.4], [5.0, 2.5])])
    ode = 0.0
    for r, b in [(1, 0), (1, 1), (2, 0), (2, 1)]:
        for l in (-2, 0, 1, 3):
            for x in (0.4, 1.0, 2.2):
                lam = np.linspace(2.3, 0.7, r)
                t = x * np.linspace(1.0, 0.45, r)
                ode = max(ode, sp.radial_residual(lam, t, b, l))
    ok = torus <= 1e-10 and mc <= 3e-3 and series <= 1e-6 and ode <= 1e-4
    report(3, "spherical cross-validation", ok,
           f"torus {torus:.1e} (<= 1e-10), Monte-Carlo {mc:.1e} (<= 3e-3), "
           f"series {series:.1e} (<= 1e-6), ODE {ode:.1e} (<= 1e-4)",
           time.perf_counter() - t0, 300)


def test_criterion_4_key_lemma(report):
    t0 = time.perf_counter()
    fitted, unstable, finite = {}, [], True
    for r, b in [(1, 0), (1, 1), (2, 0), (2, 1)]:
        for l in range(-3, 4):
            base = sp.key_lemma_sweep(l, b, r, lambda_max=40, t_max=10, n_lambda=21, n_t=11)
            big = sp.key_lemma_sweep(l, b, r, lambda_max=40, t_max=10, n_lambda=41, n_t=21)
            finite &= bool(np.isfinite(base.max_ratio) and np.isfinite(big.max_ratio))
            fitted[(r, b, l)] = big.fitted_d
            if base.fitted_d != big.fitted_d:
                unstable.append((r, b, l, base.fitted_d, big.fitted_d))
    ds = sorted(set(fitted.values()))
    report(4, "Key Lemma sweep", finite and not unstable,
           f"fitted d values {ds}, unstable cases {unstable}", time.perf_counter() - t0, 600)


def _norm_ratios(r, lams, R):
    geom = Geometry(r, 0)
    ratios, first = [], None
    for lam in lams:
        for l in (-2, 0, 3):
            f = tr.CyclicBoundaryFn.single(geom, lam, l)
            rep = tr.norm_limit(f, R)
            ratios.append(rep.extras["ratio"])
            first = first or (f, rep)
    f, rep = first
    scaling = tr.norm_limit(f.scaled(2.0), R).limit / rep.limit
    return np.array(ratios), scaling


@pytest.mark.parametrize("r,budget", [(1, 120), (2, 900)])
def test_criterion_5_norm_limit(report, r, budget):
    t0 = time.perf_counter()
    if r == 1:
        lams, R = [[0.7], [1.3], [2.9]], np.arange(5.0, 201.0, 5.0)
    else:
        # lambda = (2 lambda_0, lambda_0) keeps the point regular
        lams, R = [[1.4, 0.7], [2.6, 1.3], [5.8, 2.9]], np.arange(5.0, 161.0, 5.0)
    ratios, scaling = _norm_ratios(r, lams, R)
    spread = (ratios.max() - ratios.min()) / ratios.mean()
    cands = {"2^(-r/2)/Gamma(r/2+1)": 2 ** (-r / 2) / math.gamma(r / 2 + 1),
             "pi^(r/2)/Gamma(r/2+1)": math.pi ** (r / 2) / math.gamma(r / 2 + 1)}
    ok = spread <= 0.02 and abs(scaling - 4) <= 1e-6
    cand = ", ".join(f"{k} = {v:.4f}" for k, v in cands.items())
    report(5, f"norm limit r={r}", ok,
           f"measured constant {ratios.mean():.4f}, spread {100 * spread:.2f}% (<= 2%), "
           f"scaling {scaling:.9f} (4 +- 1e-6); candidates {cand}",
           time.perf_counter() - t0, budget)


def test_criterion_6_poisson_asymptotics(report):
    t0 = time.perf_counter()
    geom = Geometry(1, 0)
    g0 = random_group(geom, make_rng(0), 1, t_scale=0.6, n_scale=0.3)[0]
    ok_all, details = True, []
    for l in (0, 1):
        f = tr.CyclicBoundaryFn([1.0, 0.5], [np.eye(2), g0], [1.3], l, geom)
        R = tr.DEFAULT_R_GRID[1]
        res = np.array(tr.asymptotic_residual(f, R, nodes=128).values)
        scale = tr.norm_limit(f, R, nodes=128).limit
        peak = int(np.argmax(res))
        decreasing = bool(np.all(np.diff(res[peak:]) <= 0))
        frac = res[-1] / scale
        ok_all &= decreasing and frac < 0.01
        details.append(f"l={l}: fraction {frac:.1e} at R={R[-1]:g}, decreasing after R={R[peak]:g}")
    report(6, "Poisson asymptotics", ok_all, "; ".join(details) + " (< 1%)",
           time.perf_counter() - t0, 300)


def test_criterion_7_restriction(report):
    t0 = time.perf_counter()
    lams = np.geomspace(0.2, 30.0, 16)
    top = lams >= 3.0
    worst_slope, hi, lo = -np.inf, 0.0, np.inf
    for b in (0, 1):
        geom = Geometry(1, b)
        for l in range(-3, 4):
            for kind in ("smooth", "quadratic", "cone"):
                for support in (4.0, 8.0):
                    p = tr.RadialProfile.bump(kind, support)
                    rr = np.array([tr.restriction_ratio(p, [x], l, geom) for x in lams])
                    if not np.all(np.isfinite(rr)):
                        worst_slope = np.inf
                    worst_slope = max(worst_slope, loglog_slope(lams[top], rr[top]))
                    hi, lo = max(hi, rr.max()), min(lo, rr.min())
    report(7, "Fourier restriction", worst_slope < 0.05,
           f"ratio range [{lo:.3g}, {hi:.3g}], worst top-decade slope {worst_slope:.3f} (< 0.05)",
           time.perf_counter() - t0, 300)


def test_criterion_8_inversion(report):
    t0 = time.perf_counter()
    geom = Geometry(1, 0)
    e = np.eye(2, dtype=complex)

    def recovered(lam, l):
        rep = tr.boundary_inversion(tr.CyclicBoundaryFn.single(geom, [lam], l), e)
        return rep.limit / rep.extras["c_abs2"]
    gamma = recovered(1.3, 0).real
    vals = {(lam, l): recovered(lam, l) / gamma for lam, l in [(0.7, -2), (2.9, 3), (1.9, 1)]}
    worst = max(abs(v - 1) for v in vals.values())
    shown = ", ".join(f"{k}: {v.real:.4f}" for k, v in vals.items())
    report(8, "boundary inversion", worst <= 0.03,
           f"calibrated constant {gamma:.4f} at (1.3, 0); recovered {shown}; worst {100 * worst:.2f}% (<= 3%)",
           time.perf_counter() - t0, 300)


def test_criterion_9_lemma_a(report):
    t0 = time.perf_counter()
    R = np.arange(5.0, 31.0, 5.0)
    details, ok = [], True
    for r, b, l in [(1, 1, 2), (2, 1, 1)]:
        geom = Geometry(r, b)
        t = np.linspace(1.0, 0.5, r)
        gs = random_group(geom, make_rng(7), 100)
        k, _, _ = iwasawa_arrays(gs, geom)
        target = np.linalg.det(k[:, r:, r:]) ** l
        err = np.array([np.abs(lemma_a_values(g, t, R, l, geom) - tg) for g, tg in zip(gs, target)])
        worst = err.max(axis=0)
        live = worst > 1e-13
        slope = np.polyfit(R[live], np.log(worst[live]), 1)[0] if live.sum() >= 2 else -np.inf
        ok &= worst[-1] <= 1e-6 and slope < 0
        details.append(f"(r,b,l)={(r, b, l)}: error at R=30 {worst[-1]:.1e}, log-slope {slope:.2f}")
    report(9, "Lemma A", ok, "; ".join(details), time.perf_counter() - t0, 60)


def test_criterion_10_intertwining(report):
    t0 = time.perf_counter()
    worst = 0.0
    # rank one, b = 0: the right side by direct torus quadrature of the Poisson integral
    geom = Geometry(1, 0)
    g0 = random_group(geom, make_rng(31), 1, t_scale=0.6, n_scale=0.3)[0]
    f = tr.CyclicBoundaryFn([1.0, 0.5], [np.eye(2), g0], [1.3], 1, geom)
    g = random_group(geom, make_rng(32), 8, t_scale=1.0)
    ref = tr.poisson(f, g)
    for s in weyl_group(1):
        quad = tr.poisson_integral(tr.weyl_translate(f, s), g, nodes=4096)
        worst = max(worst, np.abs(quad - ref).max())
    # closed form on both sides for the remaining geometries
    for r, b, l in [(1, 1, 2), (2, 0, -1), (2, 1, 1)]:
        geom = Geometry(r, b)
        g0 = random_group(geom, make_rng(40 + r + b), 1, t_scale=0.6, n_scale=0.3)[0]
        f = tr.CyclicBoundaryFn([1.0, 0.5], [np.eye(geom.n), g0], np.linspace(1.7, 0.6, r), l, geom)
        g = random_group(geom, make_rng(50 + r + b), 20)
        ref = tr.poisson(f, g)
        for s in weyl_group(r):
            worst = max(worst, np.abs(tr.poisson(tr.weyl_translate(f, s), g) - ref).max())
    report(10, "intertwining identity", worst <= 1e-9, f"max deviation {worst:.1e} (<= 1e-9)",
           time.perf_counter() - t0, 60)
