"""The elementary spherical function phi_{lambda,l} on SU(r, r+b).

On the chamber, u^l phi is a ratio of a determinant of rank-one Jacobi
functions phi_{lambda_j}(t_i) by omega(a_T) prod (lambda_i^2 - lambda_j^2).
Near the walls that ratio is evaluated as a determinant of two-sided
divided differences in x = cosh 2t and y = lambda^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from math import factorial

import numpy as np

from . import specfun as sf
from .geometry import (Geometry, a_matrix, iwasawa_boundary, radial_part, rho, rho_l,
                       weyl_density, weyl_group)
from .numerics import haar_k_arrays, make_rng

CONFLUENCE = 1e-4
CONTOUR_NODES = 32
TAYLOR_TERMS = 14


@dataclass(frozen=True)
class SphericalEval:
    value: complex
    method: str
    condition_estimate: float

    def __post_init__(self):
        if self.method not in ("determinant", "confluent", "defining_integral", "series"):
            raise ValueError(f"unknown method {self.method}")
        if not self.condition_estimate >= 0:
            raise ValueError("condition estimate must be non-negative")


@dataclass
class KeyLemmaReport:
    grid: dict
    max_ratio: float
    fitted_d: int
    witness: dict
    envelope: dict = field(default_factory=dict)


def det_constant(r, b, l):
    """c in u^l phi = c det / (omega prod(lambda_i^2 - lambda_j^2)), fixed by phi(e) = 1:
    (-1)^(r(r-1)/2) 2^(2r(r-1)) 2^(rl) prod_{j=1}^{r} (b+j)^(r-j) (j-1)!."""
    c = (-1) ** (r * (r - 1) // 2) * 2.0 ** (2 * r * (r - 1)) * 2.0 ** (r * l)
    for j in range(1, r + 1):
        c *= (b + j) ** (r - j) * factorial(j - 1)
    return c


def _prep(lam, t):
    lam = np.asarray(lam, dtype=complex)
    t = np.asarray(t, dtype=float)
    if lam.ndim == 0:
        lam = lam[None]
    if t.ndim == 0:
        t = t[None]
    lam, t = np.broadcast_arrays(lam, t)
    return lam, t


def _jac(mu, t, b, l):
    return sf.jacobi_phi(mu, t, sf.JacobiOrder.from_bundle(b, l))


def _confluent_mask(lam, t):
    y = lam ** 2
    x = np.cosh(2 * t)
    r = lam.shape[-1]
    mask = np.zeros(lam.shape[:-1], bool)
    for i in range(r):
        for j in range(i + 1, r):
            mask |= np.abs(y[..., i] - y[..., j]) < CONFLUENCE * (1 + np.maximum(np.abs(y[..., i]), np.abs(y[..., j])))
            mask |= np.abs(x[..., i] - x[..., j]) < CONFLUENCE * (1 + np.maximum(x[..., i], x[..., j]))
    return mask


def _cancellation(M, det):
    """sum over permutations of prod |M_{i, s(i)}|, divided by |det M|."""
    r = M.shape[-1]
    absM = np.abs(M)
    total = np.zeros(M.shape[:-2])
    for perm in permutations(range(r)):
        total = total + np.prod(absM[..., range(r), perm], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.abs(det) > 0, total / np.abs(det), np.inf)


def _phi_direct(lam, t, b, l):
    # lam, t: (m, r)
    r = lam.shape[-1]
    M = _jac(lam[:, None, :], t[:, :, None], b, l)
    det = np.linalg.det(M) if r > 1 else M[:, 0, 0]
    _, omega, u = weyl_density(t, b)
    pair = np.ones(len(lam), dtype=complex)
    for i in range(r):
        for j in range(i + 1, r):
            pair = pair * (lam[:, i] ** 2 - lam[:, j] ** 2)
    val = det_constant(r, b, l) * det / (omega * pair) / u ** l
    return val, _cancellation(M, det)


def _h_poly(p, v):
    # complete homogeneous symmetric polynomial of degree p in the rows of v (m, q)
    h = [np.ones(v.shape[0], dtype=complex)] + [np.zeros(v.shape[0], dtype=complex)] * p
    for q in range(v.shape[1]):
        for d in range(1, p + 1):
            h[d] = h[d] + v[:, q] * h[d - 1]
    return h[p]


def _x_taylor(mu, tc, xs, b, l):
    """f[x_1..x_q] in x = cosh 2t, by Taylor expansion about x(tc).

    d^k/dx^k F(a, a'; c; (1-x)/2) = (-1/2)^k (a)_k (a')_k / (c)_k F(a+k, a'+k; c+k; w).
    mu (m, K), tc (m,), xs (m, q).
    """
    xc = np.cosh(2 * tc)
    w = (-np.sinh(tc) ** 2)[:, None]
    rho1 = b + 1 - l
    a1 = (1j * mu + rho1) / 2
    a2 = (-1j * mu + rho1) / 2
    m = xs.shape[1] - 1
    deltas = xs - xc[:, None]
    total = 0
    poch = np.ones_like(mu)
    for k in range(m + TAYLOR_TERMS):
        if k > 0:
            poch = poch * (a1 + k - 1) * (a2 + k - 1) / ((b + k) * k) * (-0.5)
        if k >= m:
            hk = _h_poly(k - m, deltas)[:, None]
            total = total + poch * sf.gauss_2f1(a1 + k, a2 + k, b + 1 + k, w) * hk
    return total


def _tableau(nodes, direct, close):
    """Top row f[z_0..z_j] of a divided-difference tableau over sorted nodes (m, r).

    direct(i, j) evaluates a clustered run; close(i, j) says whether the run
    z_i..z_j is clustered (the same for every row of the batch).
    """
    r = nodes.shape[1]
    T = {}
    for i in range(r):
        T[(i, i)] = direct(i, i)
    for d in range(1, r):
        for i in range(r - d):
            j = i + d
            if close(i, j):
                T[(i, j)] = direct(i, j)
            else:
                gap = nodes[:, j] - nodes[:, i]
                top = T[(i + 1, j)] - T[(i, j - 1)]
                T[(i, j)] = top / gap.reshape(gap.shape + (1,) * (top.ndim - 1))
    return [T[(0, j)] for j in range(r)]


def _sorted_nodes(lam, t):
    ts = np.sort(t, axis=1)
    ys = lam ** 2
    ys = np.take_along_axis(ys, np.argsort(ys.real, axis=1), axis=1)
    return ts, np.cosh(2 * ts), ys


def _close_pattern(xs, ys):
    r = xs.shape[1]
    key = []
    for i in range(r):
        for j in range(i + 1, r):
            key.append(xs[:, j] - xs[:, i] < CONFLUENCE * (1 + xs[:, j]))
            key.append(np.abs(ys[:, j] - ys[:, i])
                       < CONFLUENCE * (1 + np.maximum(np.abs(ys[:, i]), np.abs(ys[:, j]))))
    return np.stack(key, axis=1) if key else np.zeros((len(xs), 0), bool)


def _phi_confluent(lam, t, b, l, pattern):
    """Confluent evaluation for a batch (m, r) sharing one cluster pattern."""
    m, r = lam.shape
    ts, xs, ys = _sorted_nodes(lam, t)
    tmax = ts.max(axis=1)
    flags = {}
    p = 0
    for i in range(r):
        for j in range(i + 1, r):
            flags[("x", i, j)] = bool(pattern[p])
            flags[("y", i, j)] = bool(pattern[p + 1])
            p += 2
    th = 2 * np.pi * (np.arange(CONTOUR_NODES) + 0.5) / CONTOUR_NODES

    def y_row(fun):
        # top row of the y-tableau of a function of the spectral variable
        def direct(i, j):
            if i == j:
                return fun(np.sqrt(ys[:, i:i + 1] + 0j))[:, 0]
            c = ys[:, i:j + 1].mean(axis=1)
            spread = np.abs(ys[:, i:j + 1] - c[:, None]).max(axis=1)
            rad = 0.5 * (2 * np.sqrt(np.abs(c)) + 1 / (1 + tmax)) / (1 + tmax)
            rad = np.maximum(np.maximum(rad, 4 * spread), 1e-8)
            wpts = c[:, None] + rad[:, None] * np.exp(1j * th)[None, :]
            # differences of order >= 1 annihilate constants; removing the
            # centre value keeps rounding relative to the variation only
            vals = fun(np.sqrt(wpts)) - fun(np.sqrt(c[:, None] + 0j))
            kern = (wpts - c[:, None]) / np.prod(
                wpts[:, None, :] - ys[:, i:j + 1, None], axis=1)
            return np.mean(vals * kern, axis=1)
        return np.stack(_tableau(ys, direct, lambda i, j: flags[("y", i, j)]), axis=-1)

    # y-differences first: rows that are constant in y (t = 0) then give
    # exact zeros instead of cancelling against the x-differences
    def x_direct(i, j):
        if i == j:
            return y_row(lambda mu: _jac(mu, ts[:, i, None], b, l))
        tc = np.arccosh(xs[:, i:j + 1].mean(axis=1)) / 2
        return y_row(lambda mu: _x_taylor(mu, tc, xs[:, i:j + 1], b, l))

    DD = np.stack(_tableau(xs, x_direct, lambda i, j: flags[("x", i, j)]), axis=1)
    det = np.linalg.det(DD)
    _, _, u = weyl_density(t, b)
    # prod(y_i - y_j) and omega reverse sign together under reordering
    val = det_constant(r, b, l) * det / 2.0 ** (r * (r - 1) / 2) / u ** l
    return val, _cancellation(DD, det)


def phi_values(lam, t, b, l, return_info=False):
    """phi_{lambda,l}(a_t) for broadcast arrays lam (..., r), t (..., r).

    Points near a wall in either variable use the confluent evaluation.
    """
    lam, t = _prep(lam, t)
    shape = lam.shape[:-1]
    r = lam.shape[-1]
    L = lam.reshape(-1, r)
    T = t.reshape(-1, r)
    out = np.empty(len(L), dtype=complex)
    cond = np.empty(len(L))
    conf = _confluent_mask(L, T) if r > 1 else np.zeros(len(L), bool)
    if np.any(~conf):
        out[~conf], cond[~conf] = _phi_direct(L[~conf], T[~conf], b, l)
    if np.any(conf):
        idx = np.flatnonzero(conf)
        _, xs, ys = _sorted_nodes(L[idx], T[idx])
        pat = _close_pattern(xs, ys)
        keys, inv = np.unique(pat, axis=0, return_inverse=True)
        for g, key in enumerate(keys):
            sel = idx[inv.ravel() == g]
            out[sel], cond[sel] = _phi_confluent(L[sel], T[sel], b, l, key)
    out = out.reshape(shape)
    if return_info:
        return out, conf.reshape(shape), cond.reshape(shape)
    return out


def phi(lam, t, b, l):
    """phi_{lambda,l}(a_t) at one point, with method and conditioning."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(np.diff(np.r_[t, 0.0]) > 1e-12):
        raise ValueError("t must lie in the closed chamber t_1 >= ... >= t_r >= 0")
    val, conf, cond = phi_values(lam[None], t[None], b, l, return_info=True)
    return SphericalEval(complex(val[0]), "confluent" if conf[0] else "determinant",
                         float(cond[0]))


def phi_group(lam, m, geom, l):
    """phi_{lambda,l}(g) = tau_l(pi_0(g))^-1 phi(a_{A+(g)}) for stacks of matrices."""
    s, ph = radial_part(m, geom)
    return phi_values(np.broadcast_to(lam, s.shape), s, geom.b, l) * ph ** (-l)


def phi_defining_integral(lam, t, b, l, nodes=2048, samples=None, seed=0, batch=100_000):
    """Oracle for phi_{lambda,l}(a_t) from its defining K-integral.

    int_K exp(-(i lambda + rho) H(g^-1 k)) tau_l(k^-1 kappa(g^-1 k)) dk.
    Exact trapezoid on the torus when (r, b) = (1, 0); Haar Monte Carlo
    otherwise.  Returns (value, standard error).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    geom = Geometry(len(t), b)
    ginv = a_matrix(-t, b)
    rh = rho(geom)

    def integrand(k):
        H, detD = iwasawa_boundary(ginv @ k, geom)
        detk = np.linalg.det(k[:, geom.r:, geom.r:])
        return np.exp(-(1j * lam + rh) @ H.T) * (detD / detk) ** l

    if geom.r == 1 and b == 0 and samples is None:
        th = 2 * np.pi * np.arange(nodes) / nodes
        k = np.zeros((nodes, 2, 2), dtype=complex)
        k[:, 0, 0] = np.exp(1j * th)
        k[:, 1, 1] = np.exp(-1j * th)
        return complex(integrand(k).mean()), 0.0
    samples = samples or 1_000_000
    rng = make_rng(seed)
    s1 = 0j
    s2 = 0.0
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        v = integrand(haar_k_arrays(geom, rng, m))
        s1 += v.sum()
        s2 += (np.abs(v) ** 2).sum()
        done += m
    mean = s1 / samples
    var = max(s2 / samples - abs(mean) ** 2, 0.0)
    return complex(mean), float(np.sqrt(var / samples))


def phi_series(lam, t, b, l):
    """Harish-Chandra expansion
    2^(-rl) prod cosh(t_j)^(-l) sum_W c(s lam, l) prod psi_{(s lam)_j}(t_j) / omega."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    r = len(lam)
    if np.any(np.sinh(t) <= 1):
        raise ValueError("phi_series needs sinh(t_j) > 1 for every j")
    if r > 1 and np.any(np.diff(t) >= 0):
        raise ValueError("phi_series needs t strictly inside the chamber")
    order = sf.JacobiOrder.from_bundle(b, l)
    _, omega, _ = weyl_density(t, b)
    total = 0j
    for s in weyl_group(r):
        sl = s.act(lam)
        total += sf.hc_c(sl, l, b) * np.prod(sf.jacobi_psi(sl, t, order))
    return complex(2.0 ** (-r * l) * np.prod(np.cosh(t)) ** (-l) * total / omega)


def phi_asym(lam, t, b, l):
    """Leading term u^-l sum_W c(s lam, l) exp((i s lam - rho(l))(t))."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    t = np.asarray(t, dtype=float)
    r = len(lam)
    geom = Geometry(r, b)
    rl = rho_l(geom, l)
    _, _, u = weyl_density(t, b)
    total = 0j
    for s in weyl_group(r):
        sl = s.act(lam)
        total = total + sf.hc_c(sl, l, b) * np.exp(np.sum((1j * sl - rl) * t, axis=-1))
    return u ** (-l) * total


def radial_operator(G, t, b, l, h=1e-3):
    """Apply sum d_j^2 + [(2b+1) coth t_j + (1-2l) tanh t_j] d_j
    + 4 sum_{j<k} [sinh 2t_j d_j - sinh 2t_k d_k] / (cosh 2t_j - cosh 2t_k)
    to G by Richardson-extrapolated central differences."""
    t = np.asarray(t, dtype=float)
    r = len(t)
    e = np.eye(r)

    def derivs(hh):
        g0 = G(t)
        d1 = np.empty(r, dtype=complex)
        d2 = np.empty(r, dtype=complex)
        for j in range(r):
            gp, gm = G(t + hh * e[j]), G(t - hh * e[j])
            d1[j] = (gp - gm) / (2 * hh)
            d2[j] = (gp - 2 * g0 + gm) / hh ** 2
        return g0, d1, d2

    g0, d1a, d2a = derivs(h)
    _, d1b, d2b = derivs(h / 2)
    d1 = (4 * d1b - d1a) / 3
    d2 = (4 * d2b - d2a) / 3
    coef = (2 * b + 1) / np.tanh(t) + (1 - 2 * l) * np.tanh(t)
    val = np.sum(d2) + np.sum(coef * d1)
    c2, s2 = np.cosh(2 * t), np.sinh(2 * t)
    for j in range(r):
        for k in range(j + 1, r):
            val += 4 * (s2[j] * d1[j] - s2[k] * d1[k]) / (c2[j] - c2[k])
    return g0, val


def radial_eigenvalue(lam, b, l):
    """-(|lambda|^2 + |rho(l)|^2), Euclidean norms in the t-coordinates."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    rl = rho_l(Geometry(len(lam), b), l)
    return -(np.sum(lam ** 2) + np.sum(rl ** 2))


def radial_residual(lam, t, b, l, h=1e-3, flip=False):
    """Relative residual of the radial eigen-equation for G = u^l phi."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    t = np.atleast_1d(np.asarray(t, dtype=float))

    def G(tt):
        _, _, u = weyl_density(tt, b)
        return complex(u ** l * phi_values(lam[None], tt[None], b, l)[0])

    g0, Lg = radial_operator(G, t, b, l, h)
    lam2 = -np.sum(lam ** 2) if flip else np.sum(lam ** 2)
    rl = rho_l(Geometry(len(lam), b), l)
    ev = -(lam2 + np.sum(rl ** 2))
    return float(abs(Lg - ev * g0) / abs(g0))


def key_lemma_ratio(lam, t, b, l):
    """|pi(lambda) u^l phi| e^{rho(l)(t)} on a grid, lam (..., r), t (..., r)."""
    lam, t = _prep(lam, t)
    r = lam.shape[-1]
    geom = Geometry(r, b)
    val = phi_values(lam, t, b, l)
    _, _, u = weyl_density(t, b)
    pi = sf.pi_short(lam.real, b)
    return np.abs(pi * u ** l * val) * np.exp(np.sum(rho_l(geom, l) * t, axis=-1))


def chamber_grid(r, hi, n):
    """Closed-chamber grid including the walls."""
    x = np.linspace(0, hi, n)
    if r == 1:
        return x[:, None]
    pts = [(a, c) for a in x for c in x if c <= a]
    return np.array(pts)


def key_lemma_sweep(l, b, r, lambda_max=40.0, t_max=10.0, n_lambda=21, n_t=11, d_max=6,
                    tol=0.02):
    """Fit the smallest integer d for which
    |pi(lambda) phi u^l| e^{rho(l)(H)} (1 + |lambda|^2)^-d stops growing in lambda.

    Growth is read off the tail of each t-row separately, since the bound
    is uniform in t: with m = max_j |lambda_j|, the sup over the top shell
    3/4 < m/lambda_max <= 1 must not exceed the sup over the shell
    1/2 < m/lambda_max <= 3/4 by more than tol on any row.  A single row
    (t = 0 carries the pi(lambda) growth) is then not masked by larger
    values elsewhere in the grid.
    """
    lam_grid = chamber_grid(r, lambda_max, n_lambda)
    t_grid = chamber_grid(r, t_max, n_t)
    L = np.repeat(lam_grid, len(t_grid), axis=0)
    T = np.tile(t_grid, (len(lam_grid), 1))
    ratio = key_lemma_ratio(L, T, b, l).reshape(len(lam_grid), len(t_grid))
    if not np.all(np.isfinite(ratio)):
        raise FloatingPointError("non-finite Key Lemma ratio")
    per_lam = ratio.max(axis=1)
    norm2 = np.sum(lam_grid ** 2, axis=1)
    m = np.abs(lam_grid).max(axis=1) / lambda_max
    mid = (m > 0.5) & (m <= 0.75 + 1e-12)
    top = m > 0.75 + 1e-12
    env = {}
    fitted = None
    tiny = np.finfo(float).tiny
    for d in range(d_max + 1):
        w = ratio / (1 + norm2[:, None]) ** d
        lo, hi = w[mid].max(axis=0), w[top].max(axis=0)
        growth = float(np.max(hi / np.maximum(lo, tiny)))
        env[d] = (float(lo.max()), float(hi.max()), growth)
        if fitted is None and growth <= 1 + tol:
            fitted = d
    if fitted is None:
        fitted = d_max
    w = per_lam / (1 + norm2) ** fitted
    i = int(np.argmax(w))
    j = int(np.argmax(ratio[i]))
    return KeyLemmaReport(
        grid={"r": r, "b": b, "l": l, "lambda_max": lambda_max, "t_max": t_max,
              "n_lambda": n_lambda, "n_t": n_t},
        max_ratio=float(w.max()), fitted_d=fitted,
        witness={"lambda": lam_grid[i].tolist(), "t": t_grid[j].tolist()},
        envelope=env)
