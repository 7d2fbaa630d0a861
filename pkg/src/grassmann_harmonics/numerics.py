"""Shared numerical kernels: chamber quadrature, divided differences,
finite differences and Haar sampling on K."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import factorial

import numpy as np

# Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
GK15_NODES = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
GK15_WEIGHTS = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
G7_WEIGHTS = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_X15 = np.r_[-GK15_NODES[:-1], GK15_NODES[::-1]]
_WK15 = np.r_[GK15_WEIGHTS[:-1], GK15_WEIGHTS[::-1]]
_WG7 = np.zeros(15)
_WG7[[1, 3, 5, 7, 9, 11, 13]] = np.r_[G7_WEIGHTS[:-1], G7_WEIGHTS[3], G7_WEIGHTS[2::-1]]


class QuadratureError(RuntimeError):
    """Evaluation budget exhausted before reaching the tolerance."""

    def __init__(self, msg, value=None, error=None):
        super().__init__(msg)
        self.value = value
        self.error = error


@dataclass(frozen=True)
class QuadSpec:
    """Truncated chamber {t in a+, |t| <= radius} in dimension r."""

    dimension: int
    radius: float
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_evals: int = 2_000_000

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.radius <= 0:
            raise ValueError("radius must be positive")


def _gk_panels(f, lo, hi):
    # vectorised GK15 over many panels; f maps (m,) -> (m,)
    mid = (lo + hi) / 2
    half = (hi - lo) / 2
    x = mid[:, None] + half[:, None] * _X15[None, :]
    fx = np.asarray(f(x.ravel())).reshape(x.shape)
    k = half * (fx @ _WK15)
    g = half * (fx @ _WG7)
    return k, np.abs(k - g)


def quad_interval(f, a, b, abs_tol=1e-10, rel_tol=1e-10, max_evals=200_000, initial=8):
    """Globally adaptive Gauss-Kronrod 7/15 on [a, b].

    f receives a 1-d array of nodes.  Returns (value, error_estimate).
    """
    edges = np.linspace(a, b, initial + 1)
    lo, hi = edges[:-1], edges[1:]
    vals, errs = _gk_panels(f, lo, hi)
    evals = 15 * len(lo)
    while True:
        total = vals.sum()
        err = errs.sum()
        if err <= max(abs_tol, rel_tol * abs(total)):
            return total, err
        if evals >= max_evals:
            raise QuadratureError("quad_interval budget exhausted", total, err)
        # split every panel carrying a significant share of the error
        order = np.argsort(errs)[::-1]
        cum = np.cumsum(errs[order])
        nsplit = int(np.searchsorted(cum, 0.5 * err)) + 1
        pick = order[:nsplit]
        keep = np.ones(len(lo), bool)
        keep[pick] = False
        m = (lo[pick] + hi[pick]) / 2
        nlo = np.r_[lo[pick], m]
        nhi = np.r_[m, hi[pick]]
        nv, ne = _gk_panels(f, nlo, nhi)
        evals += 15 * len(nlo)
        lo = np.r_[lo[keep], nlo]
        hi = np.r_[hi[keep], nhi]
        vals = np.r_[vals[keep], nv]
        errs = np.r_[errs[keep], ne]


def _gk_rects(f, s0, s1, a0, a1):
    # tensor GK15 x GK15 on rectangles in (s, theta); f maps (s, theta) arrays
    sm, sh = (s0 + s1) / 2, (s1 - s0) / 2
    am, ah = (a0 + a1) / 2, (a1 - a0) / 2
    S = sm[:, None, None] + sh[:, None, None] * _X15[None, :, None]
    A = am[:, None, None] + ah[:, None, None] * _X15[None, None, :]
    S, A = np.broadcast_arrays(S, A)
    fx = np.asarray(f(S.ravel(), A.ravel())).reshape(S.shape)
    jac = (sh * ah)
    kk = jac * np.einsum("mij,i,j->m", fx, _WK15, _WK15)
    gs = jac * np.einsum("mij,i,j->m", fx, _WG7, _WK15)
    ga = jac * np.einsum("mij,i,j->m", fx, _WK15, _WG7)
    return kk, np.abs(kk - gs), np.abs(kk - ga)


def quad_chamber(f, spec):
    """Integrate f over {t_1 > ... > t_r > 0, |t| <= radius} for r = 1, 2.

    f takes an array of points (m, r) and returns (m,) values.  In rank
    two the chamber is parametrised by polar coordinates on
    0 < theta < pi/4 and refined adaptively.  Returns (value, error).
    """
    if spec.dimension == 1:
        return quad_interval(lambda x: f(x[:, None]), 0.0, spec.radius,
                             spec.abs_tol, spec.rel_tol, spec.max_evals)

    def g(s, th):
        pts = np.stack([s * np.cos(th), s * np.sin(th)], axis=-1)
        return f(pts) * s

    s_edges = np.linspace(0, spec.radius, 5)
    a_edges = np.linspace(0, np.pi / 4, 3)
    S0, A0 = np.meshgrid(s_edges[:-1], a_edges[:-1], indexing="ij")
    S1, A1 = np.meshgrid(s_edges[1:], a_edges[1:], indexing="ij")
    rect = np.stack([S0.ravel(), S1.ravel(), A0.ravel(), A1.ravel()], 1)
    vals, es, ea = _gk_rects(g, *rect.T)
    evals = 225 * len(rect)
    while True:
        errs = np.maximum(es, ea)
        total = vals.sum()
        err = errs.sum()
        if err <= max(spec.abs_tol, spec.rel_tol * abs(total)):
            return total, err
        if evals >= spec.max_evals:
            raise QuadratureError("quad_chamber budget exhausted", total, err)
        order = np.argsort(errs)[::-1]
        cum = np.cumsum(errs[order])
        nsplit = int(np.searchsorted(cum, 0.5 * err)) + 1
        pick = order[:nsplit]
        keep = np.ones(len(rect), bool)
        keep[pick] = False
        new = []
        for i in pick:
            s0, s1, a0, a1 = rect[i]
            if es[i] >= ea[i]:
                m = (s0 + s1) / 2
                new += [(s0, m, a0, a1), (m, s1, a0, a1)]
            else:
                m = (a0 + a1) / 2
                new += [(s0, s1, a0, m), (s0, s1, m, a1)]
        new = np.array(new)
        nv, nes, nea = _gk_rects(g, *new.T)
        evals += 225 * len(new)
        rect = np.r_[rect[keep], new]
        vals = np.r_[vals[keep], nv]
        es = np.r_[es[keep], nes]
        ea = np.r_[ea[keep], nea]


def gauss_legendre(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return (a + b) / 2 + (b - a) / 2 * x, (b - a) / 2 * w


def shell_rule(edges, order=16):
    """Composite Gauss-Legendre nodes on consecutive shells [e_k, e_{k+1}].

    Returns (nodes, weights, shell index)."""
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = np.asarray(edges[:-1]), np.asarray(edges[1:])
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    shell = np.repeat(np.arange(len(lo)), order)
    return nodes, weights, shell


def newton_table(nodes, values):
    """Top row of the Newton divided-difference tableau for distinct nodes."""
    x = np.asarray(nodes, dtype=float)
    c = np.array(values, dtype=complex)
    n = len(x)
    for j in range(1, n):
        c[j:] = (c[j:] - c[j - 1:-1]) / (x[j:] - x[:n - j])
    return c


def hermite_table(nodes, derivs):
    """Top row of the confluent divided-difference tableau.

    derivs(k, x) returns the k-th derivative of f at x.  Nodes closer than
    1e-12 (relative) are treated as coincident.
    """
    z = np.sort(np.asarray(nodes, dtype=float))
    n = len(z)
    same = lambda i, j: abs(z[i] - z[j]) <= 1e-12 * max(1.0, abs(z[i]))
    table = np.zeros((n, n), dtype=complex)
    for i in range(n):
        table[i, 0] = derivs(0, z[i])
    for j in range(1, n):
        for i in range(j, n):
            if same(i, i - j):
                table[i, j] = derivs(j, z[i]) / factorial(j)
            else:
                table[i, j] = (table[i, j - 1] - table[i - 1, j - 1]) / (z[i] - z[i - j])
    return np.diagonal(table).copy()


def divided_difference(f, nodes, derivs=None):
    """f[x_1, ..., x_n]; repeated nodes need derivs(k, x)."""
    x = np.sort(np.asarray(nodes, dtype=float))
    if derivs is None:
        if np.any(np.diff(x) <= 1e-12 * np.maximum(1.0, np.abs(x[1:]))):
            derivs = lambda k, t: fd_derivative(f, t, k)
        else:
            return newton_table(x, [f(v) for v in x])[-1]
    return hermite_table(x, derivs)[-1]


def divided_ratio(f, nodes, t, derivs=None):
    """Stable value of f(t) / prod (t - t_i) when f vanishes at the nodes.

    This is the divided difference f[t_1, ..., t_n, t]; in general it is the
    remainder coefficient of Newton interpolation at the nodes.
    """
    return divided_difference(f, list(nodes) + [t], derivs)


def fd_derivative(f, x, k, h=None):
    """k-th derivative by central differences with one Richardson step."""
    if k == 0:
        return f(x)
    h = h or 1e-2 * max(1.0, abs(x))

    def central(hh):
        j = np.arange(k + 1)
        coef = (-1.0) ** j * np.array([factorial(k) / (factorial(i) * factorial(k - i)) for i in j])
        pts = x + (k / 2 - j) * hh
        return sum(c * f(p) for c, p in zip(coef, pts)) / hh ** k

    return (4 * central(h / 2) - central(h)) / 3


def fd_first(f, x, h=1e-4, richardson=True):
    d = lambda hh: (f(x + hh) - f(x - hh)) / (2 * hh)
    return (4 * d(h / 2) - d(h)) / 3 if richardson else d(h)


def fd_second(f, x, h=1e-3, richardson=True):
    """Central second difference, optionally Richardson-extrapolated."""
    d = lambda hh: (f(x + hh) - 2 * f(x) + f(x - hh)) / hh ** 2
    return (4 * d(h / 2) - d(h)) / 3 if richardson else d(h)


def make_rng(seed):
    """The single generator family used everywhere (PCG64)."""
    return np.random.default_rng(np.uint64(seed))


def haar_unitary(n, rng, size):
    """Haar-distributed U(n) matrices, shape (size, n, n), via phase-fixed QR."""
    z = (rng.normal(size=(size, n, n)) + 1j * rng.normal(size=(size, n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[:, None, :]


def haar_k_arrays(geom, rng, size):
    """Haar samples of K = S(U(r) x U(r+b)) as block matrices (size, n, n).

    A Haar pair in U(r) x U(r+b) is multiplied by the central phase that
    brings det A det D to 1; the map commutes with left translation by K,
    so the image is Haar on K.
    """
    r, q = geom.r, geom.r + geom.b
    A = haar_unitary(r, rng, size)
    D = haar_unitary(q, rng, size)
    det = np.linalg.det(A) * np.linalg.det(D)
    ph = np.exp(-1j * np.angle(det) / geom.n)
    out = np.zeros((size, geom.n, geom.n), dtype=complex)
    out[:, :r, :r] = A * ph[:, None, None]
    out[:, r:, r:] = D * ph[:, None, None]
    return out


def haar_k_sample(geom, seed, count):
    """List of Haar-distributed KElements drawn from an explicit seed."""
    from .geometry import KElement

    arr = haar_k_arrays(geom, make_rng(seed), count)
    return [KElement.from_matrix(m, geom.r, check=False) for m in arr]


def fit_inverse_r(R, v):
    """Least-squares fit v = v_inf + c/R; returns (v_inf, c, residual rms)."""
    R = np.asarray(R, dtype=float)
    v = np.asarray(v, dtype=float)
    X = np.stack([np.ones_like(R), 1 / R], 1)
    coef, *_ = np.linalg.lstsq(X, v, rcond=None)
    res = v - X @ coef
    return coef[0], coef[1], float(np.sqrt(np.mean(res ** 2)))


def loglog_slope(x, y):
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


THREADS_ENV = "GRASSMANN_HARMONICS_THREADS"


def worker_count():
    """Thread cap from the environment; 1 when unset."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def parallel_map(fn, items, workers=None):
    """map(fn, items) on a thread pool; results come back in input order."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
