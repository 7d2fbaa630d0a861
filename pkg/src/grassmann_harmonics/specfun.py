"""Scalar special functions.

Complex log-gamma, the Gauss hypergeometric function on the negative real
axis, Jacobi functions of order (b, -l) with their connection coefficient,
and the multi-variable c-, pi- and b-functions of SU(r, r+b).

Every routine broadcasts over numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

# Lanczos approximation, g = 7, n = 9.
LANCZOS_G = 7.0
LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

SERIES_RTOL = 1e-17
MAX_TERMS = 10_000
# Guard band around integer values of i*mu.
INTEGER_GUARD = 1e-6
# Number of nodes for the circle average used at degenerate parameters.
CIRCLE_NODES = 32
EPS = np.finfo(float).eps


class PoleError(ValueError):
    """Evaluation requested at a pole."""


class ConvergenceError(RuntimeError):
    """A series failed to converge within the term budget."""


def _near_int(z, tol):
    z = np.asarray(z, dtype=complex)
    return (np.abs(z.imag) <= tol) & (np.abs(z.real - np.round(z.real)) <= tol)


def _is_pole(z, tol=0.0):
    z = np.asarray(z, dtype=complex)
    return _near_int(z, tol) & (np.round(z.real) <= 0)


def _lanczos(z):
    # valid for Re z >= 1/2
    zm = z - 1
    acc = np.full_like(zm, LANCZOS_COEF[0])
    for k in range(1, len(LANCZOS_COEF)):
        acc = acc + LANCZOS_COEF[k] / (zm + k)
    t = zm + LANCZOS_G + 0.5
    return LOG_SQRT_2PI + (zm + 0.5) * np.log(t) - t + np.log(acc)


def ln_gamma(z):
    """Logarithm of the gamma function for complex arguments.

    The branch is the analytic continuation of the real log-gamma to the
    plane cut along the negative axis (the convention of mpmath.loggamma).
    Uses the Lanczos approximation on Re z >= 1/2 and upward recurrence
    with principal logs of z, z+1, ... elsewhere.  Raises PoleError at
    non-positive integers.
    """
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any(_is_pole(z)):
        raise PoleError("ln_gamma evaluated at a non-positive integer")
    out = np.empty_like(z)
    right = z.real >= 0.5
    out[right] = _lanczos(z[right])
    zl = z[~right]
    if zl.size:
        shift = np.ceil(0.5 - zl.real).astype(int)
        acc = np.zeros_like(zl)
        for k in range(int(shift.max())):
            live = k < shift
            acc[live] += np.log(zl[live] + k)
        out[~right] = _lanczos(zl + shift) - acc
    return out[0] if scalar else out


def log_rgamma(z):
    """Return (log(1/Gamma(z)), is_pole); at poles the log is set to 0
    and the mask is True so callers can zero the factor."""
    z = np.asarray(z, dtype=complex)
    pole = _is_pole(z)
    safe = np.where(pole, 0.5, z)
    return np.where(pole, 0.0, -ln_gamma(safe)), pole


def gamma_ratio(num, den):
    """prod Gamma(num) / prod Gamma(den) along the last axis.

    Poles in the denominator give zero; poles in the numerator raise.
    """
    num = np.asarray(num, dtype=complex)
    den = np.asarray(den, dtype=complex)
    lr, pole = log_rgamma(den)
    lg = ln_gamma(num).sum(axis=-1) + lr.sum(axis=-1)
    return np.where(pole.any(axis=-1), 0.0, np.exp(lg))


def _series(a, b, c, z, max_terms=MAX_TERMS):
    # returns (sum, largest |term|)
    a, b, c, z = np.broadcast_arrays(*(np.asarray(v, dtype=complex) for v in (a, b, c, z)))
    shape = a.shape
    a, b, c, z = (v.ravel() for v in (a, b, c, z))
    total = np.ones(a.size, dtype=complex)
    term = np.ones(a.size, dtype=complex)
    peak = np.ones(a.size)
    quiet = np.zeros(a.size, dtype=int)
    active = np.arange(a.size)
    for n in range(max_terms):
        if active.size == 0:
            break
        ia = active
        term[ia] = term[ia] * (a[ia] + n) * (b[ia] + n) / ((c[ia] + n) * (n + 1)) * z[ia]
        total[ia] += term[ia]
        mag = np.abs(term[ia])
        peak[ia] = np.maximum(peak[ia], mag)
        small = mag <= SERIES_RTOL * np.abs(total[ia])
        quiet[ia] = np.where(small, quiet[ia] + 1, 0)
        active = ia[quiet[ia] < 2]
    if active.size:
        raise ConvergenceError(f"series did not converge in {max_terms} terms")
    return total.reshape(shape), peak.reshape(shape)


def hyp_series(a, b, c, z, max_terms=MAX_TERMS):
    """Plain Gauss series sum_n (a)_n (b)_n / ((c)_n n!) z^n.

    Stops when two consecutive terms fall below SERIES_RTOL times the
    partial sum.
    """
    return _series(a, b, c, z, max_terms)[0]


def _terminates(a, b):
    return _is_pole(a) | _is_pole(b)


def _pfaff(a, b, c, x):
    # (value, rounding-error estimate)
    z = x / (x - 1.0)
    pref = np.exp(-a * np.log1p(-x))
    s, peak = _series(a, c - b, c, z)
    return pref * s, EPS * np.abs(pref) * peak


def _reciprocal(a, b, c, x):
    # expansion in 1/(1-x); requires a-b away from the integers
    a, b, c, x = np.broadcast_arrays(a, b, c, x)
    w = 1.0 / (1.0 - x)
    log1mx = np.log1p(-x)
    p1 = gamma_ratio(np.stack([c, b - a], -1), np.stack([b, c - a], -1))
    p2 = gamma_ratio(np.stack([c, a - b], -1), np.stack([a, c - b], -1))
    p1 = p1 * np.exp(-a * log1mx)
    p2 = p2 * np.exp(-b * log1mx)
    s1, k1 = _series(a, c - b, a - b + 1, w)
    s2, k2 = _series(b, c - a, b - a + 1, w)
    err = EPS * (np.abs(p1) * k1 + np.abs(p2) * k2)
    return p1 * s1 + p2 * s2, err


def _reciprocal_circle(a, b, c, x):
    # F is entire in b, so its value is the mean over a circle in b that
    # keeps a-b clear of the integers where the two terms above blow up.
    delta = 0.5 / np.maximum(1.0, np.log1p(-x))
    theta = 2 * np.pi * (np.arange(CIRCLE_NODES) + 0.5) / CIRCLE_NODES
    shift = delta[:, None] * np.exp(1j * theta)[None, :]
    vals, err = _reciprocal(a[:, None], b[:, None] + shift, c[:, None], x[:, None])
    return vals.mean(axis=1), err.max(axis=1)


def _route_reciprocal(a, b, c, x):
    delta = 0.5 / np.maximum(1.0, np.log1p(-x))
    dist = np.abs(a - b - np.round((a - b).real))
    degen = dist < delta / 2
    val = np.empty(a.size, dtype=complex)
    err = np.empty(a.size)
    if np.any(~degen):
        m = ~degen
        val[m], err[m] = _reciprocal(a[m], b[m], c[m], x[m])
    if np.any(degen):
        val[degen], err[degen] = _reciprocal_circle(a[degen], b[degen], c[degen], x[degen])
    return val, err


def gauss_2f1(a, b, c, x):
    """Gauss hypergeometric function F(a, b; c; x) for real x <= 0.

    Routes: the Pfaff map x -> x/(x-1) into [0, 1) followed by the series
    (in either numerator parameter), and the expansion in 1/(1-x).  The
    first Pfaff form is used when its rounding estimate is small; otherwise
    every feasible route is tried and the one with the smallest error
    estimate is kept.
    """
    a, b, c = (np.asarray(v, dtype=complex) for v in (a, b, c))
    x = np.asarray(x, dtype=float)
    if np.any(x > 0):
        raise ValueError("gauss_2f1 requires x <= 0")
    if np.any(_is_pole(c)):
        raise PoleError("c is a non-positive integer")
    a, b, c, x = np.broadcast_arrays(a, b, c, x)
    shape = a.shape
    a, b, c, x = (v.ravel() for v in (a, b, c, x))
    n = a.size
    best = np.full(n, np.nan + 0j)
    best_err = np.full(n, np.inf)

    def offer(mask, route, p, q):
        if not np.any(mask):
            return
        val, err = route(p[mask], q[mask], c[mask], x[mask])
        rel = err / np.maximum(np.abs(val), 1e-300)
        idx = np.flatnonzero(mask)
        take = rel < best_err[idx]
        best[idx[take]] = val[take]
        best_err[idx[take]] = rel[take]

    z1 = x / (x - 1.0)
    ok_a = (z1 <= 0.9) | _terminates(a, c - b)
    offer(ok_a, _pfaff, a, b)
    pending = best_err > 1e-14
    ok_b = pending & ((z1 <= 0.9) | _terminates(b, c - a))
    offer(ok_b, _pfaff, b, a)
    pending = best_err > 1e-14
    offer(pending & (x < -0.05), _route_reciprocal, a, b)
    if np.any(np.isnan(best)):
        raise ConvergenceError("no convergent route for gauss_2f1")
    return best.reshape(shape) if shape else best[0]


@dataclass(frozen=True)
class JacobiOrder:
    """Jacobi order (alpha, beta) = (b, -l)."""

    alpha: int
    beta: int

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    @classmethod
    def from_bundle(cls, b, l):
        return cls(int(b), -int(l))

    @property
    def b(self):
        return self.alpha

    @property
    def l(self):
        return -self.beta

    @property
    def rho(self):
        """alpha + beta + 1."""
        return self.alpha + self.beta + 1


def jacobi_phi(mu, t, order):
    """Jacobi function phi_mu^(b,-l)(t) = F(a, a'; b+1; -sinh(t)^2).

    Even in mu and equal to 1 at t = 0.
    """
    mu = np.asarray(mu, dtype=complex)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    b, rho = order.alpha, order.rho
    a1 = (1j * mu + rho) / 2
    a2 = (-1j * mu + rho) / 2
    return gauss_2f1(a1, a2, b + 1, -np.sinh(t) ** 2)


def _check_psi(mu, t):
    if np.any(np.sinh(t) <= 1.0):
        raise ValueError("jacobi_psi needs sinh(t) > 1")
    imu = 1j * np.asarray(mu, dtype=complex)
    if np.any(_near_int(imu, INTEGER_GUARD) & (np.round(imu.real) >= 1)):
        raise PoleError("i*mu is a positive integer")


def jacobi_psi(mu, t, order):
    """Second solution psi_mu(t), behaving like exp((i mu - b - 1 + l) t).

    Defined for sinh(t) > 1 and i*mu not a positive integer.
    """
    mu = np.asarray(mu, dtype=complex)
    t = np.asarray(t, dtype=float)
    _check_psi(mu, t)
    b, l = order.alpha, order.l
    s = np.sinh(t)
    expo = 1j * mu - b - 1 + l
    A = (-1j * mu + b - l + 1) / 2
    B = (-1j * mu - b - l + 1) / 2
    return np.exp(expo * np.log(2 * s)) * gauss_2f1(A, B, 1 - 1j * mu, -1.0 / s ** 2)


def jacobi_c(mu, order):
    """Connection coefficient c_l(mu) with phi = c(mu) psi_mu + c(-mu) psi_-mu."""
    mu = np.asarray(mu, dtype=complex)
    imu = 1j * mu
    if np.any(_near_int(imu, INTEGER_GUARD)):
        raise PoleError("i*mu is an integer")
    b, l = order.alpha, order.l
    g = gamma_ratio(np.stack([np.full_like(imu, b + 1), imu], -1),
                    np.stack([(b + 1 - l + imu) / 2, (b + 1 + l + imu) / 2], -1))
    return np.exp((b + 1 - l - imu) * np.log(2.0)) * g


def _lam(lam):
    lam = np.asarray(lam, dtype=complex)
    return np.atleast_1d(lam)


def _pair_product(y):
    # prod_{j<k} (y_j - y_k) along the last axis
    r = y.shape[-1]
    out = np.ones(y.shape[:-1], dtype=complex)
    for j in range(r):
        for k in range(j + 1, r):
            out = out * (y[..., j] - y[..., k])
    return out


def hc_c0(r, b):
    """c_0 = (b!)^r 2^(r(r+b)) prod_{j<r} (b+j)^(r-j) j!."""
    c0 = float(factorial(b)) ** r * 2.0 ** (r * (r + b))
    for j in range(1, r):
        c0 *= (b + j) ** (r - j) * factorial(j)
    return c0


def is_regular(lam, tol=1e-12):
    """lambda_i != 0 and lambda_i +- lambda_j != 0 for i < j."""
    lam = _lam(lam)
    r = lam.shape[-1]
    ok = np.all(np.abs(lam) > tol, axis=-1)
    for i in range(r):
        for j in range(i + 1, r):
            ok &= np.abs(lam[..., i] - lam[..., j]) > tol
            ok &= np.abs(lam[..., i] + lam[..., j]) > tol
    return ok


def hc_c(lam, l, b):
    """Harish-Chandra c-function c(lambda, l) of SU(r, r+b), r = len(lambda).

    The leading axes of lam broadcast.
    """
    lam = _lam(lam)
    r = lam.shape[-1]
    if np.any(~is_regular(lam)):
        raise PoleError("lambda lies on a wall")
    il = 1j * lam
    log_gam = ln_gamma(il)
    lr1, p1 = log_rgamma((b + 1 + il + l) / 2)
    lr2, p2 = log_rgamma((b + 1 + il - l) / 2)
    logs = (-il * np.log(2.0) + log_gam + lr1 + lr2).sum(axis=-1)
    zero = (p1 | p2).any(axis=-1)
    pref = (-1) ** (r * (r - 1) // 2) * 2.0 ** (r * (r - 1)) * hc_c0(r, b)
    val = pref * np.exp(logs) / _pair_product(lam ** 2)
    val = np.where(zero, 0.0, val)
    return val if val.ndim else complex(val)


def pi_short(lam, b):
    """Product of the short positive roots,
    (4(b+2r))^(-r^2) prod lambda_j prod_{j<k} (lambda_j^2 - lambda_k^2)."""
    lam = _lam(lam)
    r = lam.shape[-1]
    return (1.0 / (4 * (b + 2 * r))) ** (r * r) * np.prod(lam, axis=-1) * _pair_product(lam ** 2)


def eps_l(l, b):
    """+1 normally, -1 when b + 1 - |l| is a non-positive even integer.

    c(lambda, l) is even in l, so the degenerate case is read with |l|.
    """
    m = b + 1 - abs(int(l))
    return -1 if (m <= 0 and m % 2 == 0) else 1


def pi_l(z, l, b):
    """pi_l(z): pi(z) in the normal case, the bare root product otherwise."""
    z = _lam(z)
    if eps_l(l, b) == 1:
        return pi_short(z, b)
    # prod (lambda_j^2 - lambda_k^2) written in z = i*lambda
    r = z.shape[-1]
    return (-1) ** (r * (r - 1) // 2) * _pair_product(z ** 2)


def b_fn(lam, l, b):
    """b(lambda, l) = pi_l(i lambda) c(lambda, l)."""
    lam = _lam(lam)
    return pi_l(1j * lam, l, b) * hc_c(lam, l, b)


def b_window_exponent(l, b):
    """Exponent (b - eps(l)/2)/2 of the two-sided bound on 1/|b(lambda, l)|."""
    return (b - eps_l(l, b) / 2) / 2
