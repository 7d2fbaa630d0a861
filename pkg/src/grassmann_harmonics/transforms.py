"""Poisson transform, its asymptotic operator S, ball averages and the
spherical transform on the line bundle over SU(r, r+b)/K."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import specfun as sf
from .geometry import (Geometry, a_matrix, cartan_arrays, inverse_arrays, iwasawa_boundary,
                       iwasawa_boundary_at, rho, weyl_density, weyl_group)
from .numerics import (QuadSpec, fit_inverse_r, gauss_legendre, haar_k_arrays, make_rng,
                       quad_chamber, shell_rule)
from .spherical import phi_group, phi_values

DEFAULT_R_GRID = {1: np.arange(5.0, 201.0, 5.0), 2: np.arange(5.0, 81.0, 5.0)}


def killing_factor(geom):
    """Killing length of the unit t-vector: |H|_K = 2 sqrt(2r+b) |t|."""
    return 2.0 * np.sqrt(2 * geom.r + geom.b)


def _kernel(lam, l, geom, H, detD, kind):
    lam = np.asarray(lam, dtype=complex)
    rh = rho(geom)
    if kind == "boundary":
        return np.exp(np.sum((1j * lam - rh) * H, axis=-1)) * detD ** (-l)
    if kind == "poisson":
        return np.exp(np.sum(-(1j * lam + rh) * H, axis=-1)) * detD ** l
    raise ValueError(f"unknown kernel kind {kind!r}")


def boundary_kernel(lam, l, geom, X, kind="boundary"):
    """Kernels evaluated at X = g^-1 k for stacks X (..., n, n).

    kind="boundary": exp((i lam - rho) H(X)) tau_l(kappa(X))^-1
    kind="poisson":  exp(-(i lam + rho) H(X)) tau_l(kappa(X))
    """
    H, detD = iwasawa_boundary(X, geom)
    return _kernel(lam, l, geom, H, detD, kind)


def boundary_kernel_at(lam, l, geom, y, t, kind="boundary"):
    """The same kernels at X = a_{-t} y, i.e. g = k1 a_t and y = k1^-1 k."""
    H, detD = iwasawa_boundary_at(y, t, geom)
    return _kernel(lam, l, geom, H, detD, kind)


def torus_k(thetas):
    """The maximal torus of K for (r, b) = (1, 0): diag(e^{i theta}, e^{-i theta})."""
    thetas = np.asarray(thetas, dtype=float)
    k = np.zeros(thetas.shape + (2, 2), dtype=complex)
    k[..., 0, 0] = np.exp(1j * thetas)
    k[..., 1, 1] = np.exp(-1j * thetas)
    return k


def k_rule(geom, nodes=256, samples=20_000, seed=0):
    """Equal-weight rule on K: exact trapezoid on the torus when K is one,
    Haar samples otherwise."""
    if geom.r == 1 and geom.b == 0:
        return torus_k(2 * np.pi * np.arange(nodes) / nodes)
    return haar_k_arrays(geom, make_rng(seed), samples)


@dataclass
class CyclicBoundaryFn:
    """f = sum_j a_j f_{g_j}^lambda with f_g(k) = exp((i lam - rho) H(g^-1 k)) tau_l^-1(kappa(g^-1 k))."""

    coeffs: np.ndarray
    points: np.ndarray
    lam: np.ndarray
    l: int
    geom: Geometry

    def __post_init__(self):
        self.coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        self.points = np.asarray(self.points, dtype=complex).reshape(-1, self.geom.n, self.geom.n)
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if len(self.coeffs) != len(self.points):
            raise ValueError("one coefficient per point")
        if len(self.lam) != self.geom.r:
            raise ValueError("lambda must have r components")
        if not sf.is_regular(self.lam):
            raise ValueError("lambda must be regular for cyclic functions to be dense")

    @classmethod
    def single(cls, geom, lam, l, g=None, coeff=1.0):
        g = np.eye(geom.n, dtype=complex) if g is None else np.asarray(g, dtype=complex)
        return cls([coeff], g[None], lam, l, geom)

    def scaled(self, c):
        return CyclicBoundaryFn(self.coeffs * c, self.points, self.lam, self.l, self.geom)

    def at_lambda(self, lam):
        return CyclicBoundaryFn(self.coeffs, self.points, lam, self.l, self.geom)

    def __call__(self, k):
        k = np.asarray(k, dtype=complex)
        ginv = inverse_arrays(self.points, self.geom)
        out = 0
        for a, gi in zip(self.coeffs, ginv):
            out = out + a * boundary_kernel(self.lam, self.l, self.geom, gi @ k)
        return out

    def norm2(self, nodes=2048, samples=200_000, seed=0):
        """||f||^2 in L^2(K)."""
        k = k_rule(self.geom, nodes, samples, seed)
        return float(np.mean(np.abs(self(k)) ** 2))


@dataclass
class RadialProfile:
    """f on the closed chamber (points t of shape (m, r)), zero outside the
    Killing ball of radius ``support``."""

    fn: object
    support: float
    name: str = "profile"

    def __call__(self, t, geom):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        rad = killing_factor(geom) * np.linalg.norm(t, axis=-1)
        inside = rad < self.support
        out = np.zeros(len(t), dtype=complex)
        if inside.any():
            out[inside] = self.fn(t[inside], geom)
        return out

    @classmethod
    def bump(cls, kind, support):
        """Bumps in s = |H| / support: 'smooth' exp(1 - 1/(1-s^2)),
        'quadratic' (1-s^2)^2, 'cone' (1-s)."""
        shapes = {
            "smooth": lambda s: np.exp(1 - 1 / np.maximum(1 - s ** 2, 1e-300)),
            "quadratic": lambda s: (1 - s ** 2) ** 2,
            "cone": lambda s: 1 - s,
        }
        if kind not in shapes:
            raise ValueError(f"unknown bump {kind!r}")
        shape = shapes[kind]

        def fn(t, geom):
            s = killing_factor(geom) * np.linalg.norm(t, axis=-1) / support
            with np.errstate(over="ignore"):
                return shape(np.minimum(s, 1.0))
        return cls(fn, float(support), kind)

    @classmethod
    def from_csv(cls, path, geom, support=None):
        """Table with columns t_1..t_r, re, im (optional header row).

        Rank one interpolates linearly in t; higher rank uses piecewise-linear
        interpolation on the Delaunay triangulation of the sample points.
        The support defaults to the largest Killing radius in the table.
        """
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and not row[0].lstrip().startswith("#")]
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
        data = np.array(rows, dtype=float)
        if data.ndim != 2 or data.shape[1] < 3:
            raise ValueError("expected columns t_1..t_r, re, im")
        r = data.shape[1] - 2
        pts, vals = data[:, :r], data[:, r] + 1j * data[:, r + 1]
        if r == 1:
            order = np.argsort(pts[:, 0])
            x, v = pts[order, 0], vals[order]

            def fn(t, geom):
                return (np.interp(t[:, 0], x, v.real, right=0.0)
                        + 1j * np.interp(t[:, 0], x, v.imag, right=0.0))
        else:
            from scipy.interpolate import LinearNDInterpolator
            interp = LinearNDInterpolator(pts, vals, fill_value=0.0)

            def fn(t, geom):
                return interp(t)

        if r != geom.r:
            raise ValueError(f"table has {r} chamber coordinates, geometry has rank {geom.r}")
        rad = killing_factor(geom) * np.linalg.norm(pts, axis=-1).max()
        supp = rad if support is None else float(support)
        return cls(fn, supp, str(path))


@dataclass
class LimitReport:
    R_grid: list
    values: list
    limit: float
    slope: float
    fit_rms: float
    extras: dict = field(default_factory=dict)


def poisson(f, g):
    """P_{lambda,l} f at group matrices g (..., n, n), in closed form through
    P f_{g_j} (g) = phi_{lambda,l}(g_j^-1 g)."""
    g = np.asarray(g, dtype=complex)
    ginv = inverse_arrays(f.points, f.geom)
    out = 0
    for a, gi in zip(f.coeffs, ginv):
        out = out + a * phi_group(f.lam, gi @ g, f.geom, f.l)
    return out


def poisson_integral(f, g, nodes=2048, samples=200_000, seed=0):
    """P_{lambda,l} f(g) by direct K-quadrature of
    int_K exp(-(i lam + rho) H(g^-1 k)) tau_l(kappa(g^-1 k)) f(k) dk."""
    g = np.asarray(g, dtype=complex).reshape(-1, f.geom.n, f.geom.n)
    k = k_rule(f.geom, nodes, samples, seed)
    fk = f(k)
    gi = inverse_arrays(g, f.geom)
    return np.array([np.mean(boundary_kernel(f.lam, f.l, f.geom, x @ k, "poisson") * fk)
                     for x in gi])


def weyl_translate(f, s):
    """U_s f = sum_j a_j f_{g_j}^{s lambda}."""
    return f.at_lambda(s.act(f.lam))


def s_operator_at(f, k1, t):
    """S f at g = k1 a_t:  sum_W c(s lam, l) exp((i s lam - rho)(t)) (U_s f)(k1).

    k1 (m, n, n), t (p, r); returns (m, p)."""
    t = np.atleast_2d(np.asarray(t, dtype=float))
    rh = rho(f.geom)
    out = 0
    for s in weyl_group(f.geom.r):
        sl = s.act(f.lam)
        radial = sf.hc_c(sl, f.l, f.geom.b) * np.exp(np.sum((1j * sl - rh) * t, axis=-1))
        out = out + weyl_translate(f, s)(k1)[:, None] * radial[None, :]
    return out


def s_operator(f, g):
    """S f(g) = tau_l^-1(k2) sum_W c(s lam, l) e^{(i s lam - rho)(H)} (U_s f)(k1) with g = k1 e^H k2."""
    g = np.asarray(g, dtype=complex).reshape(-1, f.geom.n, f.geom.n)
    k1, H, k2 = cartan_arrays(g, f.geom)
    r = f.geom.r
    tau_k2 = np.linalg.det(k2[:, r:, r:]) ** f.l
    rh = rho(f.geom)
    out = 0
    for s in weyl_group(r):
        sl = s.act(f.lam)
        radial = sf.hc_c(sl, f.l, f.geom.b) * np.exp(np.sum((1j * sl - rh) * H, axis=-1))
        out = out + weyl_translate(f, s)(k1) * radial
    return out / tau_k2


def _angular_rule(s_hi, freq, order=12):
    # composite Gauss-Legendre on (0, pi/4), enough panels to resolve freq * s
    panels = max(2, int(np.ceil(s_hi * freq * (np.pi / 4) / 2.0)) + 1)
    edges = np.linspace(0, np.pi / 4, panels + 1)
    x, w, _ = shell_rule(edges, order)
    return x, w


def chamber_shells(geom, R_grid, freq=3.0, sub=4, order=16):
    """Quadrature of the Weyl-integration measure Delta dH on Killing balls.

    Returns (points t (m, r), weights (m,), shell index into R_grid).  The
    cumulative sum of weights over shells <= k integrates over B(R_grid[k]).
    """
    R_grid = np.asarray(R_grid, dtype=float)
    kf = killing_factor(geom)
    T = np.r_[0.0, R_grid / kf]
    edges = np.unique(np.concatenate([np.linspace(T[i], T[i + 1], sub + 1) for i in range(len(R_grid))]))
    s, ws, _ = shell_rule(edges, order)
    shell = np.searchsorted(T[1:], s)
    if geom.r == 1:
        pts = s[:, None]
        w = ws
    else:
        pts_l, w_l, sh_l = [], [], []
        for k in range(len(R_grid)):
            sel = shell == k
            th, wt = _angular_rule(T[k + 1], freq)
            S, TH = np.meshgrid(s[sel], th, indexing="ij")
            pts_l.append(np.stack([S * np.cos(TH), S * np.sin(TH)], -1).reshape(-1, 2))
            w_l.append((ws[sel][:, None] * wt[None, :] * S).ravel())
            sh_l.append(np.full(S.size, k))
        pts = np.concatenate(pts_l)
        w = np.concatenate(w_l)
        shell = np.concatenate(sh_l)
    delta, _, _ = weyl_density(pts, geom.b)
    return pts, w * delta * kf ** geom.r, shell


def ball_profile(F, R_grid, geom, scheme="radial", nodes=256, samples=4000, seed=0,
                 freq=3.0, batch=2048):
    """(1/R^r) int_{B(R)} |F|^2 dg for every R in R_grid.

    scheme="radial": F(t) on chamber points; the integrand is K-bi-invariant.
    scheme="torus" / "mc": F(k, t) on g = k a_t with k from the torus rule
    ((r, b) = (1, 0)) or Haar samples; F must be right K-covariant by a
    unitary character so that |F| is right K-invariant.
    """
    R_grid = np.asarray(R_grid, dtype=float)
    pts, w, shell = chamber_shells(geom, R_grid, freq)
    if scheme == "radial":
        vals = np.concatenate([np.abs(F(pts[i:i + 8 * batch])) ** 2
                               for i in range(0, len(pts), 8 * batch)])
    elif scheme in ("torus", "mc"):
        if scheme == "torus" and not (geom.r == 1 and geom.b == 0):
            raise ValueError("torus scheme needs (r, b) = (1, 0)")
        k = k_rule(geom, nodes, samples, seed)
        vals = np.concatenate([np.mean(np.abs(F(k, pts[i:i + batch])) ** 2, axis=0)
                               for i in range(0, len(pts), batch)])
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    per_shell = np.bincount(shell, weights=w * vals, minlength=len(R_grid))
    return np.cumsum(per_shell) / R_grid ** geom.r


def ball_average(F, R, geom, scheme="radial", **kw):
    return float(ball_profile(F, [R], geom, scheme, **kw)[0])


def _fit_top_half(R_grid, values):
    R_grid = np.asarray(R_grid, dtype=float)
    top = R_grid >= np.median(R_grid)
    return fit_inverse_r(R_grid[top], np.asarray(values)[top])


def norm_limit(f, R_grid=None, scheme=None, **kw):
    """Extrapolated lim (1/R^r) int_{B(R)} |P f|^2 and its ratio to |c(lambda, l)|^2 ||f||^2.

    A single term at the origin is K-bi-covariant and uses the radial
    scheme; general cyclic functions integrate over K as well.
    """
    geom = f.geom
    R_grid = DEFAULT_R_GRID[geom.r] if R_grid is None else np.asarray(R_grid, dtype=float)
    at_origin = len(f.points) == 1 and np.allclose(f.points[0], np.eye(geom.n))
    if scheme is None:
        scheme = "radial" if at_origin else ("torus" if geom.r == 1 and geom.b == 0 else "mc")
    freq = 2 * float(np.max(np.abs(f.lam))) + 1
    if scheme == "radial":
        if not at_origin:
            raise ValueError("radial scheme needs f = a f_e")
        a = f.coeffs[0]

        def F(t):
            return a * phi_values(np.broadcast_to(f.lam, t.shape), t, geom.b, f.l)
        vals = ball_profile(F, R_grid, geom, "radial", freq=freq)
    else:
        def F(k, t):
            g = k[:, None] @ a_matrix(t, geom.b)[None, :]
            return poisson(f, g)
        vals = ball_profile(F, R_grid, geom, scheme, freq=freq, **kw)
    v_inf, c, rms = _fit_top_half(R_grid, vals)
    cnorm2 = float(np.abs(sf.hc_c(f.lam, f.l, geom.b)) ** 2)
    fn2 = 1.0 * abs(f.coeffs[0]) ** 2 if at_origin else f.norm2()
    return LimitReport(R_grid.tolist(), list(map(float, vals)), float(v_inf), float(c), rms,
                       {"c_abs2": cnorm2, "f_norm2": fn2, "ratio": float(v_inf) / (cnorm2 * fn2),
                        "scheme": scheme})


def asymptotic_residual(f, R_grid=None, scheme=None, **kw):
    """(1/R^r) int_{B(R)} |P f - S f|^2 on a grid of radii."""
    geom = f.geom
    R_grid = DEFAULT_R_GRID[geom.r] if R_grid is None else np.asarray(R_grid, dtype=float)
    if scheme is None:
        scheme = "torus" if geom.r == 1 and geom.b == 0 else "mc"
    freq = 2 * float(np.max(np.abs(f.lam))) + 1

    def F(k, t):
        g = k[:, None] @ a_matrix(t, geom.b)[None, :]
        return poisson(f, g) - s_operator_at(f, k, t)
    vals = ball_profile(F, R_grid, geom, scheme, freq=freq, **kw)
    return LimitReport(R_grid.tolist(), list(map(float, vals)), float(vals[-1]), float("nan"),
                       float("nan"), {"scheme": scheme})


def spherical_transform(profile, lam, l, geom, tol=1e-13):
    """int_{a+} F(H) conj(phi_{lambda,l}(e^H)) Delta(H) dH for a radial profile."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    kf = killing_factor(geom)

    def integrand(t):
        delta, _, _ = weyl_density(t, geom.b)
        ph = phi_values(np.broadcast_to(lam, t.shape), t, geom.b, l)
        return profile(t, geom) * np.conj(ph) * delta * kf ** geom.r

    val, _ = quad_chamber(integrand, QuadSpec(geom.r, profile.support / kf, tol, 1e-11))
    return complex(val)


def profile_norm(profile, geom, tol=1e-13):
    """||F||_2 for a radial profile."""
    kf = killing_factor(geom)

    def integrand(t):
        delta, _, _ = weyl_density(t, geom.b)
        return np.abs(profile(t, geom)) ** 2 * delta * kf ** geom.r

    val, _ = quad_chamber(integrand, QuadSpec(geom.r, profile.support / kf, tol, 1e-11))
    return float(np.sqrt(val.real))


def restriction_ratio(profile, lam, l, geom):
    """|F^(lambda)| / (|c(lambda, l)| R_supp^(r/2) ||F||_2)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    num = abs(spherical_transform(profile, lam, l, geom))
    den = float(np.abs(sf.hc_c(lam, l, geom.b))) * profile.support ** (geom.r / 2) \
        * profile_norm(profile, geom)
    return num / den


def star_norm(f, R_grid=None, scheme=None, **kw):
    """sup over R > 1 of ((1/R^r) int_{B(R)} |P f|^2)^(1/2), the sup taken on R_grid."""
    geom = f.geom
    R_grid = DEFAULT_R_GRID[geom.r] if R_grid is None else np.asarray(R_grid, dtype=float)
    rep = norm_limit(f, R_grid[R_grid > 1], scheme, **kw)
    return float(np.sqrt(max(rep.values)))


def plancherel_window(profile, geom, lam_max, n=400, l=0, t_panels=32):
    """(1/|W|) int_{|lam| <= lam_max} |F^(lam)|^2 |c(lam, l)|^-2 dlam at rank one.

    dlam is dual to the Killing-normalised dH, i.e. Lebesgue measure in the
    lam coordinate divided by 2 pi |H|_K / |t|.  The integrand is even, so
    only lam > 0 is integrated.
    """
    if geom.r != 1:
        raise NotImplementedError("rank one only")
    kf = killing_factor(geom)
    lam, w = gauss_legendre(n, 0.0, lam_max)
    # fixed panels in t: the profile is supported on a short interval
    edges = np.linspace(0.0, profile.support / kf, t_panels + 1)
    t, wt, _ = shell_rule(edges, 16)
    delta, _, _ = weyl_density(t[:, None], geom.b)
    weight = wt * delta * kf * profile(t[:, None], geom)
    L, T = np.meshgrid(lam, t, indexing="ij")
    ph = phi_values(L.reshape(-1, 1), T.reshape(-1, 1), geom.b, l).reshape(L.shape)
    fhat = np.conj(ph) @ weight
    c2 = np.abs(sf.hc_c(lam[:, None], l, geom.b)) ** 2
    return float(np.sum(w * np.abs(fhat) ** 2 / c2)) / (2 * np.pi * kf)


def graded_torus_rule(u_max, order=8):
    """Torus elements k_phi and weights (summing to ~1), graded geometrically
    toward phi = 0 and phi = pi.

    |phi - c| = e^{-u} with u in [0, u_max] on unit Gauss-Legendre panels,
    plus plain panels on 1 <= |phi - c| <= pi/2.  Elements near phi = pi
    are built as -k_delta so tiny offsets survive rounding.
    """
    edges = np.arange(0.0, np.ceil(u_max) + 1.0)
    u, wu, _ = shell_rule(edges, order)
    mid, wmid = gauss_legendre(2 * order, 1.0, np.pi / 2)
    offs = np.concatenate([np.exp(-u), mid])
    w = np.concatenate([wu * np.exp(-u), wmid])
    ks, ws = [], []
    for centre in (1.0, -1.0):
        for sgn in (1.0, -1.0):
            ks.append(centre * torus_k(sgn * offs))
            ws.append(w)
    return np.concatenate(ks), np.concatenate(ws) / (2 * np.pi)


def boundary_inversion(f, k, R_grid=None, order=8, sub=1):
    """f_R(k) = (1/R^r) int_{B(R)} exp((i lam - rho) H(g^-1 k)) tau_{-l}(kappa(g^-1 k)) P f(g) dg.

    For (r, b) = (1, 0) with g = k1 a_t.  The kernel peaks like 1/|phi| at
    k1 = +-k (phi the torus offset, peak width e^{-2t}), so the k1-integral
    runs over phi with y = k1^-1 k = k_phi built exactly and a rule graded
    in log|phi|.  The right K-integral is 1 because the integrand is right
    K-invariant.  Returns a LimitReport with the 1/R extrapolation.
    """
    geom = f.geom
    if not (geom.r == 1 and geom.b == 0):
        raise NotImplementedError("boundary inversion is implemented for (r, b) = (1, 0)")
    R_grid = DEFAULT_R_GRID[geom.r] if R_grid is None else np.asarray(R_grid, dtype=float)
    k = np.asarray(k, dtype=complex)
    k = k[None] if k.ndim == 2 else k
    pts, w, shell = chamber_shells(geom, R_grid, sub=sub)
    y, phi_w = graded_torus_rule(2 * pts.max() + 20, order)  # y = k1^-1 k
    yinv = np.conj(y)
    limits, profiles, rms_all = [], [], []
    for kq in k:
        k1 = kq[None] @ yinv
        vals = np.empty(len(pts), dtype=complex)
        for i0 in range(0, len(pts), 64):
            t = pts[i0:i0 + 64]
            g = k1[:, None] @ a_matrix(t, geom.b)[None, :]   # (P, m, n, n)
            # tau_{-l}(kappa) = tau_l(kappa)^-1, the boundary kernel's character
            kern = boundary_kernel_at(f.lam, f.l, geom, y[:, None], t[None, :], "boundary")
            vals[i0:i0 + 64] = np.einsum("p,pm->m", phi_w, kern * poisson(f, g))
        per_shell = np.bincount(shell, weights=(w * vals).real, minlength=len(R_grid)) + \
            1j * np.bincount(shell, weights=(w * vals).imag, minlength=len(R_grid))
        prof = np.cumsum(per_shell) / R_grid ** geom.r
        re = _fit_top_half(R_grid, prof.real)
        im = _fit_top_half(R_grid, prof.imag)
        limits.append(complex(re[0], im[0]))
        profiles.append(prof)
        rms_all.append(max(re[2], im[2]))
    c2 = float(np.abs(sf.hc_c(f.lam, f.l, geom.b)) ** 2)
    return LimitReport(R_grid.tolist(), [complex(v) for v in profiles[0]], limits[0],
                       float("nan"), rms_all[0], {"all_limits": limits, "c_abs2": c2})
