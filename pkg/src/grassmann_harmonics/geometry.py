"""Structure of G = SU(r, r+b).

Matrices act on C^n, n = 2r + b, preserving the form J = diag(I_r, -I_{r+b}).
K = S(U(r) x U(r+b)) sits block-diagonally, and the abelian group A consists
of the matrices a_T = exp(H_T) with H_T coupling coordinate i to r + i.

Most functions accept a single matrix or a stack of shape (..., n, n).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import factorial

import numpy as np

STRUCT_TOL = 1e-10
RECON_TOL = 1e-9
EIG_FLOOR = 1e-300


@dataclass(frozen=True)
class Geometry:
    """Rank r and bundle parameter b of SU(r, r+b)."""

    r: int
    b: int = 0

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"rank must be a positive integer, got {self.r}")
        if int(self.b) != self.b or self.b < 0:
            raise ValueError(f"b must be a non-negative integer, got {self.b}")

    @property
    def n(self):
        return 2 * self.r + self.b

    @property
    def killing_scale(self):
        """B(X, Y) = killing_scale * Tr(XY)."""
        return 2 * (2 * self.r + self.b)

    @property
    def J(self):
        return np.diag(np.r_[np.ones(self.r), -np.ones(self.r + self.b)]).astype(complex)

    def killing(self, X, Y):
        return self.killing_scale * np.trace(X @ Y)

    def rho(self):
        return rho(self)

    def rho_l(self, l):
        return rho_l(self, l)

    def weyl_order(self):
        return 2 ** self.r * factorial(self.r)


@dataclass(frozen=True, eq=False)
class GroupElement:
    """An element of SU(r, r+b) stored as its n x n matrix."""

    m: np.ndarray
    geom: Geometry
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = np.asarray(self.m, dtype=complex)
        object.__setattr__(self, "m", m)
        if m.shape != (self.geom.n, self.geom.n):
            raise ValueError(f"expected a {self.geom.n}x{self.geom.n} matrix, got {m.shape}")
        if self.check:
            err = group_defect(m, self.geom)
            if err > STRUCT_TOL * max(1.0, np.abs(m).max() ** 2):
                raise ValueError(f"matrix is not in SU(r, r+b) (defect {err:.2e})")

    def __matmul__(self, other):
        om = other.m if isinstance(other, (GroupElement, KElement)) else np.asarray(other)
        return GroupElement(self.m @ om, self.geom, check=False)

    def inv(self):
        J = self.geom.J
        return GroupElement(J @ self.m.conj().T @ J, self.geom, check=False)


def group_defect(m, geom):
    """max(|m* J m - J|, |det m - 1|)."""
    J = geom.J
    return max(np.abs(m.conj().T @ J @ m - J).max(), abs(np.linalg.det(m) - 1))


@dataclass(frozen=True, eq=False)
class KElement:
    """k = diag(A, D) in S(U(r) x U(r+b))."""

    A: np.ndarray
    D: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        D = np.atleast_2d(np.asarray(self.D, dtype=complex))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "D", D)
        if self.check:
            ua = np.abs(A.conj().T @ A - np.eye(len(A))).max()
            ud = np.abs(D.conj().T @ D - np.eye(len(D))).max()
            dd = abs(np.linalg.det(A) * np.linalg.det(D) - 1)
            if max(ua, ud, dd) > STRUCT_TOL:
                raise ValueError(f"not an element of K (defect {max(ua, ud, dd):.2e})")

    @property
    def geom(self):
        r = len(self.A)
        return Geometry(r, len(self.D) - r)

    @property
    def m(self):
        r, q = len(self.A), len(self.D)
        out = np.zeros((r + q, r + q), dtype=complex)
        out[:r, :r] = self.A
        out[r:, r:] = self.D
        return out

    @classmethod
    def from_matrix(cls, m, r, check=True):
        m = np.asarray(m, dtype=complex)
        if check:
            leak = max(np.abs(m[:r, r:]).max(initial=0.0), np.abs(m[r:, :r]).max(initial=0.0))
            if leak > 1e-8:
                raise ValueError(f"matrix is not block diagonal (leakage {leak:.2e})")
        return cls(m[:r, :r], m[r:, r:], check=check)

    @classmethod
    def identity(cls, geom):
        return cls(np.eye(geom.r), np.eye(geom.r + geom.b), check=False)

    def __matmul__(self, other):
        if isinstance(other, KElement):
            return KElement(self.A @ other.A, self.D @ other.D, check=False)
        om = other.m if isinstance(other, GroupElement) else np.asarray(other)
        return GroupElement(self.m @ om, self.geom, check=False)

    def inv(self):
        return KElement(self.A.conj().T, self.D.conj().T, check=False)

    def as_group(self):
        return GroupElement(self.m, self.geom, check=False)


@dataclass(frozen=True)
class IwasawaFactors:
    """g = k exp(H) n."""

    k: KElement
    H: np.ndarray
    n_part: GroupElement

    def compose(self):
        geom = self.n_part.geom
        return self.k.m @ a_matrix(self.H, geom.b) @ self.n_part.m


@dataclass(frozen=True)
class CartanFactors:
    """g = k1 exp(H) k2 with H in the closed chamber."""

    k1: KElement
    H: np.ndarray
    k2: KElement

    def compose(self):
        b = len(self.k1.D) - len(self.k1.A)
        return self.k1.m @ a_matrix(self.H, b) @ self.k2.m


@dataclass(frozen=True)
class WeylElement:
    """s = (signs, perm) acting by (s lam)_j = signs[j] * lam[perm[j]]."""

    signs: tuple
    perm: tuple

    def __post_init__(self):
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError("perm must be a permutation of 0..r-1")
        if len(self.signs) != len(self.perm) or any(s not in (1, -1) for s in self.signs):
            raise ValueError("signs must be +-1, one per coordinate")

    def act(self, lam):
        lam = np.asarray(lam)
        return np.asarray(self.signs) * lam[..., list(self.perm)]

    def __mul__(self, other):
        # (self * other) lam = self(other(lam))
        signs = tuple(self.signs[j] * other.signs[self.perm[j]] for j in range(len(self.perm)))
        perm = tuple(other.perm[self.perm[j]] for j in range(len(self.perm)))
        return WeylElement(signs, perm)

    def inv(self):
        r = len(self.perm)
        perm = [0] * r
        signs = [0] * r
        for j in range(r):
            perm[self.perm[j]] = j
            signs[self.perm[j]] = self.signs[j]
        return WeylElement(tuple(signs), tuple(perm))

    @property
    def parity(self):
        """Sign of the underlying permutation."""
        p = list(self.perm)
        sgn = 1
        for i in range(len(p)):
            while p[i] != i:
                j = p[i]
                p[i], p[j] = p[j], p[i]
                sgn = -sgn
        return sgn

    @classmethod
    def identity(cls, r):
        return cls((1,) * r, tuple(range(r)))


def weyl_group(r):
    """All 2^r r! signed permutations."""
    return [WeylElement(signs, perm)
            for perm in itertools.permutations(range(r))
            for signs in itertools.product((1, -1), repeat=r)]


def _geom_of(g, geom=None):
    if geom is not None:
        return geom
    if isinstance(g, (GroupElement, KElement)):
        return g.geom
    raise ValueError("a Geometry is needed for raw matrices")


def _as_matrix(g):
    if isinstance(g, (GroupElement, KElement)):
        return g.m
    return np.asarray(g, dtype=complex)


def a_matrix(t, b):
    """Stack of a_T = exp(H_T) for t of shape (..., r)."""
    t = np.asarray(t, dtype=float)
    r = t.shape[-1]
    n = 2 * r + b
    out = np.zeros(t.shape[:-1] + (n, n), dtype=complex)
    idx = np.arange(r)
    ch, sh = np.cosh(t), np.sinh(t)
    out[..., idx, idx] = ch
    out[..., r + idx, r + idx] = ch
    out[..., idx, r + idx] = sh
    out[..., r + idx, idx] = sh
    j = np.arange(2 * r, n)
    out[..., j, j] = 1.0
    return out


def h_matrix(t, b):
    """H_T itself."""
    t = np.asarray(t, dtype=float)
    r = t.shape[-1]
    n = 2 * r + b
    out = np.zeros(t.shape[:-1] + (n, n), dtype=complex)
    idx = np.arange(r)
    out[..., idx, r + idx] = t
    out[..., r + idx, idx] = t
    return out


def make_a(t, geom):
    """a_T as a GroupElement; len(t) must equal the rank."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.shape != (geom.r,):
        raise ValueError(f"expected {geom.r} coordinates, got {t.shape}")
    return GroupElement(a_matrix(t, geom.b), geom, check=False)


def rho(geom):
    """rho_j = b + 1 + 2(r - j), j = 1..r."""
    j = np.arange(1, geom.r + 1)
    return (geom.b + 1 + 2 * (geom.r - j)).astype(float)


def rho_l(geom, l):
    return rho(geom) - l


def positive_roots(geom):
    """(coefficient vector, multiplicity) for every positive root."""
    r, b = geom.r, geom.b
    e = np.eye(r)
    roots = [(2 * e[j], 1) for j in range(r)]
    for i in range(r):
        for j in range(i + 1, r):
            roots.append((e[i] - e[j], 2))
            roots.append((e[i] + e[j], 2))
    if b:
        roots += [(e[j], 2 * b) for j in range(r)]
    return roots


def weight_basis(geom):
    """Unitary P whose columns are ordered by descending a-weight:
    u_1..u_r, the zero-weight block, v_r..v_1."""
    r, n = geom.r, geom.n
    P = np.zeros((n, n), dtype=complex)
    s = 1 / np.sqrt(2)
    for i in range(r):
        P[i, i] = s
        P[r + i, i] = s
        P[i, n - 1 - i] = s
        P[r + i, n - 1 - i] = -s
    for c, j in enumerate(range(2 * r, n)):
        P[j, r + c] = 1.0
    return P


def _positive_qr(m):
    Q, R = np.linalg.qr(m)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    ph = d / np.abs(d)
    Q = Q * ph[..., None, :]
    R = R * ph.conj()[..., :, None]
    return Q, R


def iwasawa_arrays(m, geom):
    """Batched Iwasawa factors (k, H, n) of matrices m (..., n, n)."""
    m = np.asarray(m, dtype=complex)
    P = weight_basis(geom)
    Ph = P.conj().T
    Q, R = _positive_qr(Ph @ m @ P)
    diag = np.diagonal(R, axis1=-2, axis2=-1).real
    if np.any(diag <= 0):
        raise ValueError("non-positive pivot: input is not a group element")
    H = np.log(diag[..., : geom.r])
    k = P @ Q @ Ph
    npart = P @ (R / diag[..., :, None]) @ Ph
    return k, H, npart


def iwasawa(g, geom=None):
    """g = kappa(g) exp(H(g)) n(g)."""
    geom = _geom_of(g, geom)
    k, H, npart = iwasawa_arrays(_as_matrix(g), geom)
    return IwasawaFactors(KElement.from_matrix(k, geom.r),
                          H, GroupElement(npart, geom, check=False))


def cartan_arrays(m, geom):
    """Batched Cartan factors (k1, t, k2) with m = k1 a_t k2."""
    m = np.asarray(m, dtype=complex)
    r, n = geom.r, geom.n
    W, sig, Yh = np.linalg.svd(m)
    Y = np.swapaxes(Yh, -1, -2).conj()
    u = W @ Yh
    logp = (Y * np.log(np.maximum(sig, EIG_FLOOR))[..., None, :]) @ Yh
    Z = logp[..., :r, r:]
    U, s, Vh = np.linalg.svd(Z, full_matrices=True)
    V = np.swapaxes(Vh, -1, -2).conj()
    det = np.linalg.det(U) * np.linalg.det(V)
    ph = np.exp(-1j * np.angle(det) / n)
    U = U * ph[..., None, None]
    V = V * ph[..., None, None]
    kt = np.zeros(m.shape, dtype=complex)
    kt[..., :r, :r] = U
    kt[..., r:, r:] = V
    k1 = u @ kt
    k2 = np.swapaxes(kt, -1, -2).conj()
    return k1, s, k2


def cartan(g, geom=None):
    """g = k1 exp(A+(g)) k2, A+(g) in the closed chamber."""
    geom = _geom_of(g, geom)
    k1, s, k2 = cartan_arrays(_as_matrix(g), geom)
    return CartanFactors(KElement.from_matrix(k1, geom.r), s,
                         KElement.from_matrix(k2, geom.r))


def _unitary_polar(m):
    W, _, Yh = np.linalg.svd(m)
    return W @ Yh


def polar_k_arrays(m, geom):
    """Unitary polar factor of m, computed blockwise.

    For m = k1 a k2 the diagonal blocks are A1 cosh(t) A2 and
    D1 diag(cosh t, I) D2, whose unitary factors are the blocks of k1 k2.
    """
    m = np.asarray(m, dtype=complex)
    r = geom.r
    out = np.zeros(m.shape, dtype=complex)
    out[..., :r, :r] = _unitary_polar(m[..., :r, :r])
    out[..., r:, r:] = _unitary_polar(m[..., r:, r:])
    return out


def polar_k(g, geom=None):
    """pi_0(g), the K-part of g in G = K exp(p)."""
    geom = _geom_of(g, geom)
    m = _as_matrix(g)
    J = geom.J
    scale = max(1.0, np.abs(m).max() ** 2)
    if np.abs(m.conj().T @ J @ m - J).max() > 1e-8 * scale:
        raise ValueError("polar_k needs an element of SU(r, r+b)")
    return KElement.from_matrix(polar_k_arrays(m, geom), geom.r)


def tau(k, l, r=None):
    """Character tau_l(k) = (det D)^l.

    k may be a KElement or a stack of n x n block-diagonal matrices, in
    which case r must be given.
    """
    if isinstance(k, KElement):
        return complex(np.linalg.det(k.D) ** l)
    m = np.asarray(k, dtype=complex)
    d = np.linalg.det(m[..., r:, r:])
    return d ** l


def tau_pi0(m, geom, l):
    """tau_l(pi_0(g)) = (det g_22 / |det g_22|)^l without forming pi_0."""
    d = np.linalg.det(np.asarray(m, dtype=complex)[..., geom.r:, geom.r:])
    return (d / np.abs(d)) ** l


def boundary_pair(g, k, geom=None):
    """(H(g^-1 k), kappa(g^-1 k))."""
    geom = _geom_of(g, geom)
    gi = GroupElement(_as_matrix(g), geom, check=False).inv()
    fac = iwasawa(gi.m @ _as_matrix(k), geom)
    return fac.H, fac.k


def radial_part(m, geom):
    """(A+(g), det g_22 / |det g_22|) for stacks of group matrices.

    sinh of the Cartan coordinates are the singular values of the
    lower-left block, which stays accurate when g has large entries.
    """
    m = np.asarray(m, dtype=complex)
    r = geom.r
    sv = np.linalg.svd(m[..., r:, :r], compute_uv=False)
    s = np.arcsinh(sv)
    d = np.linalg.det(m[..., r:, r:])
    return s, d / np.abs(d)


def _boundary_from_weight(X, geom):
    # X: top r weight columns of g in the weight basis, (..., n, r)
    P = weight_basis(geom)
    r = geom.r
    Q, R = np.linalg.qr(X)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    Q = Q * (d / np.abs(d))[..., None, :]
    A = np.sqrt(2) * (P @ Q)[..., :r, :]
    return np.log(np.abs(d)), np.conj(np.linalg.det(A))


def iwasawa_boundary(m, geom):
    """(H(g), det of the D-block of kappa(g)) from the top r weight columns.

    Only the highest-weight columns enter, so the result stays accurate
    when g has large entries.  det D = conj(det A) since det A det D = 1.
    """
    P = weight_basis(geom)
    return _boundary_from_weight(P.conj().T @ (np.asarray(m) @ P[:, :geom.r]), geom)


def weight_scaling(t, geom):
    """Diagonal of a_t in the weight basis: e^{t_j} on u_j, 1 on the zero
    block, e^{-t_j} on v_j."""
    t = np.asarray(t, dtype=float)
    return np.concatenate([np.exp(t), np.ones(t.shape[:-1] + (geom.b,)), np.exp(-t[..., ::-1])],
                          axis=-1)


def iwasawa_boundary_at(y, t, geom):
    """iwasawa_boundary(a_{-t} y) with a_{-t} applied exactly in the weight basis.

    y (..., n, n) and t (..., r) broadcast; no cancellation for large t.
    """
    P = weight_basis(geom)
    Y = P.conj().T @ (np.asarray(y) @ P[:, :geom.r])
    return _boundary_from_weight(weight_scaling(-np.asarray(t), geom)[..., :, None] * Y, geom)


def inverse_arrays(m, geom):
    J = np.diag(geom.J).real
    return J[:, None] * np.swapaxes(np.asarray(m), -1, -2).conj() * J[None, :]


def weyl_density(t, b):
    """(Delta, omega, u) at a_T for t of shape (..., r).

    Delta = omega^2 2^(r(2b+1)) prod sinh^(2b) t_j sinh 2t_j,
    omega = 2^(r(r-1)/2) prod_{j<k} (cosh 2t_j - cosh 2t_k),
    u = 2^r prod cosh t_j.
    """
    t = np.asarray(t, dtype=float)
    r = t.shape[-1]
    c2 = np.cosh(2 * t)
    omega = np.full(t.shape[:-1], 2.0 ** (r * (r - 1) / 2))
    for j in range(r):
        for k in range(j + 1, r):
            omega = omega * (c2[..., j] - c2[..., k])
    delta = omega ** 2 * 2.0 ** (r * (2 * b + 1)) * np.prod(
        np.sinh(t) ** (2 * b) * np.sinh(2 * t), axis=-1)
    u = 2.0 ** r * np.prod(np.cosh(t), axis=-1)
    return delta, omega, u


def tau_min(t, b):
    """min over simple roots: t_j - t_{j+1} and 2t_r (b = 0) or t_r (b > 0)."""
    t = np.asarray(t, dtype=float)
    last = t[..., -1] * (2 if b == 0 else 1)
    if t.shape[-1] == 1:
        return last
    gaps = t[..., :-1] - t[..., 1:]
    return np.minimum(gaps.min(axis=-1), last)


def killing_radius(t, b):
    """Killing norm of H_T: 2 sqrt((2r+b) sum t_j^2)."""
    t = np.asarray(t, dtype=float)
    r = t.shape[-1]
    return 2 * np.sqrt((2 * r + b) * np.sum(t ** 2, axis=-1))


def distance(g, geom=None):
    """Distance from the origin to g.0, the Killing norm of A+(g)."""
    geom = _geom_of(g, geom)
    _, s, _ = cartan_arrays(_as_matrix(g), geom)
    return killing_radius(s, geom.b)


def in_chamber(t, strict=False, tol=0.0):
    t = np.asarray(t, dtype=float)
    ext = np.concatenate([t, np.zeros(t.shape[:-1] + (1,))], axis=-1)
    gaps = ext[..., :-1] - ext[..., 1:]
    return np.all(gaps > tol, axis=-1) if strict else np.all(gaps >= -tol, axis=-1)


def lemma_a_values(g, t, R_grid, l, geom=None):
    """tau_l(pi_0(g a_{R t})) for each R.

    Column j of the lower-right block of g a_{Rt} is
    e^{R t_j}/2 (g_21 + g_22)_j + e^{-R t_j}/2 (g_22 - g_21)_j, so the phase
    of its determinant is that of a matrix with O(1) entries; factoring
    the growth out keeps large R exact to rounding.
    """
    geom = _geom_of(g, geom)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if not in_chamber(t, strict=True):
        raise ValueError("t must lie in the open chamber")
    m = _as_matrix(g)
    r = geom.r
    g21 = m[r:, :r]
    g22 = m[r:, r:]
    plus = g21 + g22[:, :r]
    minus = g22[:, :r] - g21
    out = []
    for R in np.atleast_1d(R_grid):
        M = g22.copy()
        M[:, :r] = plus + np.exp(-2 * R * t)[None, :] * minus
        d = np.linalg.det(M)
        out.append((d / abs(d)) ** l)
    return np.array(out)


def lemma_a_limit(g, t, R_grid, l, geom=None):
    """Alias returning the per-R sequence whose limit is tau_l(kappa(g))."""
    return lemma_a_values(g, t, R_grid, l, geom)


def random_group(geom, rng, size, t_scale=1.5, n_scale=0.5):
    """Random elements k a_t n with Haar k, |t_j| <= t_scale and a random
    nilpotent factor; returns an array (size, n, n)."""
    from .numerics import haar_k_arrays

    k = haar_k_arrays(geom, rng, size)
    t = rng.uniform(-t_scale, t_scale, (size, geom.r))
    a = a_matrix(t, geom.b)
    # exp of a random element of Lie(N): in the weight basis, entries from
    # a lower weight group to a strictly higher one, projected onto su(r, r+b)
    P = weight_basis(geom)
    r, n = geom.r, geom.n
    group = np.r_[np.arange(r), np.full(geom.b, r), r + 1 + np.arange(r)]
    mask = group[:, None] < group[None, :]
    X = rng.normal(size=(size, n, n)) + 1j * rng.normal(size=(size, n, n))
    Y = P @ (n_scale * X * mask) @ P.conj().T
    Y = (Y - inverse_arrays(Y, geom)) / 2
    n_mat = _expm_nilpotent(Y)
    return k @ a @ n_mat


def _expm_nilpotent(X):
    n = X.shape[-1]
    out = np.broadcast_to(np.eye(n, dtype=complex), X.shape).copy()
    term = out.copy()
    for j in range(1, n):
        term = term @ X / j
        out = out + term
    return out
