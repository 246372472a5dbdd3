"""Dancer bump-lines: the first-order expansion w(x) + delta Z(x) cos(sqrt(lambda1) z)
used by the ansatz, and a continuation of the true z-periodic branch.

The branch is computed in the rescaled variable s = 2 pi z / T, where the
equation becomes u_xx + kappa u_ss - u + u^p = 0 with kappa = (2 pi / T)^2.
Solutions are even in x and in s, so x is discretized on [0, x_max] with a
reflecting condition at 0 and s by cosine collocation on [0, pi].
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import fft, linalg

from .errors import (BifurcationNotFound, ConfigInvalid, ContinuationStalled,
                     SolverSingular)
from .profile1d import HomoclinicProfile


@dataclass(frozen=True)
class DancerParams:
    delta: float
    p: float
    delta0: float = 0.5

    def __post_init__(self):
        if abs(self.delta) >= self.delta0:
            raise ConfigInvalid("delta", f"|delta| must be below the branch radius {self.delta0}")

    @property
    def lambda1(self):
        return 0.25 * (self.p - 1.0) * (self.p + 3.0)


_SELECTORS = ("value", "x", "xx", "z", "zz", "xz")


def eval_wdelta_expansion(params, x, z, derivative="value", profile=None):
    """First-order Dancer expansion and its derivatives.

    The mixed derivative keeps its factor delta: d_xz = -delta k Z'(x) sin(k z).
    """
    if derivative not in _SELECTORS:
        raise ConfigInvalid("derivative", f"expected one of {_SELECTORS}")
    prof = profile or HomoclinicProfile(params.p)
    d = params.delta
    k = np.sqrt(prof.lambda1)
    c, s = np.cos(k * z), np.sin(k * z)
    if derivative == "value":
        return prof.w(x) + d * prof.Z(x) * c
    if derivative == "x":
        return prof.wp(x) + d * prof.Zp(x) * c
    if derivative == "xx":
        return prof.wpp(x) + d * prof.Zpp(x) * c
    if derivative == "z":
        return -d * k * prof.Z(x) * s
    if derivative == "zz":
        return -d * prof.lambda1 * prof.Z(x) * c
    return -d * k * prof.Zp(x) * s


def cosine_second_derivative(n_intervals):
    """Spectral d^2/ds^2 on the DCT-I grid s_j = pi j / N for even,
    2 pi-periodic functions."""
    N = n_intervals
    I = np.eye(N + 1)
    coef = fft.dct(I, type=1, axis=0)
    m = np.arange(N + 1)
    return fft.idct(-(m ** 2)[:, None] * coef, type=1, axis=0)


@dataclass
class StripDiscretization:
    p: float
    x_max: float = 40.0
    hx: float = 0.05
    n_s: int = 16

    def __post_init__(self):
        n = int(round(self.x_max / self.hx))
        self.x = self.hx * np.arange(n)  # x = x_max is the Dirichlet node
        self.s = np.pi * np.arange(self.n_s + 1) / self.n_s
        h2 = self.hx ** 2
        main = np.full(n, -2.0 / h2)
        up = np.full(n - 1, 1.0 / h2)
        lo = np.full(n - 1, 1.0 / h2)
        up[0] = 2.0 / h2  # mirror node at x = -hx
        self.Dxx = sp.diags([lo, main, up], [-1, 0, 1], format="csr")
        self.Dss = cosine_second_derivative(self.n_s)
        ns = self.n_s + 1
        self.Axx = sp.kron(self.Dxx, sp.identity(ns), format="csr")
        self.Ass = sp.kron(sp.identity(n), sp.csr_matrix(self.Dss), format="csr")
        wx = np.full(n, self.hx)
        wx[0] = 0.5 * self.hx
        self.wx = wx
        ws = np.full(ns, np.pi / self.n_s)
        ws[[0, -1]] *= 0.5
        self.weights = np.outer(wx, ws)
        self.w_h = self._trivial()
        self.lam_h, self.Z_h = self._eigenpair()

    @property
    def shape(self):
        return (len(self.x), self.n_s + 1)

    def _pow(self, u):
        return np.maximum(u, 0.0) ** self.p

    def _dpow(self, u):
        return self.p * np.maximum(u, 0.0) ** (self.p - 1.0)

    def _trivial(self):
        prof = HomoclinicProfile(self.p)
        w = prof.w(self.x)
        I = sp.identity(len(self.x), format="csr")
        for _ in range(30):
            F = self.Dxx @ w - w + self._pow(w)
            if np.max(np.abs(F)) < 1e-12:
                break
            J = (self.Dxx - I + sp.diags(self._dpow(w))).tocsc()
            w = w - spla.spsolve(J, F)
        return w

    def _eigenpair(self):
        # principal eigenvector of the discrete L0 among functions even in x;
        # the reflected stencil is symmetric in the trapezoid inner product
        A = (self.Dxx + sp.diags(self._dpow(self.w_h) - 1.0)).toarray()
        r = np.sqrt(self.wx)
        S = r[:, None] * A / r[None, :]
        vals, vecs = linalg.eigh_tridiagonal(np.diag(S).copy(), 0.5 * (np.diag(S, 1) + np.diag(S, -1)),
                                             select="i", select_range=(len(r) - 1, len(r) - 1))
        v = vecs[:, -1] / r
        v *= np.sign(v[0])
        v /= np.sqrt(2.0 * np.sum(self.wx * v ** 2))
        return vals[-1], v

    def residual(self, U, kappa):
        u = U.ravel()
        return self.Axx @ u + kappa * (self.Ass @ u) - u + self._pow(u)

    def jacobian(self, U, kappa):
        u = U.ravel()
        return self.Axx + kappa * self.Ass + sp.diags(self._dpow(u) - 1.0)

    def mode(self):
        """Z_h(x) cos(s) on the grid."""
        return np.outer(self.Z_h, np.cos(self.s))

    def amplitude(self, U):
        M = self.mode()
        return np.sum(self.weights * (U - self.w_h[:, None]) * M) / np.sum(self.weights * M * M)

    def trivial_field(self):
        return np.repeat(self.w_h[:, None], self.n_s + 1, axis=1)


def _perm_parity(perm):
    seen = np.zeros(len(perm), dtype=bool)
    parity = 0
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        parity += length - 1
    return -1 if parity % 2 else 1


def det_sign(A):
    lu = spla.splu(sp.csc_matrix(A))
    d = lu.U.diagonal()
    if np.any(d == 0):
        return 0
    return int(np.prod(np.sign(d))) * _perm_parity(lu.perm_r) * _perm_parity(lu.perm_c)


def find_bifurcation(disc, bracket=None, tol=1e-9):
    """Bisect on the sign of det J(kappa) along the trivial branch."""
    lam = 0.25 * (disc.p - 1.0) * (disc.p + 3.0)
    lo, hi = bracket or (0.9 * lam, 1.1 * lam)
    W = disc.trivial_field()
    s_lo = det_sign(disc.jacobian(W, lo))
    s_hi = det_sign(disc.jacobian(W, hi))
    if s_lo * s_hi >= 0:
        raise BifurcationNotFound(f"no determinant sign change on kappa in [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        s_mid = det_sign(disc.jacobian(W, mid))
        if s_mid == 0:
            lo = hi = mid
            break
        if s_mid == s_lo:
            lo = mid
        else:
            hi = mid
    kappa = 0.5 * (lo + hi)
    return kappa, 2.0 * np.pi / np.sqrt(kappa)


@dataclass
class PeriodicBranchPoint:
    delta: float
    T: float
    kappa: float
    u: np.ndarray
    residual: float
    defect_norm: float
    iterations: int = 0


def _newton_pinned(disc, U, kappa, delta, tol, max_iter):
    M = disc.mode()
    wq = disc.weights * M
    g_row = (wq / np.sum(wq * M)).ravel()
    n = U.size
    for it in range(max_iter + 1):
        F = disc.residual(U, kappa)
        G = disc.amplitude(U) - delta
        res = max(np.max(np.abs(F)), abs(G))
        if res < tol:
            return U, kappa, res, it
        J = disc.jacobian(U, kappa)
        Fk = disc.Ass @ U.ravel()
        A = sp.bmat([[J, sp.csr_matrix(Fk[:, None])],
                     [sp.csr_matrix(g_row[None, :]), None]], format="csc")
        try:
            step = spla.splu(A).solve(-np.concatenate([F, [G]]))
        except RuntimeError as exc:
            raise SolverSingular(str(exc)) from exc
        U = U + step[:n].reshape(U.shape)
        kappa = kappa + step[n]
    raise ContinuationStalled(f"Newton did not converge (residual {res:.3g})")


def continue_dancer_branch(p, delta_target, n_steps=4, x_max=40.0, hx=0.05, n_s=16,
                           tol=1e-10, max_iter=12, max_halvings=6, disc=None):
    """Natural continuation in the pinned amplitude delta from the bifurcation
    point, with a secant predictor and step halving on failure."""
    disc = disc or StripDiscretization(p, x_max, hx, n_s)
    kappa0, _ = find_bifurcation(disc)
    W = disc.trivial_field()
    M = disc.mode()
    pts = [PeriodicBranchPoint(0.0, 2 * np.pi / np.sqrt(kappa0), kappa0, W,
                               float(np.max(np.abs(disc.residual(W, kappa0)))), 0.0)]
    if n_steps < 1:
        return pts
    d_step = delta_target / n_steps
    prev = None
    halvings = 0
    cur_d, U, kappa = 0.0, W, kappa0
    while abs(cur_d) < abs(delta_target) - 1e-15:
        nd = cur_d + d_step
        if abs(nd) > abs(delta_target):
            nd = delta_target
        if prev is not None:
            pd, pU, pk = prev
            t = (nd - cur_d) / (cur_d - pd)
            U0 = U + t * (U - pU)
            k0 = kappa + t * (kappa - pk)
        else:
            U0 = U + (nd - cur_d) * M
            k0 = kappa
        try:
            U1, k1, res, it = _newton_pinned(disc, U0, k0, nd, tol, max_iter)
        except (ContinuationStalled, SolverSingular):
            halvings += 1
            if halvings > max_halvings:
                raise ContinuationStalled(f"step bisection exhausted at delta={cur_d:.4g}")
            d_step *= 0.5
            continue
        prev = (cur_d, U, kappa)
        cur_d, U, kappa = nd, U1, k1
        defect = float(np.max(np.abs(U - W - nd * M)))
        pts.append(PeriodicBranchPoint(nd, 2 * np.pi / np.sqrt(kappa), kappa, U, res, defect, it))
    return pts


def defect_ratio(p, delta, **kw):
    """Defect at delta divided by the defect at delta/2."""
    disc = StripDiscretization(p, kw.pop("x_max", 40.0), kw.pop("hx", 0.05), kw.pop("n_s", 16))
    b1 = continue_dancer_branch(p, delta, disc=disc, **kw)
    b2 = continue_dancer_branch(p, delta / 2, disc=disc, **kw)
    return b1[-1].defect_norm / b2[-1].defect_norm, b1, b2
