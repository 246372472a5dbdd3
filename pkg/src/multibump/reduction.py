"""Projections of S[W] onto the approximate kernel and the reduced system
for (f_1, e, delta).

All reduced quantities are even in z and stored on a uniform grid z >= 0.
The fixed-point map solves, per iteration,

    f-channel:  L_T(df) = Pi_f / c0             (linearized Toda inverse)
    e-channel:  d0 (de'' + lambda1 de) + ddelta B0 = -Pi_e
                with ddelta fixed by int_0^inf (...) cos(sqrt(lambda1) z) dz = 0

where Pi_f, Pi_e are the quadrature projections of the current residual and
B0 is the measured delta-derivative of Pi_e.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline, make_interp_spline

from .ansatz import EvenFunction, _chunks, _power, _rows, bent_coords_full, eta_ramp, make_grid
from .errors import (ConfigInvalid, ContractionFailed, DegenerateDenominator, FundamentalMatrixIllConditioned,
                     OrthogonalityViolated, ResonantRHS)
from .pipeline import profile_constants


def _trap_weights(x):
    h = x[1] - x[0]
    w = np.full(len(x), h)
    w[[0, -1]] *= 0.5
    return w


def _cumint(z, f):
    """int_0^z f by exact integration of the quintic interpolant."""
    F = make_interp_spline(z, f, k=5, axis=-1).antiderivative()
    return F(z) - F(z[:1])


def _tailint(z, f):
    c = _cumint(z, f)
    return c[..., -1:] - c


# ----------------------------------------------------------------------------
# projections


@dataclass
class ProjectionRecord:
    z: np.ndarray
    Pi_f: np.ndarray
    Pi_e: np.ndarray
    pred_f: np.ndarray = None
    pred_e: np.ndarray = None
    B0: np.ndarray = None
    channels: dict = field(default_factory=dict)

    @property
    def discrepancy_f(self):
        return float(np.max(np.abs(self.Pi_f - self.pred_f)))


def _projections_rows(params, x, z):
    W, _, _, Lap = _rows(params, x, z)
    S = Lap + _power(W, params.p) - W
    prof = params.profile
    F, Fp, Fpp = params.trajectory.evaluate(z)
    wt = _trap_weights(x)[None, :]
    pf, pe = [], []
    for j in range(params.k):
        c = bent_coords_full(x[None, :], z[:, None], F[j][:, None], Fp[j][:, None], Fpp[j][:, None],
                             float(params.trajectory.beta[j]), params.alpha, params.T1, params.T2)
        X = c["X"]
        pf.append(np.sum(S * prof.wp(X) * wt, axis=1))
        pe.append(np.sum(S * prof.Z(X) * wt, axis=1))
    return np.array(pf), np.array(pe)


def project_error(params, grid=None, hx=0.1, hz=0.1, with_B0=False, eps=1e-3, **grid_kw):
    """Row quadratures int S[W] w'(X_j) dx and int S[W] Z(X_j) dx."""
    grid = grid or make_grid(params, hx=hx, hz=hz, **grid_kw)
    nz, nx = grid.shape
    Pf = np.empty((params.k, nz))
    Pe = np.empty((params.k, nz))
    for i0, i1 in _chunks(nz, nx):
        Pf[:, i0:i1], Pe[:, i0:i1] = _projections_rows(params, grid.x, grid.z[i0:i1])
    rec = ProjectionRecord(grid.z, Pf, Pe)
    pred_f, pred_e = leading_order_projection(params, grid.z)
    rec.pred_f, rec.pred_e = pred_f, pred_e
    if with_B0:
        rec.B0 = measured_B0(params, grid, eps)
    return rec


def measured_B0(params, grid, eps=1e-3):
    """Central difference of Pi_{e_j} in delta_j."""
    nz, nx = grid.shape
    B0 = np.empty((params.k, nz))
    for j in range(params.k):
        vals = []
        for sgn in (1.0, -1.0):
            d = params.delta.copy()
            d[j] += sgn * eps
            prm = params.with_updates(delta=d)
            Pe = np.empty(nz)
            for i0, i1 in _chunks(nz, nx):
                Pe[i0:i1] = _projections_rows(prm, grid.x, grid.z[i0:i1])[1][j]
            vals.append(Pe)
        B0[j] = (vals[0] - vals[1]) / (2 * eps)
    return B0


def _metric_terms(params, z):
    """A_11, A_22 and a_0 of the bent metric along each trajectory."""
    F, Fp, _ = params.trajectory.evaluate(z)
    beta = params.trajectory.beta[:, None]
    al = params.alpha
    eta = eta_ramp(al * z, params.T1, params.T2)[None, :]
    etap = eta_ramp(al * z, params.T1, params.T2, 1)[None, :]
    g = beta * eta
    a0 = np.sqrt(1 + g * g)
    a1 = 1 / a0
    A11 = a1 ** 2 * (Fp ** 2 - g ** 2)
    A22 = 2 * g * (g - Fp) + (Fp ** 2 - g ** 2) + 2 * al * beta ** 2 * z[None, :] * etap * eta
    return F, Fp, a0, A11, A22


def analytic_B0(params, z):
    cst = profile_constants(params.p)
    _, _, a0, A11, A22 = _metric_terms(params, z)
    return (A11 * cst.d2 - cst.lambda1 * A22 * cst.d0) * np.cos(np.sqrt(cst.lambda1) * a0 * z[None, :])


def leading_order_projection(params, z):
    """Displayed leading terms of the two projections.

    Pi_f ~ -f''(c0 + c1 e) + C_p (e^{-(f_j - f_{j-1})} - e^{-(f_{j+1} - f_j)})
    Pi_e ~ (e'' + lambda1 e) d0 + A_11 a_0 int w''Z + delta B_0
    """
    cst = profile_constants(params.p)
    F, Fp, Fpp = params.trajectory.evaluate(z)
    k = params.k
    E = np.zeros((k, len(z)))
    Ep = np.zeros_like(E)
    Epp = np.zeros_like(E)
    for j, ej in enumerate(params.e):
        if ej is not None:
            E[j], Ep[j], Epp[j] = ej(z)
    inter = np.zeros_like(F)
    if k > 1:
        ex = np.exp(-(F[1:] - F[:-1]))
        inter[1:] += ex
        inter[:-1] -= ex
    pred_f = -Fpp * (cst.c0 + cst.c1 * E) + cst.C_p * inter
    _, _, a0, A11, _ = _metric_terms(params, z)
    prof = params.profile
    s = np.linspace(-40, 40, 16001)
    m_wz = float(np.sum(_trap_weights(s) * prof.wpp(s) * prof.Z(s)))
    pred_e = (Epp + cst.lambda1 * E) * cst.d0 + A11 * a0 * m_wz + params.delta[:, None] * analytic_B0(params, z)
    return pred_f, pred_e


# ----------------------------------------------------------------------------
# linearized Toda, k = 2


def k2_kernel(z, up, upp):
    """psi_1 = u', psi_2 = z u' - 2 and their first derivatives."""
    psi1, dpsi1 = up, upp
    psi2 = z * up - 2.0
    dpsi2 = up + z * upp
    return psi1, dpsi1, psi2, dpsi2


def apply_linearized_toda_k2(h, hpp, u, c_p):
    return hpp + 2.0 * c_p * np.exp(-u) * h


@dataclass
class K2Solution:
    h: np.ndarray
    hp: np.ndarray
    hpp: np.ndarray
    wronskian: float
    wronskian_variation: float
    estimate_constant: float


def solve_linearized_toda_k2(p, z, u, up, upp, c_p, alpha=1.0, theta=None):
    """Even bounded solution of h'' + 2 c_p e^{-u} h = p on z >= 0.

    h = -(psi1 int_0^z psi2 p + psi2 int_z^inf psi1 p) / W with the
    Wronskian W measured from the samples.
    """
    psi1, dpsi1, psi2, dpsi2 = k2_kernel(z, up, upp)
    Wr = psi1 * dpsi2 - dpsi1 * psi2
    W0 = float(np.median(Wr))
    var = float(np.max(np.abs(Wr - W0)))
    A = _cumint(z, psi2 * p)
    Bt = _tailint(z, psi1 * p)
    tail = abs(float(Bt[0])) if len(z) else 0.0
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(Bt)):
        raise ResonantRHS("correction integral diverges")
    # the tail integral must actually vanish at the window end
    if abs(float((psi1 * p)[-1])) > 1e-6 * max(1.0, tail):
        raise ResonantRHS("right-hand side has not decayed at the end of the window")
    h = -(psi1 * A + psi2 * Bt) / W0
    hp = -(dpsi1 * A + dpsi2 * Bt) / W0
    hpp = p - 2.0 * c_p * np.exp(-u) * h
    theta = theta if theta is not None else 0.0
    wt = np.exp(theta * alpha * z)
    lhs = np.max(np.abs(hpp) * wt) + alpha * np.max(np.abs(hp) * wt) + alpha ** 2 * np.max(np.abs(h))
    rhs = np.max(np.abs(p) * wt)
    return K2Solution(h, hp, hpp, W0, var, float(lhs / rhs) if rhs > 0 else 0.0)


# ----------------------------------------------------------------------------
# linearized Toda, general k


def toda_jacobian(F, c_p):
    """Jacobian of the Toda force at positions F (k, n) -> (n, k, k)."""
    k, n = F.shape
    J = np.zeros((n, k, k))
    e = c_p * np.exp(F[:-1] - F[1:])  # (k-1, n)
    for j in range(k - 1):
        J[:, j, j] -= e[j]
        J[:, j, j + 1] += e[j]
        J[:, j + 1, j + 1] -= e[j]
        J[:, j + 1, j] += e[j]
    return J


def _rk4_linear(z, Jfun, Y0, Pfun=None):
    """Integrate phi'' = J phi + P col, Y = (phi; phi') with several columns;
    P only drives the last column."""
    k = Y0.shape[0] // 2
    Y = Y0.copy()
    out = np.empty((len(z),) + Y.shape)
    out[0] = Y
    Jn = Jfun(z)
    mids = 0.5 * (z[:-1] + z[1:])
    Jm = Jfun(mids)
    Pn = Pfun(z) if Pfun else None
    Pm = Pfun(mids) if Pfun else None

    def rhs(Jz, Pz, Yc):
        d = np.empty_like(Yc)
        d[:k] = Yc[k:]
        d[k:] = Jz @ Yc[:k]
        if Pz is not None:
            d[k:, -1] += Pz
        return d

    for i in range(len(z) - 1):
        h = z[i + 1] - z[i]
        p0 = Pn[:, i] if Pn is not None else None
        pm = Pm[:, i] if Pm is not None else None
        p1 = Pn[:, i + 1] if Pn is not None else None
        k1 = rhs(Jn[i], p0, Y)
        k2 = rhs(Jm[i], pm, Y + 0.5 * h * k1)
        k3 = rhs(Jm[i], pm, Y + 0.5 * h * k2)
        k4 = rhs(Jn[i + 1], p1, Y + h * k3)
        Y = Y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = Y
    return out


def _jac_fun(trajectory):
    def Jfun(zq):
        F, _, _ = trajectory.evaluate(zq)
        return toda_jacobian(F, trajectory.c_p)
    return Jfun


@dataclass
class TodaLinearSolution:
    phi: np.ndarray
    phip: np.ndarray
    phipp: np.ndarray
    com_drift: float
    condition: float
    estimate_constant: float


def solve_linearized_toda_general(P, z, trajectory, cond_max=1e10):
    """Even solution of phi'' - J(f0) phi = P whose asymptotic slopes vanish
    in the relative directions; the centre-of-mass drift int sum P is
    reported, not removed."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    k = P.shape[0]
    z = np.asarray(z, dtype=float)
    Jfun = _jac_fun(trajectory)
    spl = CubicSpline(z, P, axis=1, bc_type=((1, np.zeros(k)), "not-a-knot"))
    # columns: k-1 relative initial displacements, then the forced solution
    Y0 = np.zeros((2 * k, k))
    for i in range(k - 1):
        Y0[i, i] = 1.0
        Y0[i + 1, i] = -1.0
    out = _rk4_linear(z, Jfun, Y0, spl)
    slopes = out[-1, k:, :]
    S = slopes[:, :k - 1]
    s_p = slopes[:, -1]
    cond = float(np.linalg.cond(S)) if k > 1 else 1.0
    if cond > cond_max:
        raise FundamentalMatrixIllConditioned(f"slope map condition number {cond:.3g}")
    c, *_ = np.linalg.lstsq(S, -s_p, rcond=None)
    coef = np.append(c, 1.0)
    phi = out[:, :k, :] @ coef
    phip = out[:, k:, :] @ coef
    Jz = Jfun(z)
    phipp = np.einsum("nij,nj->ni", Jz, phi) + P.T
    drift = float(np.sum(_cumint(z, P)[:, -1]))
    alpha = trajectory.alpha
    th = trajectory.theta0
    wt = np.exp(th * alpha * z)[:, None]
    lhs = (np.max(np.abs(phipp) * wt) + alpha * np.max(np.abs(phip) * wt)
           + alpha ** 2 * np.max(np.abs(phi)))
    rhs = np.max(np.abs(P.T) * wt)
    return TodaLinearSolution(phi.T, phip.T, phipp.T, drift, cond,
                              float(lhs / rhs) if rhs > 0 else 0.0)


def fundamental_matrix(trajectory, z):
    """Psi(z) with Psi(0) = I for the 2k-dimensional variational system."""
    k = trajectory.k
    return _rk4_linear(np.asarray(z, dtype=float), _jac_fun(trajectory), np.eye(2 * k))


def column_structure(trajectory, z):
    """Split the solution space into bounded and linearly growing columns.

    The bounded columns span the null space of the asymptotic slope map;
    returns the fitted growth slope of |phi| on the second half of the
    window for each basis column.
    """
    k = trajectory.k
    Psi = fundamental_matrix(trajectory, z)
    slope_map = Psi[-1, k:, :]
    _, sv, Vt = np.linalg.svd(slope_map)
    null = Vt[k:].T
    rng = Vt[:k].T
    half = z >= 0.5 * z[-1]

    def growth(v):
        phi = np.linalg.norm(Psi[:, :k, :] @ v, axis=1)
        s, _ = np.polyfit(z[half], phi[half], 1)
        return float(s), float(np.max(phi))

    return {"bounded": [growth(null[:, i]) for i in range(null.shape[1])],
            "linear": [growth(rng[:, i]) for i in range(rng.shape[1])],
            "singular_values": sv.tolist()}


# ----------------------------------------------------------------------------
# resonance equation


def _gl_integrals(qfun, z, k_osc, n=8):
    """Per-interval Gauss-Legendre integrals of q cos and q sin."""
    xg, wg = leggauss(n)
    a, b = z[:-1], z[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    t = mid[:, None] + half[:, None] * xg[None, :]
    qt = qfun(t)
    Ic = np.sum(wg * qt * np.cos(k_osc * t), axis=1) * half
    Is = np.sum(wg * qt * np.sin(k_osc * t), axis=1) * half
    return Ic, Is


def _cos_sin_tails(q, z, k_osc):
    if callable(q):
        Ic, Is = _gl_integrals(q, z, k_osc)
        C = np.concatenate([np.cumsum(Ic[::-1])[::-1], [0.0]])
        S = np.concatenate([np.cumsum(Is[::-1])[::-1], [0.0]])
        return C, S, q(z)
    q = np.asarray(q, dtype=float)
    return _tailint(z, q * np.cos(k_osc * z)), _tailint(z, q * np.sin(k_osc * z)), q


def ortp_integral(q, z, lambda1):
    C, _, _ = _cos_sin_tails(q, z, np.sqrt(lambda1))
    return float(C[0])


@dataclass
class ResonanceSolution:
    e: np.ndarray
    ep: np.ndarray
    epp: np.ndarray
    ortp: float
    residual: float
    estimates: dict


def _theta_norm(g, z, rate):
    return float(np.max(np.abs(g) * np.exp(rate * z)))


def solve_resonance(q, z, lambda1, tol=1e-10, rate=0.0, alpha=1.0):
    """Decaying even solution of e'' + lambda1 e = q on z >= 0.

    e = (cos(kz) S(z) - sin(kz) C(z)) / k with C, S the tails of q cos, q sin.
    Requires int_0^inf q cos(kz) dz = 0, otherwise the even solution cannot
    decay and OrthogonalityViolated is raised.
    """
    z = np.asarray(z, dtype=float)
    k = np.sqrt(lambda1)
    C, S, qz = _cos_sin_tails(q, z, k)
    ortp = float(C[0])
    if abs(ortp) > tol:
        raise OrthogonalityViolated(f"int q cos = {ortp:.3g} exceeds {tol:.1g}")
    cz, sz = np.cos(k * z), np.sin(k * z)
    e = (cz * S - sz * C) / k
    ep = -(sz * S + cz * C)
    epp = qz - lambda1 * e
    resid = float(np.max(np.abs(epp + lambda1 * e - qz)))
    est = {}
    if rate > 0:
        qn = _theta_norm(qz, z, rate)
        lhs = _theta_norm(e, z, rate) + _theta_norm(ep, z, rate) + _theta_norm(epp, z, rate)
        if qn > 0:
            est["C_e1"] = lhs / (qn / alpha)
            dq = np.gradient(qz, z)
            est["C_e2"] = lhs / (qn + _theta_norm(dq, z, rate) / alpha)
    return ResonanceSolution(e, ep, epp, ortp, resid, est)


def even_resonance_solution(q, z, lambda1):
    """The even solution with e(0) fixed by matching the sin tail; it decays
    only if the orthogonality condition holds. Returns (e, far-field
    oscillation amplitude)."""
    k = np.sqrt(lambda1)
    C, S, qz = _cos_sin_tails(q, z, k)
    Ctot, Stot = C[0], S[0]
    cz, sz = np.cos(k * z), np.sin(k * z)
    # e_p = (1/k) int_0^z sin(k(z-t)) q(t) dt, plus A cos(kz) with A = Stot / k
    e = (sz * (Ctot - C) - cz * (Stot - S)) / k + Stot / k * cz
    return e, abs(Ctot) / k


# ----------------------------------------------------------------------------
# delta selection and the fixed-point loop


def choose_delta(Pi_e, B0, z, lambda1, B=1e-3, alpha=1.0):
    """delta_j with int_0^inf (Pi_e + delta B0) cos(sqrt(lambda1) z) dz = 0."""
    Pi_e = np.atleast_2d(Pi_e)
    B0 = np.atleast_2d(B0)
    num = np.array([ortp_integral(r, z, lambda1) for r in Pi_e])
    den = np.array([ortp_integral(b, z, lambda1) for b in B0])
    if np.any(np.abs(den) < B * alpha):
        raise DegenerateDenominator(f"|int B0 cos| = {np.min(np.abs(den)):.3g} below B alpha")
    return -num / den, den


class PerturbedTrajectory:
    """f0 + f1 with f1 a list of even functions; slopes and weights are
    those of f0."""

    def __init__(self, base, f1):
        self.base = base
        self.f1 = f1

    def __getattr__(self, name):
        return getattr(self.base, name)

    def evaluate(self, zq):
        F, Fp, Fpp = self.base.evaluate(zq)
        F, Fp, Fpp = F.copy(), Fp.copy(), Fpp.copy()
        for j, fj in enumerate(self.f1):
            v, vp, vpp = fj(zq)
            F[j] += v
            Fp[j] += vp
            Fpp[j] += vpp
        return F, Fp, Fpp


@dataclass
class ReducedState:
    z: np.ndarray
    f1: np.ndarray
    f1p: np.ndarray
    f1pp: np.ndarray
    e: np.ndarray
    ep: np.ndarray
    epp: np.ndarray
    delta: np.ndarray

    @classmethod
    def zero(cls, k, z):
        Z = np.zeros((k, len(z)))
        return cls(z, Z, Z.copy(), Z.copy(), Z.copy(), Z.copy(), Z.copy(), np.zeros(k))

    def functions(self, which):
        v, vp, vpp = {"f": (self.f1, self.f1p, self.f1pp), "e": (self.e, self.ep, self.epp)}[which]
        return [EvenFunction(self.z, v[j], vp[j], vpp[j]) for j in range(v.shape[0])]

    def params(self, base):
        tr = PerturbedTrajectory(base.trajectory, self.functions("f"))
        return base.with_updates(trajectory=tr, e=self.functions("e"), delta=self.delta.copy())


def y_norm(f1, f1p, f1pp, e, ep, epp, delta, z, alpha, theta0, nu=3 / 16):
    r = theta0 * alpha

    def tn(g):
        return _theta_norm(g, z, r)

    nf = alpha ** -2 * (tn(f1pp) + alpha * tn(f1p) + alpha ** 2 * float(np.max(np.abs(f1))))
    ne = alpha ** (-2 + nu) * (tn(e) + tn(ep) + tn(epp))
    nd = float(np.max(np.abs(delta))) / alpha
    return nf + ne + nd


def _e_update(Pe, B0, z, lam, d0, B, alpha):
    ddelta, den = choose_delta(Pe, B0, z, lam, B=B, alpha=alpha)
    de = np.zeros_like(Pe)
    dep = np.zeros_like(Pe)
    depp = np.zeros_like(Pe)
    for j in range(Pe.shape[0]):
        q = -(Pe[j] + ddelta[j] * B0[j]) / d0
        if not np.any(q):
            continue
        # orthogonality holds by construction up to quadrature roundoff
        scale = float(np.sum(np.abs(q)) * (z[1] - z[0]))
        r = solve_resonance(q, z, lam, tol=max(1e-10, 1e-9 * scale))
        de[j], dep[j], depp[j] = r.e, r.ep, r.epp
    return ddelta, den, de, dep, depp


def _f_update(Pf, z, trajectory, c0):
    if Pf.shape[0] > 1 and np.any(Pf):
        sol = solve_linearized_toda_general(Pf / c0, z, trajectory)
        return sol.phi, sol.phip, sol.phipp
    zero = np.zeros_like(Pf)
    return zero, zero.copy(), zero.copy()


def reduced_fixed_point_iterate(params, max_iters=6, hx=0.1, hz=0.1, nu=3 / 16, tol=1e-6,
                                zero_projections=False, B=1e-3, max_widen=3, eps=1e-3, grid=None,
                                sweep="gauss_seidel", relaxation=1.0):
    """Iterate the reduced map from (f1, e, delta) = 0 around the Toda
    trajectory of `params`; returns the final state, the parameters it
    defines, and the per-iteration history.

    sweep="jacobi" updates both channels from one projection; "gauss_seidel"
    updates (e, delta) first and re-projects before the f-channel solve.
    relaxation scales each update (same fixed points).
    """
    if sweep not in ("jacobi", "gauss_seidel"):
        raise ConfigInvalid("sweep", "expected 'jacobi' or 'gauss_seidel'")
    if not 0 < relaxation <= 1:
        raise ConfigInvalid("relaxation", "must lie in (0, 1]")
    base = params
    grid = grid or make_grid(base, hx=hx, hz=hz)
    z = grid.z
    k = base.k
    cst = profile_constants(base.p)
    lam = cst.lambda1
    al = base.alpha
    th = base.theta0
    om = relaxation
    state = ReducedState.zero(k, z)
    history = []
    increases = 0
    widen = 0

    def channels(st, need_B0):
        if zero_projections:
            Zr = np.zeros((k, len(z)))
            return Zr, Zr.copy(), np.ones((k, 1)) * np.cos(np.sqrt(lam) * z)
        rec = project_error(st.params(base), grid=grid, with_B0=need_B0, eps=eps)
        return rec.Pi_f, rec.Pi_e, rec.B0

    it = 0
    while it < max_iters:
        it += 1
        Pf, Pe, B0 = channels(state, True)
        try:
            ddelta, den, de, dep, depp = _e_update(Pe, B0, z, lam, cst.d0, B, al)
        except DegenerateDenominator:
            if widen >= max_widen:
                raise
            # widen the bending ramp and restart
            widen += 1
            base = base.with_updates(T2=base.T2 + 1.0)
            state = ReducedState.zero(k, z)
            history.clear()
            it = 0
            continue
        ddelta, de, dep, depp = om * ddelta, om * de, om * dep, om * depp
        mid = ReducedState(z, state.f1, state.f1p, state.f1pp, state.e + de, state.ep + dep,
                           state.epp + depp, state.delta + ddelta)
        Pf_used = Pf
        if sweep == "gauss_seidel":
            Pf_used = channels(mid, False)[0]
        df, dfp, dfpp = (om * v for v in _f_update(Pf_used, z, base.trajectory, cst.c0))
        upd = y_norm(df, dfp, dfpp, de, dep, depp, ddelta, z, al, th, nu)
        state = ReducedState(z, mid.f1 + df, mid.f1p + dfp, mid.f1pp + dfpp,
                             mid.e, mid.ep, mid.epp, mid.delta)
        total = y_norm(state.f1, state.f1p, state.f1pp, state.e, state.ep, state.epp,
                       state.delta, z, al, th, nu)
        entry = {"iteration": it, "update_norm": upd, "state_norm": total,
                 "delta": state.delta.tolist(), "ortp_denominator": den.tolist(),
                 "max_Pi_f": float(np.max(np.abs(Pf))), "max_Pi_e": float(np.max(np.abs(Pe)))}
        if history:
            prev = history[-1]["update_norm"]
            entry["contraction"] = upd / prev if prev > 0 else 0.0
            increases = increases + 1 if upd > prev else 0
            if increases >= 3:
                raise ContractionFailed("Y-norm of the update grew three times in a row")
        history.append(entry)
        if upd <= tol:
            break
    return state, state.params(base), history
