"""Bent coordinates, cutoffs, the multi-bump approximation W and its residual
S[W] = Delta W + W^p - W, plus the weighted sup norms used to measure it.

Fields live on z >= 0 (evenness in z is structural) and are stored as
arrays shaped (nz, nx), one row per z value.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import ConfigInvalid, GridTooSmall
from .profile1d import HomoclinicProfile

CUTOFF_LEVELS = {
    "rho": (31 / 32, 63 / 64),
    "eta_minus": (63 / 64, 127 / 128),
    "eta": (127 / 128, 255 / 256),
    "eta_plus": (255 / 256, 511 / 512),
}


def smoothstep(t, deriv=0):
    """Quintic C^2 step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    if deriv == 0:
        return t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)
    if deriv == 1:
        return 30.0 * t * t * (1.0 - t) ** 2
    return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)


def eta_ramp(t, T1=1.0, T2=2.0, deriv=0):
    """eta(t) = 0 for t < T1, 1 for t > T2, and its derivatives in t."""
    L = T2 - T1
    return smoothstep((np.asarray(t, dtype=float) - T1) / L, deriv) / L ** deriv


def plateau(s, a, b):
    """eta_a^b: 1 for |s| <= a, 0 for |s| >= b."""
    return smoothstep((b - np.abs(s)) / (b - a))


def cutoffs_etaj(X, dstar):
    """(rho, eta_minus, eta, eta_plus) evaluated at |X| / d*."""
    if dstar <= 0:
        raise ConfigInvalid("dstar", "must be positive")
    s = np.abs(X) / dstar
    return tuple(plateau(s, *CUTOFF_LEVELS[name])
                 for name in ("rho", "eta_minus", "eta", "eta_plus"))


class EvenFunction:
    """Even function of z sampled on z >= 0 with two derivatives; zero
    beyond the sampled window."""

    def __init__(self, z, v, vp, vpp):
        self.z = np.asarray(z, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.vp = np.asarray(vp, dtype=float)
        self.vpp = np.asarray(vpp, dtype=float)
        self._s0 = CubicHermiteSpline(self.z, self.v, self.vp)
        self._s1 = CubicHermiteSpline(self.z, self.vp, self.vpp)

    def __call__(self, zq):
        zq = np.asarray(zq, dtype=float)
        az = np.abs(zq)
        inside = az <= self.z[-1]
        c = np.minimum(az, self.z[-1])
        v = np.where(inside, self._s0(c), 0.0)
        vp = np.where(inside, self._s1(c), 0.0) * np.sign(zq)
        vpp = np.where(inside, np.interp(c, self.z, self.vpp), 0.0)
        return v, vp, vpp

    @classmethod
    def zero(cls, z_max=1.0):
        z = np.array([0.0, z_max])
        return cls(z, np.zeros(2), np.zeros(2), np.zeros(2))


@dataclass
class AnsatzParams:
    k: int
    alpha: float
    p: float
    trajectory: object
    e: list = None
    delta: np.ndarray = None
    T1: float = 1.0
    T2: float = 2.0
    profile: HomoclinicProfile = field(default=None, repr=False)

    def __post_init__(self):
        if self.trajectory.k != self.k:
            raise ConfigInvalid("k", "trajectory has a different bump count")
        if self.delta is None:
            self.delta = np.zeros(self.k)
        self.delta = np.asarray(self.delta, dtype=float)
        if self.delta.shape != (self.k,):
            raise ConfigInvalid("delta", f"expected {self.k} amplitudes")
        if self.e is None:
            self.e = [None] * self.k
        if self.profile is None:
            self.profile = HomoclinicProfile(self.p)
        if not 0 < self.T1 < self.T2:
            raise ConfigInvalid("T2", "cutoff thresholds need 0 < T1 < T2")

    @property
    def dstar(self):
        return np.log(1.0 / self.alpha)

    @property
    def beta(self):
        return self.trajectory.beta

    @property
    def theta0(self):
        return self.trajectory.theta0

    def with_updates(self, **kw):
        d = dict(k=self.k, alpha=self.alpha, p=self.p, trajectory=self.trajectory,
                 e=list(self.e), delta=self.delta.copy(), T1=self.T1, T2=self.T2,
                 profile=self.profile)
        d.update(kw)
        return AnsatzParams(**d)

    def check_invariants(self, M=10.0, z=None):
        """Report the size conditions on e, delta and the gaps."""
        z = np.linspace(0.0, self.trajectory.z_max, 2001) if z is None else z
        wt = np.exp(self.theta0 * self.alpha * np.abs(z))
        e_norm = 0.0
        for ej in self.e:
            if ej is not None:
                v, vp, vpp = ej(z)
                e_norm = max(e_norm, np.max(wt * (np.abs(v) + np.abs(vp) + np.abs(vpp))))
        f, _, _ = self.trajectory.evaluate(z)
        gap = float(np.min(np.diff(f, axis=0)))
        return {
            "e_norm": float(e_norm),
            "e_ok": bool(e_norm <= M * self.alpha ** 2),
            "delta_norm": float(np.max(np.abs(self.delta))),
            "delta_ok": bool(np.max(np.abs(self.delta)) <= M * self.alpha),
            "min_gap": gap,
            "gap_ok": bool(gap >= 2 * self.dstar - M),
        }


@dataclass
class Grid2D:
    x: np.ndarray
    z: np.ndarray

    @property
    def hx(self):
        return float(self.x[1] - self.x[0])

    @property
    def hz(self):
        return float(self.z[1] - self.z[0])

    @property
    def shape(self):
        return (len(self.z), len(self.x))

    @property
    def x_max(self):
        return float(self.x[-1])

    @property
    def z_max(self):
        return float(self.z[-1])

    def meta(self):
        return {"x_max": self.x_max, "z_max": self.z_max, "nx": len(self.x),
                "nz": len(self.z), "hx": self.hx, "hz": self.hz}


@dataclass
class Field2D:
    grid: Grid2D
    values: np.ndarray


def make_grid(params, hx=0.05, hz=0.05, x_max=None, z_max=None, margin=25.0):
    if z_max is None:
        z_max = 8.0 / (params.theta0 * params.alpha)
    if x_max is None:
        f, _, _ = params.trajectory.evaluate(np.array([z_max]))
        x_max = float(np.max(np.abs(f))) + margin
    nx = int(np.ceil(x_max / hx))
    nz = int(np.ceil(z_max / hz))
    x = hx * np.arange(-nx, nx + 1)
    z = hz * np.arange(nz + 1)
    return Grid2D(x, z)


def bent_coords_full(x, z, f, fp, fpp, beta, alpha, T1=1.0, T2=2.0):
    """Coordinates (X, Z) of the change of variables and their exact partials.

    z, f, fp, fpp broadcast against x (typically column vectors); z >= 0.
    """
    z = np.abs(z)
    t = alpha * z
    g = beta * eta_ramp(t, T1, T2)
    g1 = beta * alpha * eta_ramp(t, T1, T2, 1)
    g2 = beta * alpha ** 2 * eta_ramp(t, T1, T2, 2)
    a0 = np.sqrt(1.0 + g * g)
    a1 = 1.0 / a0
    a1_3 = a1 ** 3
    a0p = g * g1 * a1
    a0pp = (g1 * g1 + g * g2) * a1 - (g * g1) ** 2 * a1_3
    a1p = -g * g1 * a1_3
    a1pp = -(g1 * g1 + g * g2) * a1_3 + 3.0 * (g * g1) ** 2 * a1_3 * a1 * a1

    xi = x - f
    X = xi * a1
    X_x = a1
    X_z = -fp * a1 + xi * a1p
    X_zz = -fpp * a1 - 2.0 * fp * a1p + xi * a1pp
    Z = z * a0 + g * X
    Z_x = g * a1
    Z_z = a0 + z * a0p + g1 * X + g * X_z
    Z_zz = 2.0 * a0p + z * a0pp + g2 * X + 2.0 * g1 * X_z + g * X_zz
    return {"X": X, "Z": Z, "X_x": X_x, "X_z": X_z, "X_zz": X_zz,
            "Z_x": Z_x, "Z_z": Z_z, "Z_zz": Z_zz}


@dataclass
class BentCoordinateMap:
    """Change of variables for one bump with trajectory f (callable returning
    f, f', f'' at z) and asymptotic slope beta."""
    f: object
    beta: float
    alpha: float
    T1: float = 1.0
    T2: float = 2.0

    def full(self, x, z):
        z = np.asarray(z, dtype=float)
        f, fp, fpp = self.f(np.abs(z))
        return bent_coords_full(x, np.abs(z), f, fp, fpp, self.beta, self.alpha, self.T1, self.T2)


def bent_coords(bmap, x, z):
    c = bmap.full(np.asarray(x, dtype=float), z)
    return c["X"], c["Z"]


def _bump_map(params, j):
    tr = params.trajectory

    def f(zq):
        F, Fp, Fpp = tr.evaluate(zq)
        return F[j], Fp[j], Fpp[j]

    return BentCoordinateMap(f, float(tr.beta[j]), params.alpha, params.T1, params.T2)


def _rows(params, x, z, need_lap=True):
    """W, W_x, W_z and Delta W for a block of rows (z is 1-D, >= 0)."""
    prof = params.profile
    k_osc = np.sqrt(prof.lambda1)
    zc = z[:, None]
    F, Fp, Fpp = params.trajectory.evaluate(z)
    W = np.zeros((len(z), len(x)))
    Wx = np.zeros_like(W)
    Wz = np.zeros_like(W)
    Lap = np.zeros_like(W) if need_lap else None
    for j in range(params.k):
        c = bent_coords_full(x[None, :], zc, F[j][:, None], Fp[j][:, None], Fpp[j][:, None],
                             float(params.trajectory.beta[j]), params.alpha, params.T1, params.T2)
        X, Zc = c["X"], c["Z"]
        d = params.delta[j]
        w, wp, wpp = prof.w(X), prof.wp(X), prof.wpp(X)
        Zf, Zp, Zpp = prof.Z(X), prof.Zp(X), prof.Zpp(X)
        cs, sn = np.cos(k_osc * Zc), np.sin(k_osc * Zc)
        u = w + d * Zf * cs
        uX = wp + d * Zp * cs
        uZ = -d * k_osc * Zf * sn
        W += u
        Wx += uX * c["X_x"] + uZ * c["Z_x"]
        Wz += uX * c["X_z"] + uZ * c["Z_z"]
        gXX = c["X_x"] ** 2 + c["X_z"] ** 2
        if need_lap:
            gXZ = c["X_x"] * c["Z_x"] + c["X_z"] * c["Z_z"]
            gZZ = c["Z_x"] ** 2 + c["Z_z"] ** 2
            uXX = wpp + d * Zpp * cs
            uXZ = -d * k_osc * Zp * sn
            uZZ = -d * prof.lambda1 * Zf * cs
            Lap += uXX * gXX + 2.0 * uXZ * gXZ + uZZ * gZZ + uX * c["X_zz"] + uZ * c["Z_zz"]
        ej = params.e[j]
        if ej is not None:
            e, ep, epp = (v[:, None] for v in ej(z))
            W += e * Zf
            Wx += e * Zp * c["X_x"]
            Wz += ep * Zf + e * Zp * c["X_z"]
            if need_lap:
                Lap += epp * Zf + 2.0 * ep * Zp * c["X_z"] + e * (Zpp * gXX + Zp * c["X_zz"])
    return W, Wx, Wz, Lap


def _chunks(nz, nx, budget=400_000):
    step = max(1, budget // max(nx, 1))
    for i in range(0, nz, step):
        yield i, min(nz, i + step)


def _check_grid(params, grid):
    F, _, _ = params.trajectory.evaluate(grid.z)
    if np.max(np.abs(F)) >= grid.x_max:
        raise GridTooSmall("a bump centre leaves the x-range of the grid")


@dataclass
class AnsatzFields:
    grid: Grid2D
    W: np.ndarray
    Wx: np.ndarray
    Wz: np.ndarray
    LapW: np.ndarray

    def field(self):
        return Field2D(self.grid, self.W)


def assemble_W(params, grid):
    _check_grid(params, grid)
    shape = grid.shape
    out = [np.empty(shape) for _ in range(4)]
    for i0, i1 in _chunks(*shape):
        for arr, blk in zip(out, _rows(params, grid.x, grid.z[i0:i1])):
            arr[i0:i1] = blk
    return AnsatzFields(grid, *out)


def _power(W, p):
    return np.maximum(W, 0.0) ** p


def residual_S(params, grid, method="analytic"):
    if method == "analytic":
        _check_grid(params, grid)
        S = np.empty(grid.shape)
        for i0, i1 in _chunks(*grid.shape):
            W, _, _, Lap = _rows(params, grid.x, grid.z[i0:i1])
            S[i0:i1] = Lap + _power(W, params.p) - W
        return Field2D(grid, S)
    if method == "finite_difference":
        W = assemble_W(params, grid).W
        lap = fd_laplacian(W, grid.hx, grid.hz)
        S = lap + _power(W, params.p) - W
        return Field2D(grid, S)
    raise ConfigInvalid("method", f"unknown residual method {method!r}")


def fd_laplacian(U, hx, hz):
    """5-point Laplacian with even reflection at z = 0; the outer ring
    (x ends and last z row) is left as NaN."""
    L = np.full_like(U, np.nan)
    Up = np.vstack([U[1:2], U])  # mirror row for z = -hz
    L[:-1, 1:-1] = ((U[:-1, 2:] - 2 * U[:-1, 1:-1] + U[:-1, :-2]) / hx ** 2
                    + (Up[2:, 1:-1] - 2 * Up[1:-1, 1:-1] + Up[:-2, 1:-1]) / hz ** 2)
    return L


@dataclass(frozen=True)
class WeightedNormSpec:
    sigma: float
    theta0: float
    alpha: float
    trajectory: object

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise ConfigInvalid("sigma", "must lie in (0, 1)")
        if self.theta0 <= 0 or self.alpha <= 0:
            raise ConfigInvalid("theta0", "theta0 and alpha must be positive")


def norm_weight(spec, x, z):
    F, _, _ = spec.trajectory.evaluate(z)
    zc = np.abs(z)[:, None]
    wt = np.zeros((len(z), len(x)))
    for j in range(F.shape[0]):
        wt += np.exp(-spec.sigma * np.abs(x[None, :] - F[j][:, None]) - spec.theta0 * spec.alpha * zc)
    return wt


def weighted_norm(field, spec):
    """sup |phi| / sum_j exp(-sigma |x - f_j(z)| - theta0 alpha |z|)."""
    g = field.grid
    vals = field.values
    best = 0.0
    for i0, i1 in _chunks(*g.shape):
        blk = vals[i0:i1]
        wt = norm_weight(spec, g.x, g.z[i0:i1])
        ok = np.isfinite(blk)
        if np.any(ok):
            best = max(best, float(np.max(np.abs(blk[ok]) / wt[ok])))
    return best


def single_bump_norm(field, sigma, a):
    """sup |e^{sigma |x| + a |z|} phi|."""
    g = field.grid
    wt = np.exp(sigma * np.abs(g.x)[None, :] + a * np.abs(g.z)[:, None])
    v = field.values
    ok = np.isfinite(v)
    return float(np.max(np.abs(v[ok] * wt[ok])))


def error_star(params, sigma, grid=None, **grid_kw):
    grid = grid or make_grid(params, **grid_kw)
    S = residual_S(params, grid)
    spec = WeightedNormSpec(sigma, params.theta0, params.alpha, params.trajectory)
    return weighted_norm(S, spec), S


def fit_slope(alphas, values):
    la, lv = np.log(alphas), np.log(values)
    slope, icpt = np.polyfit(la, lv, 1)
    return float(slope), float(icpt)


def verify_error_scaling(k, p, sigma, alpha_list, a=None, builder=None, **grid_kw):
    """Table of (alpha, E_*) with the fitted log-log slope and the implied
    constants E_* / alpha^(2 - 2 sigma)."""
    from .pipeline import base_params

    alphas = [float(x) for x in alpha_list]
    if any(b >= a_ for a_, b in zip(alphas, alphas[1:])):
        raise ConfigInvalid("alphas", "alpha list must be strictly decreasing")
    rows = []
    for al in alphas:
        prm = builder(al) if builder else base_params(k, p, al, a)
        E, _ = error_star(prm, sigma, **grid_kw)
        rows.append({"alpha": al, "Estar": E, "C": E / al ** (2 - 2 * sigma)})
    slope = None
    if len(rows) >= 2:
        slope, _ = fit_slope([r["alpha"] for r in rows], [r["Estar"] for r in rows])
    Cs = [r["C"] for r in rows]
    return {"table": rows, "slope": slope, "bound_exponent": 2 - 2 * sigma,
            "constant_spread": max(Cs) / min(Cs)}
