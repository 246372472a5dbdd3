"""Repulsive Toda system f_j'' = c_p (e^{f_{j-1}-f_j} - e^{f_j-f_{j+1}}).

Trajectories start at rest from f_j(0) = a_j and are even in z, so only
z >= 0 is integrated; the stored grid is the symmetric extension.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import (ConfigInvalid, FitUnresolved, OrderingViolated,
                     StepTooLarge, WindowTooShort)


@dataclass(frozen=True)
class TodaConfig:
    k: int
    a: tuple
    c_p: float
    alpha: float = 1.0
    z_max: float = 40.0
    step: float = 1e-3
    method: str = "yoshida4"
    energy_tol: float = 1e-8

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if self.k < 2 or len(a) != self.k:
            raise ConfigInvalid("a", f"need k >= 2 positions, got k={self.k}, len(a)={len(a)}")
        if np.any(np.diff(a) <= 0):
            raise ConfigInvalid("a", "positions must be strictly increasing")
        if abs(a.sum()) > 1e-10:
            raise ConfigInvalid("a", "positions must sum to zero")
        if self.c_p <= 0:
            raise ConfigInvalid("c_p", "interaction constant must be positive")
        if self.alpha <= 0:
            raise ConfigInvalid("alpha", "must be positive")
        if self.step <= 0 or self.z_max <= 0:
            raise ConfigInvalid("step", "step and z_max must be positive")
        if self.method not in ("verlet", "yoshida4"):
            raise ConfigInvalid("method", f"unknown integrator {self.method!r}")


@dataclass
class TodaState:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0


def force(q, c_p):
    e = np.exp(q[:-1] - q[1:])
    F = np.zeros_like(q)
    F[1:] += e
    F[:-1] -= e
    return c_p * F


def jerk(q, p, c_p):
    """Time derivative of the force along the flow."""
    e = np.exp(q[:-1] - q[1:]) * (p[:-1] - p[1:])
    J = np.zeros_like(q)
    J[1:] += e
    J[:-1] -= e
    return c_p * J


def hamiltonian(q, p, c_p):
    q = np.asarray(q)
    p = np.asarray(p)
    return 0.5 * np.sum(p * p, axis=0) + c_p * np.sum(np.exp(q[:-1] - q[1:]), axis=0)


def force_residual(f, fpp, c_p):
    """f'' minus the Toda force; arrays shaped (k, n)."""
    return fpp - force(f, c_p)


# fourth-order triple jump
_Y1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_Y0 = 1.0 - 2.0 * _Y1


def _verlet(q, p, h, c_p):
    p = p + 0.5 * h * force(q, c_p)
    q = q + h * p
    p = p + 0.5 * h * force(q, c_p)
    return q, p


def _step(q, p, h, c_p, method):
    if method == "verlet":
        return _verlet(q, p, h, c_p)
    for c in (_Y1, _Y0, _Y1):
        q, p = _verlet(q, p, c * h, c_p)
    return q, p


def solve_k2_closed_form(a1, a2, c_p, alpha, z, derivatives=False):
    """Exact k=2 trajectory centred at (a1+a2)/2.

    u = f2 - f1 = 2 log(1/alpha) + log(4 c_p / lam^2) + 2 log cosh(lam alpha z / 2)
    with lam = sqrt(4 c_p e^{a1-a2}); u solves u'' = 2 c_p e^{-u}.
    """
    if not a1 < a2:
        raise ConfigInvalid("a", "need a1 < a2")
    z = np.asarray(z, dtype=float)
    lam = np.sqrt(4.0 * c_p * np.exp(a1 - a2))
    y = 0.5 * lam * alpha * z
    ay = np.abs(y)
    logcosh = ay + np.log1p(np.exp(-2.0 * ay)) - np.log(2.0)
    u = 2.0 * np.log(1.0 / alpha) + np.log(4.0 * c_p / lam ** 2) + 2.0 * logcosh
    mid = 0.5 * (a1 + a2)
    f1, f2 = mid - 0.5 * u, mid + 0.5 * u
    if not derivatives:
        return f1, f2
    up = lam * alpha * np.tanh(y)
    upp = 0.5 * (lam * alpha) ** 2 / np.cosh(np.minimum(ay, 350.0)) ** 2
    return (f1, f2), (-0.5 * up, 0.5 * up), (-0.5 * upp, 0.5 * upp)


def k2_lambda(a1, a2, c_p):
    return np.sqrt(4.0 * c_p * np.exp(a1 - a2))


@dataclass
class TodaTrajectory:
    z: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    fpp: np.ndarray
    fppp: np.ndarray
    c_p: float
    alpha: float = 1.0
    energy_drift: float = 0.0
    asymptotics: dict = field(default_factory=dict)

    @property
    def k(self):
        return self.f.shape[0]

    @property
    def z_max(self):
        return float(self.z[-1])

    @property
    def beta(self):
        return np.asarray(self.asymptotics["beta"])

    @property
    def B(self):
        return np.asarray(self.asymptotics["B"])

    @property
    def theta_hat(self):
        return self.asymptotics["theta_hat"]

    @property
    def theta1(self):
        return self.asymptotics["theta1"]

    @property
    def theta0(self):
        return self.asymptotics["theta0"]

    def _half(self):
        i = len(self.z) // 2
        return self.z[i:], self.f[:, i:], self.fp[:, i:], self.fpp[:, i:], self.fppp[:, i:]

    def evaluate(self, zq):
        """(f, f', f'') at arbitrary z, each shaped (k,) + zq.shape.

        Hermite interpolation on the stored samples; beyond the window the
        trajectories are continued as straight lines (the remainder decays
        exponentially, so this is accurate once the force has died out).
        """
        zq = np.asarray(zq, dtype=float)
        az = np.abs(zq).ravel()
        sgn = np.where(zq.ravel() < 0, -1.0, 1.0)
        z, f, fp, fpp, fppp = self._half()
        inside = np.minimum(az, z[-1])
        F = CubicHermiteSpline(z, f, fp, axis=1)(inside)
        Fp = CubicHermiteSpline(z, fp, fpp, axis=1)(inside)
        Fpp = CubicHermiteSpline(z, fpp, fppp, axis=1)(inside)
        over = az > z[-1]
        if np.any(over):
            dz = az[over] - z[-1]
            F[:, over] = f[:, -1:] + fp[:, -1:] * dz
            Fp[:, over] = fp[:, -1:]
            Fpp[:, over] = 0.0
        shape = (self.k,) + zq.shape
        return F.reshape(shape), (Fp * sgn).reshape(shape), Fpp.reshape(shape)


def integrate_toda(config):
    """Integrate from rest at z=0; the alpha-family is obtained by scaling."""
    cfg = config
    a = np.asarray(cfg.a, dtype=float)
    # integrate the alpha = 1 base trajectory, then rescale
    h = cfg.step * cfg.alpha
    T = cfg.z_max * cfg.alpha
    n = int(np.ceil(T / h - 1e-9))
    h = T / n
    q = a.copy()
    p = np.zeros_like(a)
    Q = np.empty((cfg.k, n + 1))
    P = np.empty((cfg.k, n + 1))
    Q[:, 0], P[:, 0] = q, p
    for i in range(1, n + 1):
        q, p = _step(q, p, h, cfg.c_p, cfg.method)
        Q[:, i], P[:, i] = q, p
    if np.any(np.diff(Q, axis=0) <= 0):
        raise OrderingViolated("trajectories crossed during integration")
    H = hamiltonian(Q, P, cfg.c_p)
    drift = float(np.max(np.abs(H - H[0])))
    if drift > cfg.energy_tol:
        raise StepTooLarge(f"energy drift {drift:.3g} exceeds {cfg.energy_tol:.3g}; reduce step")
    zh = h * np.arange(n + 1)
    Fpp = force(Q, cfg.c_p)
    Fppp = jerk(Q, P, cfg.c_p)
    base = _symmetric(zh, Q, P, Fpp, Fppp, cfg.c_p, 1.0, drift)
    base.asymptotics = extract_asymptotics(base)
    if cfg.alpha == 1.0:
        return base
    return scale_family(base, cfg.alpha)


def _symmetric(zh, f, fp, fpp, fppp, c_p, alpha, drift):
    z = np.concatenate([-zh[:0:-1], zh])
    ev = lambda A: np.concatenate([A[:, :0:-1], A], axis=1)
    od = lambda A: np.concatenate([-A[:, :0:-1], A], axis=1)
    return TodaTrajectory(z, ev(f), od(fp), ev(fpp), od(fppp), c_p, alpha, drift)


def closed_form_trajectory(a, c_p, alpha=1.0, z_max=40.0, step=1e-3):
    """k=2 trajectory sampled from the exact solution, same layout as
    integrate_toda."""
    a1, a2 = a
    n = int(np.ceil(z_max / step - 1e-9))
    zh = np.linspace(0.0, z_max, n + 1)
    (f1, f2), (p1, p2), (q1, q2) = solve_k2_closed_form(a1, a2, c_p, alpha, zh, True)
    f = np.vstack([f1, f2])
    fp = np.vstack([p1, p2])
    fpp = np.vstack([q1, q2])
    fppp = jerk(f, fp, c_p)
    tr = _symmetric(zh, f, fp, fpp, fppp, c_p, alpha, 0.0)
    tr.asymptotics = extract_asymptotics(tr)
    return tr


def scale_family(trajectory, alpha, z_max=None):
    """f_{alpha j}(z) = f_j(alpha z) + (2j - k - 1) log(1/alpha).

    The offsets make adjacent gaps grow by 2 log(1/alpha), so the family
    solves the same (unscaled) Toda system.
    """
    if alpha <= 0:
        raise ConfigInvalid("alpha", "must be positive")
    tr = trajectory
    if z_max is not None and tr.z_max < z_max * alpha - 1e-12:
        raise WindowTooShort(f"base window {tr.z_max:.4g} < {z_max * alpha:.4g}")
    if alpha == 1.0:
        return tr
    k = tr.k
    shift = (2.0 * np.arange(1, k + 1) - k - 1.0) * np.log(1.0 / alpha)
    out = TodaTrajectory(
        z=tr.z / alpha,
        f=tr.f + shift[:, None],
        fp=alpha * tr.fp,
        fpp=alpha ** 2 * tr.fpp,
        fppp=alpha ** 3 * tr.fppp,
        c_p=tr.c_p,
        alpha=tr.alpha * alpha,
        energy_drift=tr.energy_drift * alpha ** 2,
    )
    out.asymptotics = extract_asymptotics(out)
    return out


def extract_asymptotics(trajectory, force_tol=1e-10):
    """Fit f_j ~ beta_j |z| + B_j on the tail and the decay rate of f' - beta."""
    z, f, fp, fpp, _ = trajectory._half()
    tail = z >= 0.5 * z[-1]
    if np.max(np.abs(fpp[:, tail])) > force_tol:
        raise FitUnresolved("force has not decayed below tolerance in the tail; extend z_max")
    A = np.vstack([z[tail], np.ones(tail.sum())]).T
    coef, *_ = np.linalg.lstsq(A, f[:, tail].T, rcond=None)
    beta, B = coef[0], coef[1]
    gaps = np.diff(beta)
    if np.any(gaps <= 0):
        raise FitUnresolved("asymptotic slopes are not strictly ordered")

    # the force is computed from positions alone, so unlike f' - beta it
    # has no accumulated roundoff floor; it decays at the remainder's rate
    dev = np.max(np.abs(fpp), axis=0)
    band = (dev > 1e-250) & (dev < 1e-2 * dev[0])
    if band.sum() < 10:
        raise FitUnresolved("too few samples in the remainder decay band")
    slope, _ = np.polyfit(z[band], np.log(dev[band]), 1)
    theta_hat = -slope
    if theta_hat <= 0:
        raise FitUnresolved("remainder does not decay")
    alpha = trajectory.alpha
    vartheta = float(np.min(gaps)) / alpha
    return {
        "beta": beta.tolist(),
        "B": B.tolist(),
        "tau_plus": B.tolist(),
        "tau_minus": B.tolist(),
        "theta_hat": float(theta_hat),
        "vartheta": vartheta,
        "theta1": 0.5 * vartheta,
        "theta0": 0.25 * vartheta,
        "beta_sum": float(np.sum(beta)),
    }
