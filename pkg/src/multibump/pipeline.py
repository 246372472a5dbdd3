"""Shared builders: profile constants, trajectories and base ansatz parameters."""

from functools import lru_cache

import numpy as np

from .ansatz import AnsatzParams
from .errors import ConfigInvalid
from .profile1d import constants
from .toda import TodaTrajectory, TodaConfig, integrate_toda, scale_family

# weight exponent used when there is a single bump and hence no slope gap
SINGLE_BUMP_VARTHETA = 1.0


@lru_cache(maxsize=8)
def profile_constants(p):
    return constants(p)


def default_positions(k):
    return tuple(float(2 * j - k - 1) for j in range(1, k + 1))


@lru_cache(maxsize=16)
def base_trajectory(k, a, p, z_max=40.0, step=1e-3):
    cp = profile_constants(p).c_p
    return integrate_toda(TodaConfig(k, a, cp, 1.0, z_max, step))


def single_bump_trajectory(alpha, z_max=40.0, n=4001):
    zh = np.linspace(0.0, z_max, n)
    z = np.concatenate([-zh[:0:-1], zh])
    zero = np.zeros((1, len(z)))
    tr = TodaTrajectory(z, zero, zero.copy(), zero.copy(), zero.copy(), 0.0, alpha)
    v = SINGLE_BUMP_VARTHETA
    tr.asymptotics = {"beta": [0.0], "B": [0.0], "tau_plus": [0.0], "tau_minus": [0.0],
                      "theta_hat": float("inf"), "vartheta": v, "theta1": v / 2,
                      "theta0": v / 4, "beta_sum": 0.0}
    return tr


def trajectory_for(k, p, alpha, a=None):
    if k == 1:
        return single_bump_trajectory(alpha, z_max=max(40.0, 40.0 / alpha))
    a = tuple(float(v) for v in (a if a is not None else default_positions(k)))
    if len(a) != k:
        raise ConfigInvalid("a", f"expected {k} positions")
    return scale_family(base_trajectory(k, a, float(p)), alpha)


def base_params(k, p, alpha, a=None, **kw):
    """Ansatz datum with e = 0 and delta = 0 around the Toda trajectory."""
    if not 0 < alpha < 1:
        raise ConfigInvalid("alpha", "must lie in (0, 1)")
    tr = trajectory_for(k, p, alpha, a)
    return AnsatzParams(k=k, alpha=alpha, p=float(p), trajectory=tr, **kw)
