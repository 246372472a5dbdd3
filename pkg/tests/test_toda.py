import numpy as np
import pytest

from multibump.errors import ConfigInvalid, FitUnresolved, StepTooLarge, WindowTooShort
from multibump.toda import (TodaConfig, closed_form_trajectory, force, force_residual,
                            hamiltonian, integrate_toda, k2_lambda, scale_family,
                            solve_k2_closed_form)

CP = 60.0


@pytest.fixture(scope="module")
def k2():
    return integrate_toda(TodaConfig(2, (-1.0, 1.0), CP))


def test_closed_form_solves_ode():
    z = np.linspace(-40, 40, 4001)
    for al in (1.0, 0.1):
        (f1, f2), _, (g1, g2) = solve_k2_closed_form(-1.0, 1.0, CP, al, z, derivatives=True)
        r = force_residual(np.vstack([f1, f2]), np.vstack([g1, g2]), CP)
        assert np.max(np.abs(r)) < 1e-10


def test_closed_form_slope_and_offset():
    lam = k2_lambda(-1.0, 1.0, CP)
    z = np.array([200.0])
    (f1, f2), (p1, p2), _ = solve_k2_closed_form(-1.0, 1.0, CP, 1.0, z, derivatives=True)
    assert p2[0] == pytest.approx(lam / 2, rel=1e-14)
    # f2 = beta z + B with B = (log(4 c_p / lam^2) - 2 log 2) / 2
    B = 0.5 * (np.log(4 * CP / lam ** 2) - 2 * np.log(2))
    assert f2[0] - lam / 2 * z[0] == pytest.approx(B, abs=1e-10)
    assert B == pytest.approx(0.306853, abs=1e-6)


def test_integrator_matches_closed_form(k2):
    (f1, f2) = solve_k2_closed_form(-1.0, 1.0, CP, 1.0, k2.z)
    assert np.max(np.abs(k2.f - np.vstack([f1, f2]))) < 1e-6
    assert k2.energy_drift < 1e-8


def test_yoshida_beats_verlet():
    cfg = dict(k=2, a=(-1.0, 1.0), c_p=CP, z_max=10.0, step=1e-2, energy_tol=1.0)
    ex = solve_k2_closed_form(-1.0, 1.0, CP, 1.0, np.linspace(-10, 10, 2001))
    errs = {}
    for m in ("verlet", "yoshida4"):
        tr = _integrate_no_fit(TodaConfig(method=m, **cfg))
        errs[m] = np.max(np.abs(tr - np.vstack(ex)))
    assert errs["yoshida4"] < 0.01 * errs["verlet"]


def _integrate_no_fit(cfg):
    from multibump.toda import _step
    q = np.array(cfg.a, dtype=float)
    p = np.zeros_like(q)
    out = [q]
    n = int(round(cfg.z_max / cfg.step))
    for _ in range(n):
        q, p = _step(q, p, cfg.step, cfg.c_p, cfg.method)
        out.append(q)
    half = np.array(out).T
    return np.concatenate([half[:, :0:-1], half], axis=1)


def test_k3_symmetric():
    tr = integrate_toda(TodaConfig(3, (-2.0, 0.0, 2.0), CP))
    assert np.max(np.abs(tr.f[1])) < 1e-10
    assert abs(sum(tr.beta)) < 1e-8
    assert np.all(np.diff(tr.beta) > 0)
    assert tr.theta_hat > 0
    # the remainder decays at the smallest slope gap
    assert tr.theta_hat == pytest.approx(tr.asymptotics["vartheta"], rel=1e-2)


def test_scaled_family_solves_same_system(k2):
    tr = scale_family(k2, 0.1)
    assert np.max(np.abs(force_residual(tr.f, tr.fpp, CP))) < 1e-12
    # gaps widen by 2 log(1/alpha)
    i0 = len(tr.z) // 2
    assert (tr.f[1, i0] - tr.f[0, i0]) - 2.0 == pytest.approx(2 * np.log(10), abs=1e-12)
    assert tr.theta0 == pytest.approx(k2.theta0, rel=1e-10)


def test_hamiltonian_conserved_along_closed_form():
    tr = closed_form_trajectory((-1.0, 1.0), CP, z_max=20.0)
    H = hamiltonian(tr.f, tr.fp, CP)
    assert np.ptp(H) < 1e-9


def test_force_sums_to_zero():
    q = np.array([-3.0, -0.5, 0.2, 4.0])
    assert abs(force(q, CP).sum()) < 1e-12


def test_evaluate_interpolates_and_extends(k2):
    zq = np.array([0.3337, -5.5, 60.0])
    F, Fp, _ = k2.evaluate(zq)
    ex = solve_k2_closed_form(-1.0, 1.0, CP, 1.0, zq[:2])
    assert np.max(np.abs(F[:, :2] - np.vstack(ex))) < 1e-6
    # straight continuation beyond the window
    assert Fp[1, 2] == pytest.approx(k2.fp[1, -1])


def test_errors():
    with pytest.raises(ConfigInvalid):
        TodaConfig(2, (1.0, -1.0), CP)
    with pytest.raises(ConfigInvalid):
        TodaConfig(2, (0.0, 1.0), CP)
    with pytest.raises(StepTooLarge):
        integrate_toda(TodaConfig(2, (-1.0, 1.0), CP, step=0.05, method="verlet"))
    with pytest.raises(FitUnresolved):
        integrate_toda(TodaConfig(2, (-1.0, 1.0), CP, z_max=0.3))
    with pytest.raises(WindowTooShort):
        scale_family(closed_form_trajectory((-1.0, 1.0), CP, z_max=10.0), 0.1, z_max=200.0)
