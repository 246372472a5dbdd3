import numpy as np
import pytest

from multibump.errors import DegenerateDenominator, OrthogonalityViolated
from multibump.pipeline import base_params, profile_constants, trajectory_for
from multibump.reduction import (apply_linearized_toda_k2, choose_delta, column_structure,
                                 even_resonance_solution, k2_kernel, leading_order_projection,
                                 ortp_integral, reduced_fixed_point_iterate,
                                 solve_linearized_toda_general, solve_linearized_toda_k2,
                                 solve_resonance, y_norm)
from multibump.toda import solve_k2_closed_form

CP = 60.0
AL = 0.1
LAM = 1.25


@pytest.fixture(scope="module")
def k2_background():
    z = np.linspace(0, 150, 15001)
    (f1, f2), (p1, p2), (q1, q2) = solve_k2_closed_form(-1.0, 1.0, CP, AL, z, derivatives=True)
    return z, f2 - f1, p2 - p1, q2 - q1


def _test_function(z):
    # h = sech^2(0.3 z) cos(0.2 z) and its second derivative
    a, b = 0.3, 0.2
    s, t = 1 / np.cosh(a * z), np.tanh(a * z)
    c, sn = np.cos(b * z), np.sin(b * z)
    g = s ** 2
    gp = -2 * a * s ** 2 * t
    gpp = a * a * (4 * s ** 2 * t ** 2 - 2 * s ** 4)
    return g * c, gpp * c - 2 * gp * b * sn - b * b * g * c


def test_k2_kernel(k2_background):
    z, u, up, upp = k2_background
    psi1, _, psi2, _ = k2_kernel(z, up, upp)
    uppp = -2 * CP * np.exp(-u) * up
    assert np.max(np.abs(apply_linearized_toda_k2(psi1, uppp, u, CP))) < 1e-10
    assert np.max(np.abs(apply_linearized_toda_k2(psi2, 2 * upp + z * uppp, u, CP))) < 1e-10
    # the printed "+2" variant is not in the kernel
    bad = apply_linearized_toda_k2(z * up + 2, 2 * upp + z * uppp, u, CP)
    assert np.allclose(bad, 8 * CP * np.exp(-u), atol=1e-10)


def test_k2_round_trip_and_wronskian(k2_background):
    z, u, up, upp = k2_background
    h, hpp = _test_function(z)
    p = apply_linearized_toda_k2(h, hpp, u, CP)
    sol = solve_linearized_toda_k2(p, z, u, up, upp, CP, AL)
    assert np.max(np.abs(sol.h - h)) < 1e-8
    lam = np.sqrt(4 * CP * np.exp(-2.0))
    assert sol.wronskian == pytest.approx((lam * AL) ** 2, rel=1e-12)
    assert sol.wronskian_variation < 1e-10


def test_general_k_matches_k2(k2_background):
    z, u, up, upp = k2_background
    h, hpp = _test_function(z)
    p = apply_linearized_toda_k2(h, hpp, u, CP)
    tr = trajectory_for(2, 2.0, AL)
    zz, pp, hh = z[::5], p[::5], h[::5]
    sol = solve_linearized_toda_general(np.vstack([-pp / 2, pp / 2]), zz, tr)
    assert np.max(np.abs(sol.phi - np.vstack([-hh / 2, hh / 2]))) < 1e-8
    assert abs(sol.com_drift) < 1e-12
    zero = solve_linearized_toda_general(np.zeros((2, len(zz))), zz, tr)
    assert np.max(np.abs(zero.phi)) == 0.0


def test_column_structure():
    tr = trajectory_for(2, 2.0, AL)
    cs = column_structure(tr, np.linspace(0, 150, 3001))
    assert len(cs["bounded"]) == 2 and len(cs["linear"]) == 2
    assert all(abs(s) < 1e-6 for s, _ in cs["bounded"])
    assert all(abs(s) > 1e-3 for s, _ in cs["linear"])


def test_resonance_manufactured():
    z = np.linspace(0, 60, 6001)
    s = 1 / np.cosh(z)
    e = s ** 2
    epp = 4 * np.tanh(z) ** 2 * s ** 2 - 2 * s ** 4
    r = solve_resonance(epp + LAM * e, z, LAM)
    assert np.max(np.abs(r.e - e)) < 1e-8


def test_resonance_synthetic_with_subtraction():
    z = np.linspace(0, 80, 8001)
    om, rate = 0.7, 0.3
    q = (LAM - om ** 2) * np.cos(om * z) * np.exp(-rate * z)
    g = np.exp(-z ** 2)
    q = q - ortp_integral(q, z, LAM) / ortp_integral(g, z, LAM) * g
    r = solve_resonance(q, z, LAM, rate=0.1)
    # independent check of e'' + lambda1 e = q by fourth-order differences
    h = z[1] - z[0]
    e = r.e
    d2 = (-e[4:] + 16 * e[3:-1] - 30 * e[2:-2] + 16 * e[1:-3] - e[:-4]) / (12 * h * h)
    assert np.max(np.abs(d2 + LAM * e[2:-2] - q[2:-2])) < 1e-8
    assert "C_e1" in r.estimates and "C_e2" in r.estimates


def test_resonance_zero_and_violation():
    z = np.linspace(0, 40, 4001)
    r = solve_resonance(np.zeros_like(z), z, LAM)
    assert np.all(r.e == 0)
    q = np.exp(-z ** 2)
    with pytest.raises(OrthogonalityViolated):
        solve_resonance(q, z, LAM)
    e, amp = even_resonance_solution(q, z, LAM)
    # the even solution keeps oscillating with the predicted amplitude
    assert np.max(np.abs(e[-500:])) == pytest.approx(amp, rel=1e-3)


def test_choose_delta():
    z = np.linspace(0, 40, 4001)
    B0 = np.cos(np.sqrt(LAM) * z)[None, :] * np.exp(-0.1 * z)
    d, _ = choose_delta(np.zeros((1, len(z))), B0, z, LAM)
    assert d[0] == 0.0
    Pe = 0.3 * B0
    d, _ = choose_delta(Pe, B0, z, LAM)
    assert d[0] == pytest.approx(-0.3, rel=1e-10)
    with pytest.raises(DegenerateDenominator):
        choose_delta(Pe, 1e-9 * B0, z, LAM, B=1.0, alpha=0.1)


def test_leading_order_vanishes_on_toda():
    prm = base_params(2, 2.0, AL)
    z = np.linspace(0, 50, 501)
    pf, _ = leading_order_projection(prm, z)
    assert np.max(np.abs(pf)) < 1e-6


def test_leading_order_collapse_without_curvature():
    # with f'' = 0 the prediction reduces to the interaction term
    cst = profile_constants(2.0)
    prm = base_params(2, 2.0, AL)
    z = np.linspace(0, 50, 501)
    pf, _ = leading_order_projection(prm, z)
    F, _, Fpp = prm.trajectory.evaluate(z)
    inter = cst.C_p * np.exp(-(F[1] - F[0]))
    assert np.allclose(pf[1] + cst.c0 * Fpp[1], inter, atol=1e-10)
    assert np.allclose(pf[0] + cst.c0 * Fpp[0], -inter, atol=1e-10)


def test_zero_projections_one_step():
    prm = base_params(2, 2.0, 0.3)
    st, _, hist = reduced_fixed_point_iterate(prm, zero_projections=True, hz=0.2, hx=0.2)
    assert len(hist) == 1 and hist[0]["update_norm"] == 0.0
    assert np.all(st.delta == 0)


def test_y_norm_zero():
    z = np.linspace(0, 10, 11)
    Z = np.zeros((2, 11))
    assert y_norm(Z, Z, Z, Z, Z, Z, np.zeros(2), z, 0.1, 1.0) == 0.0
