"""Newton correction of the ansatz W to a solution of Delta u - u + u^p = 0.

The unknown is phi = u - W on the interior of a z >= 0 grid (even reflection
at z = 0, phi = 0 on the x-ends and at z = z_max). W enters through its
analytic residual S[W], phi through the 5-point Laplacian:

    F(phi) = S[W] + Delta_h phi + (W + phi)_+^p - W^p - phi.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ansatz import (WeightedNormSpec, assemble_W, make_grid, residual_S, weighted_norm,
                     Field2D, _power)
from .errors import BoundaryContaminated, Diverged, PositivityLost, SolverSingular
from .linear import LinearizedOperator2D


@dataclass
class NewtonReport:
    iterations: int
    residual_sup: list
    residual_star: list
    distance_star: float
    positive: bool
    contamination: float
    correction_margin_ratio: float
    min_u: float
    step_lengths: list = field(default_factory=list)
    quadratic_ratios: list = field(default_factory=list)
    converged: bool = False

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _outer_mask(grid, frac=0.1):
    x, z = grid.x, grid.z
    ax = np.abs(x) >= (1 - frac) * grid.x_max
    az = z >= (1 - frac) * grid.z_max
    return az[:, None] | ax[None, :]


def boundary_contamination(S, grid, frac=0.1, floor=0.0):
    """Residual mass sum |S| in the outer margin relative to the rest; zero
    when S is everywhere below `floor`."""
    m = _outer_mask(grid, frac)
    a = np.abs(np.nan_to_num(S))
    if np.max(a) <= floor:
        return 0.0
    inner = float(np.sum(a[~m]))
    return float(np.sum(a[m])) / inner if inner > 0 else 0.0


def correction_margin_ratio(phi, grid, frac=0.1):
    """Largest |phi| in the outer margin relative to the largest |phi|."""
    tot = float(np.max(np.abs(phi)))
    if tot == 0:
        return 0.0
    return float(np.max(np.abs(phi[_outer_mask(grid, frac)]))) / tot


def _diverged(msg, res, steps):
    exc = Diverged(msg)
    exc.history = {"residual_sup": list(res), "step_lengths": list(steps)}
    return exc


def newton_solve(params, grid=None, tol=1e-9, max_iter=8, sigma=0.1, hx=0.1, hz=0.1,
                 max_halvings=10, contamination_tol=1e-3, shamanskii=1):
    """Newton iteration from phi = 0. `shamanskii` reuses a factorization for
    that many consecutive steps. Returns (u*, NewtonReport)."""
    grid = grid or make_grid(params, hx=hx, hz=hz)
    p = params.p
    W = assemble_W(params, grid).W
    S = residual_S(params, grid).values
    lap = LinearizedOperator2D(grid, np.zeros(grid.shape))
    A = lap.matrix
    sl = (slice(0, -1), slice(1, -1))
    Wi = W[sl].ravel()
    Si = S[sl].ravel()
    Wp = _power(Wi, p)
    spec = WeightedNormSpec(sigma, params.theta0, params.alpha, params.trajectory)

    def F(v):
        return Si + A @ v + _power(Wi + v, p) - Wp - v

    def star(r):
        return weighted_norm(Field2D(grid, lap.embed(r)), spec)

    v = np.zeros(lap.n_interior)
    r = F(v)
    res = [float(np.max(np.abs(r)))]
    res_star = [star(r)]
    steps = []
    lu = None
    age = 0
    it = 0
    while it == 0 or res[-1] >= tol:
        if it >= max_iter:
            raise _diverged(f"no convergence in {max_iter} iterations (residual {res[-1]:.3g})",
                            res, steps)
        it += 1
        if lu is None or age >= shamanskii:
            d = p * np.maximum(Wi + v, 0.0) ** (p - 1) - 1.0
            try:
                lu = spla.splu((A + sp.diags(d)).tocsc(), permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise SolverSingular(str(exc)) from exc
            age = 0
        age += 1
        dv = lu.solve(-r)
        # backtrack until the iterate is positive and the residual decreases
        t = 1.0
        r2 = np.linalg.norm(r)
        for _ in range(max_halvings + 1):
            vn = v + t * dv
            if np.min(Wi + vn) > 0:
                rn = F(vn)
                if np.linalg.norm(rn) <= (1 - 1e-4 * t) * r2:
                    break
            t *= 0.5
        else:
            if np.min(Wi + vn) <= 0:
                raise PositivityLost("line search could not keep the iterate positive")
            raise _diverged("line search found no residual decrease", res, steps)
        v, r = vn, rn
        steps.append(t)
        res.append(float(np.max(np.abs(r))))
        res_star.append(star(r))
        if not np.isfinite(res[-1]) or res[-1] > 1e3 * res[0]:
            raise _diverged(f"residual blew up to {res[-1]:.3g}", res, steps)
    phi = lap.embed(v)
    u = W + phi
    inner = u[sl]
    contamination = boundary_contamination(S, grid, floor=tol)
    quad = [res[i + 1] / res[i] ** 2 for i in range(len(res) - 1) if res[i + 1] > 1e-12]
    rep = NewtonReport(
        iterations=it, residual_sup=res, residual_star=res_star,
        distance_star=weighted_norm(Field2D(grid, phi), spec),
        positive=bool(np.min(inner) > 0), contamination=contamination,
        correction_margin_ratio=correction_margin_ratio(phi, grid),
        min_u=float(np.min(inner)), step_lengths=steps, quadratic_ratios=quad, converged=True)
    if contamination > contamination_tol:
        raise BoundaryContaminated(f"outer-margin residual mass is {contamination:.3g} of the interior")
    return Field2D(grid, u), rep


def _ridge(u_row, x, guess, half_width):
    """Sub-grid location of the maximum of u_row near `guess` (quadratic fit)."""
    win = np.abs(x - guess) <= half_width
    idx = np.flatnonzero(win)
    i = idx[np.argmax(u_row[idx])]
    if i == 0 or i == len(x) - 1:
        return float(x[i])
    y0, y1, y2 = u_row[i - 1], u_row[i], u_row[i + 1]
    den = y0 - 2 * y1 + y2
    off = 0.5 * (y0 - y2) / den if den != 0 else 0.0
    return float(x[i] + off * (x[1] - x[0]))


def verify_solution_profile(u, params, z_stride=1):
    """Decay at the x-margins, ridge-line distance to the trajectories and
    the growth law of the ridge separation."""
    g = u.grid
    U = u.values
    margin = float(max(np.max(np.abs(U[:, :3])), np.max(np.abs(U[:, -3:]))))
    rows = np.arange(0, len(g.z) - 1, z_stride)
    z = g.z[rows]
    F, _, _ = params.trajectory.evaluate(z)
    k = params.k
    half = 0.5 * max(1.0, float(np.min(np.diff(F, axis=0))) if k > 1 else 4.0)
    half = min(half, 4.0)
    ridges = np.array([[_ridge(U[i], g.x, F[j][n], half) for n, i in enumerate(rows)]
                       for j in range(k)])
    dev = float(np.max(np.abs(ridges - F)))
    out = {"margin_max": margin, "ridge_deviation": dev, "hx": g.hx,
           "top_row_max": float(np.max(np.abs(U[-1])))}
    if k > 1:
        sep = ridges[-1] - ridges[0]
        tail = z >= 0.5 * z[-1]
        slope = np.polyfit(z[tail], sep[tail], 1)[0]
        beta = params.trajectory.beta
        out["separation_slope"] = float(slope)
        out["toda_separation_slope"] = float(beta[-1] - beta[0])
        # log(1/alpha)-law at z = 0: gap ~ 2 log(1/alpha) + O(1)
        out["separation_at_0"] = float(sep[0])
        out["log_law_gap"] = float(sep[0] - 2 * np.log(1 / params.alpha) * (k - 1))
    return out


def symmetry_defect(u):
    """max |u(-x, z) - u(x, z)| on a symmetric grid."""
    return float(np.max(np.abs(u.values - u.values[:, ::-1])))
