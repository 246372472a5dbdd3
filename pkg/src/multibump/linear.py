"""Discrete linearized operators and the projected solvers.

Unknowns live on the interior of a rectangle: Dirichlet at |x| = x_max and
at z = z_max, with even reflection across z = 0 (the grid starts at z = 0).
Each z-row carries its own multipliers, so the projected problems become
one bordered sparse system solved by a direct LU factorization.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ansatz import (CUTOFF_LEVELS, Field2D, Grid2D, WeightedNormSpec, assemble_W,
                     bent_coords_full, plateau, single_bump_norm, weighted_norm)
from .errors import ConfigInvalid, ConstraintViolation, SolverSingular
from .profile1d import HomoclinicProfile


def _second_diff(n, h, reflect_first=False):
    main = np.full(n, -2.0 / h ** 2)
    up = np.full(n - 1, 1.0 / h ** 2)
    lo = np.full(n - 1, 1.0 / h ** 2)
    if reflect_first:
        up[0] = 2.0 / h ** 2
    return sp.diags([lo, main, up], [-1, 0, 1], format="csr")


def _first_diff(n, h, reflect_first=False):
    up = np.full(n - 1, 0.5 / h)
    lo = np.full(n - 1, -0.5 / h)
    D = sp.diags([lo, up], [-1, 1], format="lil")
    if reflect_first:
        # even function: derivative at the mirror node vanishes
        D[0, 1] = 0.0
    return D.tocsr()


@dataclass
class LinearizedOperator2D:
    """Discrete Delta + V on the interior of `grid` (z >= 0, reflected).

    `b` optionally holds the five coefficient fields of
    B(phi) = b1 phi_xx + b2 phi_xz + b3 phi_x + b4 phi_z + b5 phi.
    """
    grid: Grid2D
    potential: np.ndarray
    b: tuple = None
    matrix: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        g = self.grid
        nxi, nzi = len(g.x) - 2, len(g.z) - 1
        if self.potential.shape != g.shape:
            raise ConfigInvalid("potential", "shape does not match grid")
        Dxx = _second_diff(nxi, g.hx)
        Dzz = _second_diff(nzi, g.hz, reflect_first=True)
        Ix, Iz = sp.identity(nxi), sp.identity(nzi)
        Axx = sp.kron(Iz, Dxx)
        A = Axx + sp.kron(Dzz, Ix) + sp.diags(self.interior(self.potential).ravel())
        if self.b is not None:
            b1, b2, b3, b4, b5 = (self.interior(np.broadcast_to(bi, g.shape)).ravel() for bi in self.b)
            Dx = sp.kron(Iz, _first_diff(nxi, g.hx))
            Dz = sp.kron(_first_diff(nzi, g.hz, reflect_first=True), Ix)
            A = (A + sp.diags(b1) @ Axx + sp.diags(b2) @ (Dx @ Dz) + sp.diags(b3) @ Dx
                 + sp.diags(b4) @ Dz + sp.diags(b5))
        self.matrix = A.tocsr()

    @property
    def n_interior(self):
        g = self.grid
        return (len(g.z) - 1) * (len(g.x) - 2)

    def interior(self, F):
        return F[:-1, 1:-1]

    def embed(self, v):
        g = self.grid
        F = np.zeros(g.shape)
        F[:-1, 1:-1] = v.reshape(len(g.z) - 1, len(g.x) - 2)
        return F

    def b_norm(self):
        """Sup-norm size of the perturbation coefficients (gradient terms of
        b1, b2 included)."""
        if self.b is None:
            return 0.0
        g = self.grid
        tot = sum(float(np.max(np.abs(bi))) for bi in self.b)
        for bi in self.b[:2]:
            bi = np.broadcast_to(bi, g.shape)
            gz, gx = np.gradient(bi, g.hz, g.hx)
            tot += float(np.max(np.hypot(gx, gz)))
        return tot


def apply_L(op, field):
    """Apply the discrete operator; boundary nodes of the result are zero."""
    v = op.interior(field.values).ravel()
    return Field2D(op.grid, op.embed(op.matrix @ v))


def apply_stencil(U, hx, hz, V):
    """5-point Delta + V on the interior of a full (unreflected) grid."""
    return ((U[1:-1, 2:] - 2 * U[1:-1, 1:-1] + U[1:-1, :-2]) / hx ** 2
            + (U[2:, 1:-1] - 2 * U[1:-1, 1:-1] + U[:-2, 1:-1]) / hz ** 2
            + V[1:-1, 1:-1] * U[1:-1, 1:-1])


def kernel_check(p, h, x_max=20.0, z_max=None):
    """Sup residuals of L = Delta + p w^{p-1} - 1 on w_x, Z cos(kz), Z sin(kz)
    over a symmetric rectangle with spacing h."""
    prof = HomoclinicProfile(p)
    k = np.sqrt(prof.lambda1)
    z_max = z_max or 2 * np.pi / k
    nx = int(round(x_max / h))
    nz = int(round(z_max / h))
    x = h * np.arange(-nx, nx + 1)
    z = h * np.arange(-nz, nz + 1)
    X, Zg = np.meshgrid(x, z)
    V = prof.potential(X)
    elems = {
        "w_x": prof.wp(X),
        "Z_cos": prof.Z(X) * np.cos(k * Zg),
        "Z_sin": prof.Z(X) * np.sin(k * Zg),
    }
    return {name: float(np.max(np.abs(apply_stencil(U, h, h, V)))) for name, U in elems.items()}


def kernel_convergence(p, h_coarse=0.1, h_fine=0.05, **kw):
    rc = kernel_check(p, h_coarse, **kw)
    rf = kernel_check(p, h_fine, **kw)
    return {name: {"coarse": rc[name], "fine": rf[name], "ratio": rc[name] / rf[name]} for name in rc}


@dataclass
class ProjectedSolution:
    phi: Field2D
    c: np.ndarray
    d: np.ndarray
    orthogonality_residual: float
    norms: dict
    consistency_residual: float = 0.0


def _trap_weights(x):
    h = x[1] - x[0]
    w = np.full(len(x), h)
    w[[0, -1]] *= 0.5
    return w


def _bordered_solve(op, h_int, coef, cons, tol):
    """Solve A phi - sum_m c_m coef_m = h with sum_x cons_m phi = 0 per row.

    coef, cons: arrays shaped (M, nzi, nxi).
    """
    A = op.matrix
    M, nzi, nxi = coef.shape
    N = nzi * nxi
    node = np.arange(N)
    row_of = node // nxi
    mult_idx = np.concatenate([m * nzi + row_of for m in range(M)])
    nodes = np.tile(node, M)
    C = sp.csr_matrix((-coef.reshape(M, N).ravel(), (nodes, mult_idx)), shape=(N, M * nzi))
    G = sp.csr_matrix((cons.reshape(M, N).ravel(), (mult_idx, nodes)), shape=(M * nzi, N))
    K = sp.bmat([[A, C], [G, None]], format="csc")
    rhs = np.concatenate([h_int.ravel(), np.zeros(M * nzi)])
    try:
        lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
        sol = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolverSingular(f"bordered system is singular: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SolverSingular("non-finite solution of the bordered system")
    phi = sol[:N]
    mult = sol[N:].reshape(M, nzi)
    resid = K @ sol - rhs
    consistency = float(np.max(np.abs(resid)) / max(1.0, np.max(np.abs(rhs))))
    ortho = float(np.max(np.abs(G @ phi))) if M else 0.0
    scale = float(np.max(np.sum(np.abs(cons), axis=2)))
    if ortho > tol * scale * max(1.0, np.max(np.abs(phi))):
        raise ConstraintViolation(f"orthogonality residual {ortho:.3g}")
    return phi, mult, ortho, consistency


def meas1_lhs(x, rho, sigma, prof):
    """Left side of the smallness condition on the measure rho dx."""
    h = x[1] - x[0]
    rx = np.gradient(rho, h)
    rxx = np.gradient(rx, h)
    integrand = np.exp(-sigma * np.abs(x)) * ((np.abs(prof.wp(x)) + np.abs(prof.Z(x))) * np.abs(rxx)
                                              + 2 * (np.abs(prof.wpp(x)) + np.abs(prof.Zp(x))) * np.abs(rx))
    return float(np.sum(_trap_weights(x) * integrand))


def single_bump_operator(p, grid, b=None):
    prof = HomoclinicProfile(p)
    V = np.broadcast_to(prof.potential(grid.x)[None, :], grid.shape).copy()
    return LinearizedOperator2D(grid, V, b)


def solve_projected_single(h_field, p, rho=None, b=None, sigma=0.5, a=0.1, tol=1e-8, op=None):
    """(L + B) phi = h + c(z) w_x + d(z) Z with int phi w_x rho = int phi Z rho = 0."""
    g = h_field.grid
    prof = HomoclinicProfile(p)
    op = op or single_bump_operator(p, g, b)
    xi = g.x[1:-1]
    nzi = len(g.z) - 1
    rho = np.ones_like(g.x) if rho is None else np.asarray(rho, dtype=float)
    wtr = _trap_weights(g.x)[1:-1]
    coef = np.stack([np.broadcast_to(prof.wp(xi), (nzi, len(xi))),
                     np.broadcast_to(prof.Z(xi), (nzi, len(xi)))])
    cons = np.stack([np.broadcast_to(prof.wp(xi) * rho[1:-1] * wtr, (nzi, len(xi))),
                     np.broadcast_to(prof.Z(xi) * rho[1:-1] * wtr, (nzi, len(xi)))])
    phi, mult, ortho, cons_res = _bordered_solve(op, op.interior(h_field.values), coef, cons, tol)
    Phi = Field2D(g, op.embed(phi))
    c = np.append(mult[0], 0.0)
    d = np.append(mult[1], 0.0)
    h_norm = single_bump_norm(h_field, sigma, a)
    phi_norm = single_bump_norm(Phi, sigma, a)
    norms = {"phi": phi_norm, "h": h_norm,
             "stability_constant": phi_norm / h_norm if h_norm > 0 else 0.0,
             "meas1": meas1_lhs(g.x, rho, sigma, prof),
             "b_norm": op.b_norm()}
    zz = g.z
    if h_norm > 0:
        env = h_norm * np.exp(-a * zz)
        norms["multiplier_decay_constant"] = float(np.max((np.abs(c) + np.abs(d)) / env))
    return ProjectedSolution(Phi, c[:, None], d[:, None], ortho, norms, cons_res)


def multibump_fields(params, grid):
    """Per-bump multiplier shapes eta_j w'(x - f_j), eta_j Z(x - f_j) and
    constraint weights w'(x - f_j) rho_j, Z(x - f_j) rho_j on the grid."""
    prof = params.profile
    tr = params.trajectory
    F, Fp, Fpp = tr.evaluate(grid.z)
    x = grid.x[None, :]
    zc = grid.z[:, None]
    out = []
    for j in range(params.k):
        c = bent_coords_full(x, zc, F[j][:, None], Fp[j][:, None], Fpp[j][:, None],
                             float(tr.beta[j]), params.alpha, params.T1, params.T2)
        s = np.abs(c["X"]) / params.dstar
        rho = plateau(s, *CUTOFF_LEVELS["rho"])
        eta = plateau(s, *CUTOFF_LEVELS["eta"])
        xi = x - F[j][:, None]
        wx, Zj = prof.wp(xi), prof.Z(xi)
        out.append({"eta_wx": eta * wx, "eta_Z": eta * Zj, "rho_wx": rho * wx, "rho_Z": rho * Zj,
                    "wx": wx, "Z": Zj, "rho": rho, "eta": eta})
    return out


def multibump_operator(params, grid, W=None):
    if W is None:
        W = assemble_W(params, grid).W
    V = params.p * np.maximum(W, 0.0) ** (params.p - 1.0) - 1.0
    return LinearizedOperator2D(grid, V)


def solve_projected_multibump(h_field, params, sigma=0.1, tol=1e-8, op=None):
    """L phi = h + sum_j c_j eta_j w_{j,x} + d_j eta_j Z_j with the 2k row
    constraints int phi w_{j,x} rho_j = int phi Z_j rho_j = 0."""
    g = h_field.grid
    op = op or multibump_operator(params, g)
    fl = multibump_fields(params, g)
    wtr = _trap_weights(g.x)[None, :]
    coef, cons = [], []
    for fj in fl:
        coef += [op.interior(fj["eta_wx"]), op.interior(fj["eta_Z"])]
        cons += [op.interior(fj["rho_wx"] * wtr), op.interior(fj["rho_Z"] * wtr)]
    phi, mult, ortho, cons_res = _bordered_solve(op, op.interior(h_field.values),
                                                 np.stack(coef), np.stack(cons), tol)
    Phi = Field2D(g, op.embed(phi))
    c = np.vstack([np.append(mult[2 * j], 0.0) for j in range(params.k)]).T
    d = np.vstack([np.append(mult[2 * j + 1], 0.0) for j in range(params.k)]).T
    spec = WeightedNormSpec(sigma, params.theta0, params.alpha, params.trajectory)
    hn = weighted_norm(h_field, spec)
    pn = weighted_norm(Phi, spec)
    norms = {"phi": pn, "h": hn, "stability_constant": pn / hn if hn > 0 else 0.0}
    return ProjectedSolution(Phi, c, d, ortho, norms, cons_res)


def multiplier_decay_rate(z, c, floor=1e-14, z_range=None):
    """Slope of log|c(z)| fitted over z_range (default: middle half)."""
    z = np.asarray(z)
    a, b = z_range or (0.25 * z[-1], 0.75 * z[-1])
    m = (z >= a) & (z <= b) & (np.abs(c) > floor)
    if m.sum() < 5:
        return float("nan")
    slope, _ = np.polyfit(z[m], np.log(np.abs(c[m])), 1)
    return float(slope)
