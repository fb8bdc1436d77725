"""First and second eigenvalues of the single-exponent problem (mu = 0).

``lambda1`` minimises the Rayleigh quotient I/J by preconditioned,
projected gradient descent with Armijo backtracking and finishes with a
bordered Newton iteration on (grad I - lam grad J = 0, J = 1).  The
preconditioner is the exponent-2 operator of the same order plus the mass,
which makes the p = 2 case converge at a mesh-independent rate.

``lambda2_minimax`` evaluates the two-parameter odd path
theta -> (theta_1 u_+ + theta_2 u_-) / (...)^(1/p) over the circle,
descends on u -> max_theta I(f_u(theta)) and refines the maximising profile
to an eigenpair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import energies as E
from .errors import ConvergenceError, ValidationError
from .gagliardo import GagliardoOperator, LocalOperator, assemble, preconditioner
from .mesh import Mesh, NodalFunction, Potential, _vals, lp_norm_p

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass
class EigenReport:
    lambda_est: float
    eigenfunction: NodalFunction
    residual: float
    iterations: int
    sign_profile: str
    component_mins: list[float]
    trace: list[tuple[int, float, float]] = field(repr=False)
    converged: bool = True
    extras: dict = field(default_factory=dict, repr=False)

    def summary(self) -> dict:
        return {
            "lambda_est": self.lambda_est,
            "residual": self.residual,
            "iterations": self.iterations,
            "sign_profile": self.sign_profile,
            "component_mins": list(self.component_mins),
            "converged": self.converged,
            **{k: v for k, v in self.extras.items() if np.isscalar(v)},
        }


def sign_profile(u, rel_tol: float = 1e-8) -> str:
    u = _vals(u)
    m = np.max(np.abs(u))
    if np.all(u > -rel_tol * m):
        return "positive"
    if np.all(u < rel_tol * m):
        return "negative"
    return "sign_changing"


def _component_mins(mesh: Mesh, u) -> list[float]:
    u = _vals(u)
    return [float(np.min(np.abs(u[sl]))) for sl in mesh.component_slices()]


def _mu0(b: E.EnergyBundle) -> E.EnergyBundle:
    return b if b.params.mu == 0 else b.replace(mu=0.0)


def _normalize(b, u):
    J = E.functional_J(b, u)
    return u / J ** (1.0 / b.params.p), J


def _sign_normalize(u):
    return -u if np.sum(u) < 0 else u


def initial_guess(mesh: Mesh, seed: int, noise: float = 0.01) -> np.ndarray:
    """Positive bump: product of distances to the component endpoints, with seeded noise."""
    rng = np.random.default_rng(seed)
    u = np.empty(mesh.n)
    for sl, (a, b) in zip(mesh.component_slices(), mesh.domain.intervals):
        x = mesh.nodes[sl]
        u[sl] = (x - a) * (b - x) / (0.25 * (b - a) ** 2)
    return u * (1.0 + noise * rng.standard_normal(mesh.n))


def _admissible_start(b, seed):
    u = initial_guess(b.mesh, seed)
    if E.functional_J(b, u) > 0:
        return u
    # restrict to the positivity set of V, then to its largest run
    u = u * (b.V > 0)
    if np.any(u) and E.functional_J(b, u) > 0:
        return u
    raise ConvergenceError("positivity set unresolved by mesh")


def _armijo_step(b, u, R, g, P, tau, c=1e-4):
    # unit step is one inverse-iteration sweep at p = 2
    d = -linalg.cho_solve(P, g) / b.params.p
    slope = float(g @ d)
    if slope >= 0:
        d = -g
        slope = -float(g @ g)
    step = tau
    while step > 1e-14:
        un = u + step * d
        Jn = E.functional_J(b, un)
        if Jn > 0:
            Rn = E.functional_I(b, un) / Jn
            if Rn <= R + c * step * slope:
                return un / Jn ** (1.0 / b.params.p), Rn, step
        step *= 0.5
    return None, R, 0.0


def _bordered_newton_step(b, u, lam):
    gI = E.grad_I(b, u)
    gJ = E.grad_J(b, u)
    H = E.hess_I(b, u) - lam * E.hess_J(b, u)
    n = u.size
    M = np.empty((n + 1, n + 1))
    M[:n, :n] = H
    M[:n, n] = -gJ
    M[n, :n] = gJ
    M[n, n] = 0.0
    rhs = -np.append(gI - lam * gJ, E.functional_J(b, u) - 1.0)
    try:
        sol = linalg.solve(M, rhs)
    except (linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.isfinite(sol)):
        return None
    return u + sol[:n]


def _residual(b, u, lam):
    return E.eigen_residual(b, u, lam)


def lambda1(b: E.EnergyBundle, tol: float = 1e-8, max_iter: int = 2000, seed: int = 0,
            init=None) -> EigenReport:
    """Constrained minimiser of I/J on {J = 1}.

    The quotient trace is nonincreasing: descent steps satisfy the Armijo
    condition and Newton steps are only kept if they do not raise the
    quotient by more than a few ulps.
    """
    b = _mu0(b)
    p = b.params.p
    u = _admissible_start(b, seed) if init is None else np.array(_vals(init), dtype=float)
    u, _ = _normalize(b, u)
    P = preconditioner(b.op_p)
    R = E.functional_I(b, u)
    res = _residual(b, u, R)
    trace = [(0, R, res)]
    tau = 1.0
    it = 0
    switch = max(1e-3, tol)
    newton_ok = True
    while it < max_iter:
        if res <= tol and len(trace) > 1 and abs(trace[-2][1] - R) <= tol * tol * abs(R):
            break
        if res <= tol * 1e-2:
            break
        it += 1
        stepped = False
        if newton_ok and res < switch:
            un = _bordered_newton_step(b, u, R)
            if un is not None and E.functional_J(b, un) > 0:
                un, _ = _normalize(b, un)
                Rn = E.functional_I(b, un)
                rn = _residual(b, un, Rn)
                if Rn <= R + 64 * _EPS * abs(R) and rn < res:
                    u, R, res = un, Rn, rn
                    stepped = True
            if not stepped:
                newton_ok = res > 1e-11
        if not stepped:
            g = (E.grad_I(b, u) - R * E.grad_J(b, u))
            un, Rn, step = _armijo_step(b, u, R, g, P, tau)
            if un is None:
                trace.append((it, R, res))
                break
            tau = min(2.0 * step, 1.0)
            u = un
            R = E.functional_I(b, u)
            res = _residual(b, u, R)
            newton_ok = True
        trace.append((it, R, res))
    u = _sign_normalize(u)
    converged = res <= tol
    rep = EigenReport(
        lambda_est=float(R),
        eigenfunction=NodalFunction(u, b.mesh),
        residual=float(res),
        iterations=it,
        sign_profile=sign_profile(u),
        component_mins=_component_mins(b.mesh, u),
        trace=trace,
        converged=converged,
        extras={"subcritical": b.params.subcritical},
    )
    if not converged:
        logger.warning("lambda1 stopped at residual %.3e > tol %.1e", res, tol)
    return rep


# -- linear oracle ----------------------------------------------------------

def linear_oracle(mesh: Mesh, s: float, V: Potential, op=None) -> list[tuple[float, NodalFunction]]:
    """Eigenpairs of (A_2 + M) u = lam M_V u by a dense symmetric solve.

    With V changing sign, the pencil is solved as M_V u = nu (A_2 + M) u and
    only nu > 0 (directions with positive weighted mass) are kept, lam = 1/nu.
    """
    if mesh.n < 3:
        raise ValidationError("linear oracle needs at least 3 nodes")
    if op is None:
        op = LocalOperator(mesh, 2.0) if s == 1.0 else assemble(mesh, s, 2.0)
    A = op.quadratic_matrix()
    A[np.diag_indices_from(A)] += mesh.h
    MV = mesh.h * np.asarray(V.values)
    if np.all(MV > 0):
        lam, vec = linalg.eigh(A, np.diag(MV))
    else:
        nu, vec = linalg.eigh(np.diag(MV), A)
        keep = nu > 0
        lam = 1.0 / nu[keep]
        vec = vec[:, keep]
        order = np.argsort(lam)
        lam, vec = lam[order], vec[:, order]
    out = []
    for k in range(lam.size):
        v = vec[:, k]
        v = v / np.sqrt(np.sum(MV * v * v))
        out.append((float(lam[k]), NodalFunction(_sign_normalize(v), mesh)))
    return out


# -- second eigenvalue ------------------------------------------------------

def _split(u):
    return np.maximum(u, 0.0), np.maximum(-u, 0.0)


def path_quotients(b: E.EnergyBundle, u, thetas) -> np.ndarray:
    """I(f_u(theta)) for angles theta, f_u(theta) proportional to cos(t) u_+ + sin(t) u_-.

    Returns +inf where the weighted mass of the path point is not positive.
    """
    b = _mu0(b)
    u = _vals(u)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    c, s_ = np.cos(thetas), np.sin(thetas)
    up, um = _split(u)
    p = b.params.p
    op = b.op_p
    Pm, Nm = up > 0, um > 0
    h = b.h
    Jp = h * np.sum(b.V * up ** p)
    Jm = h * np.sum(b.V * um ** p)
    Lp = h * np.sum(up ** p)
    Lm = h * np.sum(um ** p)
    W = op.pair_weights if hasattr(op, "pair_weights") else None
    if W is not None:
        # energy of cos*u_+ + sin*u_-: every pair not in P x N scales like |cos|^p or |sin|^p
        Dp = np.abs(up[:, None] - up[None, :]) ** p
        Dm = np.abs(um[:, None] - um[None, :]) ** p
        cross_mask = Pm[:, None] & Nm[None, :]
        Dp_nc = np.where(cross_mask | cross_mask.T, 0.0, Dp)
        Dm_nc = np.where(cross_mask | cross_mask.T, 0.0, Dm)
        Sp = np.sum(W * Dp_nc) + np.sum(op.tail_weights * up ** p)
        Sm = np.sum(W * Dm_nc) + np.sum(op.tail_weights * um ** p)
        Wx = W[np.ix_(Pm, Nm)]
        a = up[Pm]
        bb = um[Nm]
        cross = np.array([
            2.0 * np.sum(Wx * np.abs(ci * a[:, None] + si * bb[None, :]) ** p)
            for ci, si in zip(c, s_)
        ])
        semi = op.constant * (np.abs(c) ** p * Sp + np.abs(s_) ** p * Sm + cross)
    else:
        semi = np.array([op.pow(ci * up - si * um) for ci, si in zip(c, s_)])
    num = semi + np.abs(c) ** p * Lp + np.abs(s_) ** p * Lm
    den = np.abs(c) ** p * Jp + np.abs(s_) ** p * Jm
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / den, np.inf)
    return out


def _path_point(u, theta):
    up, um = _split(u)
    return np.cos(theta) * up - np.sin(theta) * um


def path_max(b: E.EnergyBundle, u, n_theta: int = 128) -> tuple[float, float]:
    """max over the circle of I(f_u(theta)) and its maximiser.

    Grid of ``n_theta`` angles (ties go to the smallest index), then a
    golden-section search on the neighbouring grid cells.
    """
    grid = 2.0 * np.pi * np.arange(n_theta) / n_theta
    vals = path_quotients(b, u, grid)
    k = int(np.argmax(vals))
    if not np.isfinite(vals[k]):
        return np.inf, grid[k]
    lo, hi = grid[k] - 2 * np.pi / n_theta, grid[k] + 2 * np.pi / n_theta
    g = (np.sqrt(5.0) - 1.0) / 2.0
    f = lambda t: float(path_quotients(b, u, [t])[0])  # noqa: E731
    x1, x2 = hi - g * (hi - lo), lo + g * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(40):
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - g * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + g * (hi - lo)
            f2 = f(x2)
    best_t, best = (x1, f1) if f1 >= f2 else (x2, f2)
    if vals[k] >= best:
        return float(vals[k]), float(grid[k])
    return float(best), float(best_t)


def _minimax_descent(b, u, P, max_outer, rtol):
    F, th = path_max(b, u)
    history = [F]
    tau = 1.0
    p = b.params.p
    for _ in range(max_outer):
        w = _path_point(u, th)
        gw = E.grad_rayleigh_quotient(b, w)
        chain = np.where(u > 0, np.cos(th), np.where(u < 0, np.sin(th), 0.0))
        G = gw * chain
        d = -linalg.cho_solve(P, G)
        slope = float(G @ d)
        if slope >= 0:
            break
        step = tau
        accepted = False
        while step > 1e-10:
            un = u + step * d
            Fn, thn = path_max(b, un)
            if Fn <= F + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        un, _ = _normalize(b, un) if E.functional_J(b, un) > 0 else (un, None)
        dec = (F - Fn) / abs(F)
        u, F, th = un, Fn, thn
        history.append(F)
        tau = min(2.0 * step, 4.0)
        if dec < rtol:
            break
    return u, F, th, history


def lambda2_minimax(b: E.EnergyBundle, tol: float = 1e-8, seed: int = 0, lambda1_report=None,
                    max_outer: int = 100, max_newton: int = 60) -> EigenReport:
    """Second eigenvalue via the odd circle path, refined by Newton.

    Raises:
        ConvergenceError: if the refined profile has constant sign.
    """
    b = _mu0(b)
    if lambda1_report is None:
        lambda1_report = lambda1(b, tol=tol, seed=seed)
    lam1 = lambda1_report.lambda_est
    if not b.params.V.nonnegative:
        logger.warning("lambda2_minimax with sign-changing V is experimental")
    if b.params.p == 2.0:
        pairs = linear_oracle(b.mesh, b.params.s, b.params.V)
        if len(pairs) < 2:
            raise ConvergenceError("no sign-changing candidate found")
        u = np.array(pairs[1][1].values)
    else:
        x = b.mesh.nodes
        u = np.array(lambda1_report.eigenfunction.values) * np.where(x < np.median(x), -1.0, 1.0)
    rng = np.random.default_rng(seed)
    u = u * (1.0 + 1e-3 * rng.standard_normal(u.size)) if seed else u
    u, _ = _normalize(b, u)
    P = preconditioner(b.op_p)
    u, F, th, history = _minimax_descent(b, u, P, max_outer, rtol=1e-10)
    w = _path_point(u, th)
    w, _ = _normalize(b, w)
    lam = E.functional_I(b, w)
    res = _residual(b, w, lam)
    trace = [(0, lam, res)]
    it = 0
    for it in range(1, max_newton + 1):
        if res <= tol * 1e-2:
            break
        wn = _bordered_newton_step(b, w, lam)
        if wn is None or not E.functional_J(b, wn) > 0:
            break
        wn, _ = _normalize(b, wn)
        lamn = E.functional_I(b, wn)
        rn = _residual(b, wn, lamn)
        if not rn < 10 * res and res < 1e-3:
            break
        w, lam, res = wn, lamn, rn
        trace.append((it, lam, res))
    w = _sign_normalize(w)
    prof = sign_profile(w)
    if prof != "sign_changing":
        raise ConvergenceError("no sign-changing candidate found")
    return EigenReport(
        lambda_est=float(lam),
        eigenfunction=NodalFunction(w, b.mesh),
        residual=float(res),
        iterations=len(history) - 1 + it,
        sign_profile=prof,
        component_mins=_component_mins(b.mesh, w),
        trace=trace,
        converged=res <= tol,
        extras={
            "minimax_value": float(F),
            "minimax_history": history,
            "lambda1": float(lam1),
        },
    )


# -- ground-state diagnostics -----------------------------------------------

@dataclass
class GroundStateProperties:
    constant_sign: bool
    component_mins: list[float]
    strictly_positive: bool
    simplicity_distance: float | None
    simple: bool | None
    symmetry_defect: float | None
    radially_monotone: bool | None
    symmetric: bool | None

    @property
    def passed(self) -> bool:
        checks = [self.constant_sign, self.strictly_positive, self.simple, self.symmetric,
                  self.radially_monotone]
        return all(c for c in checks if c is not None)


def _lp_dist(b, u, v):
    return lp_norm_p(np.asarray(u) - np.asarray(v), b.params.p, h=b.h) ** (1.0 / b.params.p)


def check_ground_state_properties(rep: EigenReport, b: E.EnergyBundle, seeds=range(1, 11),
                                  tol: float = 1e-3, solver_tol: float = 1e-8) -> GroundStateProperties:
    """Sign, positivity per component, simplicity across seeds, mirror symmetry."""
    b = _mu0(b)
    u = _sign_normalize(np.array(rep.eigenfunction.values))
    mins = _component_mins(b.mesh, u)
    const = sign_profile(u) == "positive"
    strict = const and all(m > 0 for m in mins) and bool(np.all(u > 0))

    dist = None
    simple = None
    if seeds:
        dists = []
        for sd in seeds:
            other = lambda1(b, tol=solver_tol, seed=int(sd))
            v = _sign_normalize(np.array(other.eigenfunction.values))
            dists.append(_lp_dist(b, u, v))
        dist = float(max(dists))
        simple = dist <= tol

    defect = mono = symmetric = None
    mirror = b.mesh.mirror_index()
    V = b.V
    if mirror is not None and b.mesh.domain.is_symmetric() and np.allclose(V, V[mirror], rtol=0, atol=1e-14):
        defect = float(_lp_dist(b, u, u[mirror]))
        symmetric = defect <= tol
        if b.mesh.domain.component_count == 1:
            x = b.mesh.nodes
            au = np.abs(u)
            right = au[x >= 0]
            left = au[x <= 0][::-1]
            slack = 1e-10 * au.max()
            mono = bool(np.all(np.diff(right) <= slack) and np.all(np.diff(left) <= slack))
    return GroundStateProperties(const, mins, strict, dist, simple, defect, mono, symmetric)


def isolation_probe(b: E.EnergyBundle, lam1: float, lam2: float, n_lambda: int = 5,
                    n_starts: int = 3, seed: int = 0, tol: float = 1e-8, iters: int = 30) -> dict:
    """Try to solve the eigen equation at fixed lam strictly between lam1 and lam2.

    Gauss-Newton on the bordered system from random positive and
    sign-changing starts; reports how many runs reached ``tol``.
    """
    b = _mu0(b)
    delta = 0.05 * (lam2 - lam1)
    grid = np.linspace(lam1 + delta, lam2 - delta, n_lambda)
    rng = np.random.default_rng(seed)
    n = b.mesh.n
    rows = []
    for lam in grid:
        for _ in range(n_starts):
            u = initial_guess(b.mesh, int(rng.integers(2**31))) * (1 + 0.5 * rng.standard_normal(n))
            if E.functional_J(b, u) <= 0:
                continue
            u, _ = _normalize(b, u)
            best = _residual(b, u, lam)
            for _ in range(iters):
                gI, gJ = E.grad_I(b, u), E.grad_J(b, u)
                A = np.vstack([E.hess_I(b, u) - lam * E.hess_J(b, u), gJ[None, :]])
                rhs = -np.append(gI - lam * gJ, E.functional_J(b, u) - 1.0)
                du = linalg.lstsq(A, rhs)[0]
                un = u + du
                if not E.functional_J(b, un) > 0:
                    break
                u, _ = _normalize(b, un)
                best = min(best, _residual(b, u, lam))
            rows.append({"lambda": float(lam), "best_residual": float(best)})
    converged = sum(r["best_residual"] <= tol for r in rows)
    return {"runs": rows, "converged": int(converged), "total": len(rows)}
