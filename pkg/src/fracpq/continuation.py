"""Parameter sweeps: mu -> 0+, s -> 1-, and the seminorm limit as s -> 1.

Grids that approach s = 1 refine the mesh with the order through a coupling
rule mapping s to nodes per unit length; the default is h(s) = (1 - s)^2.
Grid points are independent and may run on a thread pool; results are
collected in grid order so output never depends on scheduling.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import energies as E
from .eigsolve import EigenReport, lambda1, linear_oracle
from .errors import FracPQError, ValidationError
from .gagliardo import LocalOperator, assemble
from .mesh import Domain1D, Mesh, NodalFunction, Potential, _vals, build_mesh
from .nehari import solve_m_lambda

logger = logging.getLogger(__name__)


@dataclass
class SweepResult:
    parameter: str
    grid: list[float]
    rows: list[dict]
    fitted: dict = field(default_factory=dict)
    mesh_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        d = np.diff(g)
        if g.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ValidationError(f"{self.parameter} grid must be strictly monotone")

    def column(self, name: str) -> np.ndarray:
        return np.array([r.get(name, np.nan) for r in self.rows], dtype=float)

    def columns(self) -> list[str]:
        names: list[str] = []
        for r in self.rows:
            names += [k for k in r if k not in names]
        return names


def worker_count(requested: int | None = None) -> int:
    """Pool size: the request, capped by FRACPQ_THREADS when set."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("FRACPQ_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValidationError(f"FRACPQ_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def coupled_resolution(s: float, rule: str = "quadratic", n_min: int = 4) -> int:
    """Nodes per unit length for order s: round(1/(1-s)^2) under the default rule."""
    if rule == "quadratic":
        if s >= 1.0:
            raise ValidationError("coupled mesh undefined at s = 1")
        return max(n_min, int(round(1.0 / (1.0 - s) ** 2)))
    if rule.startswith("fixed:"):
        return int(rule.split(":", 1)[1])
    raise ValidationError(f"unknown coupling rule {rule!r}")


def _norms(b, u) -> dict:
    p = b.params.p
    return {
        "seminorm": b.op_p.pow(u) ** (1.0 / p),
        "lp_norm": (b.h * float(np.sum(np.abs(u) ** p))) ** (1.0 / p),
        "lp_norm_V": abs(E.functional_J(b, u)) ** (1.0 / p),
    }


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# -- mu -> 0+ -----------------------------------------------------------------

def mu_quotient_decay(b: E.EnergyBundle, t_values: Sequence[float], u1: EigenReport | None = None,
                      tol: float = 1e-10) -> SweepResult:
    """Evaluate (I(t u1) + (mu/q) Q(t u1)) / J(t u1) along the ray of u1.

    The excess over lam1 equals (mu/q) Q(u1) t^(-(p-q)) when J(u1) = 1, so
    it decays with exponent -(p - q) and never reaches zero.
    """
    if not b.params.mu > 0:
        raise ValidationError("mu_quotient_decay requires mu > 0")
    t = np.asarray(t_values, dtype=float)
    if np.any(t < 1) or np.any(np.diff(t) <= 0):
        raise ValidationError("t_values must be increasing and >= 1")
    if u1 is None:
        u1 = lambda1(b.replace(mu=0.0), tol=tol)
    u = np.asarray(u1.eigenfunction.values)
    pr = b.params
    lam1 = E.functional_I(b, u) / E.functional_J(b, u)
    rows = []
    for ti in t:
        w = ti * u
        quot = (E.functional_I(b, w) + pr.mu / pr.q * E.q_energy(b, w)) / E.functional_J(b, w)
        rows.append({"t": float(ti), "quotient": float(quot), "excess": float(quot - lam1),
                     "residual": float(u1.residual)})
    res = SweepResult("t", list(map(float, t)), rows)
    exc = res.column("excess")
    res.fitted = {
        "lambda1": float(lam1),
        "decay_exponent": _loglog_slope(t, exc) if np.all(exc > 0) else float("nan"),
        "expected_exponent": -(pr.p - pr.q),
        "predicted_coefficient": float(pr.mu / pr.q * E.q_energy(b, u) / E.functional_J(b, u)),
    }
    return res


def mu_sweep(b: E.EnergyBundle, lam: float, mu_grid: Sequence[float], tol: float = 1e-8,
             seed: int = 0, init=None, workers: int | None = 1) -> SweepResult:
    """Nehari level and solution norms at fixed lam for each mu on a decreasing grid."""
    mus = [float(m) for m in mu_grid]
    if not all(m > 0 for m in mus) or any(b_ <= a for a, b_ in zip(mus[1:], mus[:-1])):
        raise ValidationError("mu_grid must be positive and strictly decreasing")

    def point(mu):
        bm = b.replace(mu=mu)
        row = {"mu": mu}
        try:
            rep = solve_m_lambda(bm, lam, tol=tol, seed=seed, init=init)
        except FracPQError as exc:
            row.update(m_lambda=float("nan"), flagged=1, error=str(exc))
            return row
        u = np.asarray(rep.minimizer.values)
        row.update(m_lambda=rep.m_lambda, **_norms(bm, u),
                   nehari_residual=rep.nehari_residual, eigen_residual=rep.eigen_residual,
                   flagged=int(not rep.converged))
        return row

    rows = _map(point, mus, worker_count(workers))
    res = SweepResult("mu", mus, rows, mesh_spec={"h": b.h, "n": b.mesh.n})
    m = res.column("m_lambda")
    res.fitted = {
        "m_lambda_increasing_in_mu": bool(np.all(np.diff(m[::-1]) > 0)),
        "m_lambda_at_smallest_mu": float(m[-1]),
    }
    return res


# -- s -> 1- ------------------------------------------------------------------

def local_reference_lambda1(mesh: Mesh, p: float, V: Potential, tol: float = 1e-8, seed: int = 0,
                            max_iter: int = 5000) -> EigenReport:
    """First eigenpair of the s = 1 problem on first differences."""
    return lambda1(E.make_bundle(mesh, 1.0, p, V), tol=tol, seed=seed, max_iter=max_iter)


def bump_profile(x, center: float = 0.0, width: float = 0.5):
    """(1 - r^2)^4 for r = |x - center|/width < 1, else 0.  C^3 with compact support."""
    r = (np.asarray(x, dtype=float) - center) / width
    return np.where(np.abs(r) < 1.0, (1.0 - r * r) ** 4, 0.0)


def bbm_check(p: float, s_grid: Sequence[float] = (0.6, 0.7, 0.8, 0.9, 0.95),
              profile: Callable[[np.ndarray], np.ndarray] = bump_profile,
              domain: Domain1D | None = None, coupling: str = "quadratic", scale: float = 1.0,
              workers: int | None = 1) -> SweepResult:
    """Relative gap between the order-s energy and the local energy of a fixed profile.

    The profile is resampled on each coupled mesh; the reference energy is
    the first-difference energy on the same mesh.
    """
    grid = [float(s) for s in s_grid]
    if any(b_ <= a for a, b_ in zip(grid, grid[1:])):
        raise ValidationError("s_grid must be strictly increasing")
    domain = domain or Domain1D(((-1.0, 1.0),))

    def point(s):
        n_unit = coupled_resolution(s, coupling)
        mesh = build_mesh(domain, n_unit)
        u = scale * profile(mesh.nodes)
        frac = assemble(mesh, s, p).pow(u)
        loc = LocalOperator(mesh, p).pow(u)
        return {"s": s, "n_per_unit": n_unit, "h": mesh.h, "seminorm_pow": frac,
                "local_pow": loc, "rel_error": abs(frac - loc) / loc}

    rows = _map(point, grid, worker_count(workers))
    res = SweepResult("s", grid, rows, mesh_spec={"coupling": coupling})
    err = res.column("rel_error")
    res.fitted = {
        "strictly_decreasing": bool(np.all(np.diff(err) < 0)),
        "final_rel_error": float(err[-1]),
    }
    return res


def _padded(mesh: Mesh, u):
    """Nodes and values with the zero exterior values at every interval endpoint."""
    xs, vs = [], []
    u = _vals(u)
    for sl, (a, b) in zip(mesh.component_slices(), mesh.domain.intervals):
        xs += [a, *mesh.nodes[sl], b]
        vs += [0.0, *u[sl], 0.0]
    return np.array(xs), np.array(vs)


def profile_distance(u: NodalFunction, v: NodalFunction, p: float) -> float:
    """L^p distance after interpolating both onto the finer of the two meshes."""
    fine = u.mesh if u.mesh.h <= v.mesh.h else v.mesh
    x = fine.nodes
    a = np.interp(x, *_padded(u.mesh, u.values))
    b = np.interp(x, *_padded(v.mesh, v.values))
    return (fine.h * float(np.sum(np.abs(a - b) ** p))) ** (1.0 / p)


def s_stability_sweep(domain: Domain1D, p: float, potential: Callable[[Mesh], Potential],
                      s_grid: Sequence[float] = (0.6, 0.7, 0.8, 0.9, 0.95), coupling: str = "quadratic",
                      tol: float = 1e-9, seed: int = 0, local_n_per_unit: int | None = None,
                      oracle_check: bool = True, workers: int | None = 1) -> SweepResult:
    """lambda_1 of the order-s problem along s -> 1 against the local reference.

    Eigenfunctions of consecutive grid points are compared in L^p after
    interpolation; at p = 2 each point is cross-checked against the dense
    linear solve.
    """
    grid = [float(s) for s in s_grid]
    if any(b_ <= a for a, b_ in zip(grid, grid[1:])):
        raise ValidationError("s_grid must be strictly increasing")

    def point(s):
        n_unit = coupled_resolution(s, coupling)
        mesh = build_mesh(domain, n_unit)
        V = potential(mesh)
        b = E.make_bundle(mesh, s, p, V)
        rep = lambda1(b, tol=tol, seed=seed)
        row = {"s": s, "n_per_unit": n_unit, "lambda1": rep.lambda_est, "residual": rep.residual,
               **_norms(b, np.asarray(rep.eigenfunction.values)), "flagged": int(not rep.converged)}
        if oracle_check and p == 2.0:
            lam_o = linear_oracle(mesh, s, V, op=b.op_p)[0][0]
            row["oracle_rel_error"] = abs(rep.lambda_est - lam_o) / lam_o
        return row, rep

    out = _map(point, grid, worker_count(workers))
    rows = [r for r, _ in out]
    reps = [rep for _, rep in out]
    for k in range(1, len(rows)):
        rows[k]["dist_to_previous"] = profile_distance(reps[k].eigenfunction, reps[k - 1].eigenfunction, p)
    n_loc = local_n_per_unit or max(r["n_per_unit"] for r in rows)
    mesh_loc = build_mesh(domain, n_loc)
    loc = local_reference_lambda1(mesh_loc, p, potential(mesh_loc), tol=tol, seed=seed)
    for r in rows:
        r["rel_gap_local"] = abs(r["lambda1"] - loc.lambda_est) / loc.lambda_est
    res = SweepResult("s", grid, rows, mesh_spec={"coupling": coupling, "local_n_per_unit": n_loc})
    lam = res.column("lambda1")
    dist = res.column("dist_to_previous")[1:]
    res.fitted = {
        "lambda1_local": loc.lambda_est,
        "final_rel_gap": float(rows[-1]["rel_gap_local"]),
        "max_jump_over_local": float(np.max(np.abs(np.diff(lam))) / loc.lambda_est) if len(lam) > 1 else 0.0,
        "distances_tighten": bool(len(dist) < 2 or dist[-1] <= dist[0]),
    }
    return res
