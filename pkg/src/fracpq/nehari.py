"""Fibering maps, the Nehari level m_lambda and nonexistence certificates (mu > 0).

Along a ray t -> t w the free energy is
    F(t w) = t^q B / q - t^p A / p,   A = lam J(w) - I(w),  B = mu Q(w),
so the ray meets the Nehari set exactly once, at t0 = (B/A)^(1/(p-q)),
when A > 0, and never otherwise.  Plugging t0 in gives the 0-homogeneous
reduced level

    Psi(w) = (1/q - 1/p) B^(p/(p-q)) A^(-q/(p-q)),

whose infimum over {A > 0} is m_lambda.  ``solve_m_lambda`` descends on
log Psi and finishes with Newton on grad F = 0 followed by ray projection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import energies as E
from .eigsolve import _component_mins, initial_guess, sign_profile
from .errors import ConvergenceError, ValidationError
from .gagliardo import preconditioner
from .mesh import NodalFunction, _vals

logger = logging.getLogger(__name__)


class NehariEmptyError(ConvergenceError):
    """No ray through the search space reaches the Nehari manifold."""


@dataclass(frozen=True)
class FiberingData:
    A: float
    B: float
    p: float
    q: float
    t0: float | None

    def xi(self, t):
        """Radial derivative t * d/dt F(t w) = t^q B - t^p A."""
        t = np.asarray(t, dtype=float)
        return t ** self.q * self.B - t ** self.p * self.A

    def level(self) -> float | None:
        """F(t0 w), or None if the ray misses the manifold."""
        if self.t0 is None:
            return None
        return (1.0 / self.q - 1.0 / self.p) * self.t0 ** self.q * self.B


def fibering_from_values(A: float, B: float, p: float, q: float) -> FiberingData:
    t0 = (B / A) ** (1.0 / (p - q)) if A > 0 and B > 0 else None
    return FiberingData(float(A), float(B), float(p), float(q), t0)


def _require_mu(b):
    if not b.params.mu > 0:
        raise ValidationError("the Nehari machinery requires mu > 0")


def fibering(b: E.EnergyBundle, w, lam: float | None = None) -> FiberingData:
    _require_mu(b)
    w = _vals(w)
    if not np.any(w):
        raise ValidationError("fibering map undefined for w = 0")
    lam = b.params.lam if lam is None else lam
    pr = b.params
    A = lam * E.functional_J(b, w) - E.functional_I(b, w)
    B = pr.mu * E.q_energy(b, w)
    return fibering_from_values(A, B, pr.p, pr.q)


def nehari_pairing(b: E.EnergyBundle, u, lam: float) -> float:
    """<F'(u), u> = I(u) + mu Q(u) - lam J(u)."""
    return E.functional_I(b, u) + b.params.mu * E.q_energy(b, u) - lam * E.functional_J(b, u)


def nehari_residual(b: E.EnergyBundle, u, lam: float) -> float:
    """|<F'(u), u>| relative to the positive part I(u) + mu Q(u)."""
    scale = E.functional_I(b, u) + b.params.mu * E.q_energy(b, u)
    return abs(nehari_pairing(b, u, lam)) / scale


def energy_identity_defect(b: E.EnergyBundle, u, lam: float) -> float:
    pr = b.params
    F = E.lagrangian_J_functional(b, u, lam)
    target = pr.mu * (1.0 / pr.q - 1.0 / pr.p) * E.q_energy(b, u)
    return abs(F - target) / max(1.0, abs(F))


def project_to_nehari(b: E.EnergyBundle, w, lam: float) -> np.ndarray | None:
    fd = fibering(b, w, lam)
    return None if fd.t0 is None else fd.t0 * _vals(w)


# -- certificates -----------------------------------------------------------

@dataclass
class CertificateReport:
    lam: float
    trials: int
    passed_count: int
    failed_count: int
    skipped: int
    max_margin: float
    probe_margins: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failed_count == 0 and all(m <= 0 for m in self.probe_margins)

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "trials": self.trials,
            "passed_count": self.passed_count,
            "failed_count": self.failed_count,
            "skipped": self.skipped,
            "max_margin": self.max_margin,
            "probe_margins": list(self.probe_margins),
            "pass": self.passed,
        }


def _random_trial(mesh, rng):
    """Smooth random sine series on each component, or plain nodal noise."""
    if rng.random() < 0.5:
        return rng.standard_normal(mesh.n)
    u = np.zeros(mesh.n)
    for sl, (a, b) in zip(mesh.component_slices(), mesh.domain.intervals):
        x = (mesh.nodes[sl] - a) / (b - a)
        k = np.arange(1, 7)
        c = rng.standard_normal(k.size) / k ** 2
        u[sl] = np.sin(np.pi * np.outer(x, k)) @ c
    return u


def nonexistence_certificate(b: E.EnergyBundle, lam: float, trials: int = 1000, seed: int = 0,
                             probes=()) -> CertificateReport:
    """Check lam J(w) - I(w) <= 0 on random w with J(w) > 0, plus optional probes.

    A full pass means no sampled ray reaches the Nehari manifold.  Margins
    are reported relative to I(w).
    """
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    ok = bad = skipped = 0
    worst = -np.inf
    for _ in range(trials):
        w = _random_trial(b.mesh, rng)
        J = E.functional_J(b, w)
        if not J > 0:
            skipped += 1
            continue
        I = E.functional_I(b, w)
        margin = (lam * J - I) / I
        worst = max(worst, margin)
        if margin <= 0:
            ok += 1
        else:
            bad += 1
    probe_margins = []
    for w in probes:
        w = _vals(w)
        I = E.functional_I(b, w)
        probe_margins.append(float((lam * E.functional_J(b, w) - I) / I))
    return CertificateReport(float(lam), int(trials), ok, bad, skipped, float(worst), probe_margins)


# -- Nehari minimisation ----------------------------------------------------

def _log_psi(b, w, lam):
    """log of the reduced level, with its gradient; +inf when A <= 0."""
    pr = b.params
    p, q, mu = pr.p, pr.q, pr.mu
    J, I, Q = E.functional_J(b, w), E.functional_I(b, w), E.q_energy(b, w)
    A = lam * J - I
    if not A > 0:
        return np.inf, None
    B = mu * Q
    val = np.log(1.0 / q - 1.0 / p) + (p * np.log(B) - q * np.log(A)) / (p - q)
    gA = lam * E.grad_J(b, w) - E.grad_I(b, w)
    gB = mu * E.grad_q_energy(b, w)
    grad = (p * gB / B - q * gA / A) / (p - q)
    return val, grad


@dataclass
class NehariReport:
    m_lambda: float
    minimizer: NodalFunction
    nehari_residual: float
    energy_identity_defect: float
    eigen_residual: float
    sign_profile: str
    lam: float
    iterations: int
    trace: list[tuple[int, float, float]] = field(repr=False)
    component_mins: list[float] = field(default_factory=list)
    converged: bool = True

    def summary(self) -> dict:
        return {
            "m_lambda": self.m_lambda,
            "lambda": self.lam,
            "nehari_residual": self.nehari_residual,
            "energy_identity_defect": self.energy_identity_defect,
            "eigen_residual": self.eigen_residual,
            "sign_profile": self.sign_profile,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _descend(b, w, lam, P, max_iter, gtol):
    """Preconditioned Armijo descent on log Psi; w is kept at I(w) = 1."""
    p = b.params.p
    w = w / E.functional_I(b, w) ** (1.0 / p)
    f, g = _log_psi(b, w, lam)
    tau = 1.0
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        d = -linalg.cho_solve(P, g)
        slope = float(g @ d)
        gnorm = np.sqrt(-slope)
        trace.append((it, f, gnorm))
        if gnorm <= gtol:
            break
        step = tau
        while step > 1e-14:
            wn = w + step * d
            fn, gn = _log_psi(b, wn, lam)
            if fn <= f + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break
        scale = E.functional_I(b, wn) ** (1.0 / p)
        w, f, g = wn / scale, fn, gn * scale
        tau = min(4.0 * step, 1e3)
    return w, f, it, trace


def _newton_polish(b, u, lam, tol, max_iter=40):
    """Newton on grad F(u) = 0, re-projecting every iterate onto its ray."""
    res = E.eigen_residual(b, u, lam)
    for _ in range(max_iter):
        if res <= tol * 1e-3:
            break
        g = E.grad_lagrangian(b, u, lam)
        H = E.hess_lagrangian(b, u, lam)
        try:
            du = linalg.solve(H, -g, assume_a="sym")
        except (linalg.LinAlgError, ValueError):
            break
        un = project_to_nehari(b, u + du, lam)
        if un is None:
            break
        rn = E.eigen_residual(b, un, lam)
        if not rn < res:
            break
        u, res = un, rn
    return u, res


def _start_rays(b, lam, seed, init):
    if init is not None:
        yield _vals(init)
    yield initial_guess(b.mesh, seed)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        yield _random_trial(b.mesh, rng)


def solve_m_lambda(b: E.EnergyBundle, lam: float, tol: float = 1e-8, seed: int = 0, init=None,
                   max_iter: int = 500) -> NehariReport:
    """Minimise the free energy over the Nehari set at (lam, mu).

    ``init`` is typically the mu = 0 ground state u_1.  Descent works on the
    reduced level Psi; the result is polished by Newton and reported as a
    point on the manifold.

    Raises:
        NehariEmptyError: if no start ray satisfies lam J(w) > I(w).
    """
    _require_mu(b)
    b = b.replace(lam=lam)
    w = None
    for cand in _start_rays(b, lam, seed, init):
        if fibering(b, cand, lam).t0 is not None:
            w = np.array(cand, dtype=float)
            break
    if w is None:
        raise NehariEmptyError("Nehari manifold empty: no admissible ray below lambda_1")
    if init is not None and seed:
        rng = np.random.default_rng(seed)
        w = w * (1.0 + 0.01 * rng.standard_normal(w.size))
    P = preconditioner(b.op_p)
    w, f, it, trace = _descend(b, w, lam, P, max_iter, gtol=1e-6)
    u = project_to_nehari(b, w, lam)
    u, res = _newton_polish(b, u, lam, tol)
    if np.sum(u) < 0:
        u = -u
    au = np.abs(u)
    lp, lau = _log_psi(b, u, lam)[0], _log_psi(b, au, lam)[0]
    if lau <= lp and not np.array_equal(au, u):
        u = project_to_nehari(b, au, lam)
        u, res = _newton_polish(b, u, lam, tol)
    m = E.lagrangian_J_functional(b, u, lam)
    nres = nehari_residual(b, u, lam)
    rep = NehariReport(
        m_lambda=float(m),
        minimizer=NodalFunction(u, b.mesh),
        nehari_residual=float(nres),
        energy_identity_defect=float(energy_identity_defect(b, u, lam)),
        eigen_residual=float(res),
        sign_profile=_positive_profile(u),
        lam=float(lam),
        iterations=it,
        trace=trace,
        component_mins=_component_mins(b.mesh, u),
        converged=bool(nres <= tol and res <= 10 * tol and m > 0),
    )
    if not rep.converged:
        logger.warning("Nehari solve at lam=%g stopped: nehari %.2e, eigen %.2e", lam, nres, res)
    return rep


def _positive_profile(u, rel: float = 1e-8) -> str:
    m = np.max(np.abs(u))
    if np.min(u) > -rel * m:
        return "positive"
    if np.max(u) < rel * m:
        return "negative"
    return "sign_changing"


# -- sign-changing probe ----------------------------------------------------

def per_sign_ray_margins(b: E.EnergyBundle, u, lam: float) -> tuple[float, float]:
    """lam J(u_+-) - I(u_+-) - mu Q(u_+-) for both parts; a part with a
    negative (or undefined) margin cannot sit on its own ray's Nehari point."""
    u = _vals(u)
    out = []
    for part in (np.maximum(u, 0.0), np.maximum(-u, 0.0)):
        if not np.any(part):
            out.append(float("nan"))
            continue
        out.append(float(lam * E.functional_J(b, part) - E.functional_I(b, part)
                         - b.params.mu * E.q_energy(b, part)))
    return out[0], out[1]


@dataclass
class ProbeReport:
    lam: float
    outcome: str
    start_profile: str
    final_profile: str
    start_margins: tuple[float, float]
    final_margins: tuple[float, float]
    level: float | None
    iterations: int

    def summary(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _sign_changing_start(b, lam, seed, u1):
    """Smooth start base * (x - c) with c drawn near one end of the domain.

    The small side is pushed toward the boundary until the ray reaches the
    Nehari manifold (or a few attempts are used up).
    """
    rng = np.random.default_rng(seed)
    base = initial_guess(b.mesh, seed) if u1 is None else np.abs(_vals(u1))
    x = b.mesh.nodes
    frac = rng.uniform(0.05, 0.25)
    side = 1.0 if rng.random() < 0.5 else -1.0
    w = None
    for _ in range(8):
        c = np.quantile(x, frac if side > 0 else 1.0 - frac)
        w = side * base * (x - c) * (1.0 + 0.01 * rng.standard_normal(x.size))
        if fibering(b, w, lam).t0 is not None:
            break
        frac *= 0.5
    return w


def sign_changing_probe(b: E.EnergyBundle, lam: float, seed: int = 0, start=None,
                        u1=None, max_iter: int = 500) -> ProbeReport:
    """Run the Nehari descent from a sign-changing start and report what happens.

    Outcomes: ``collapsed`` (final iterate has constant sign),
    ``ray_condition_failed`` (a sign part cannot be placed on its own
    Nehari ray), ``no_admissible_start``, or ``sign_changing``.
    """
    _require_mu(b)
    b = b.replace(lam=lam)
    if start is None:
        start = _sign_changing_start(b, lam, seed, u1)
    w = np.array(_vals(start), dtype=float)
    m0 = per_sign_ray_margins(b, w, lam)
    prof0 = sign_profile(w)
    if fibering(b, w, lam).t0 is None:
        outcome = "ray_condition_failed" if min(m0) <= 0 else "no_admissible_start"
        return ProbeReport(float(lam), outcome, prof0, prof0, m0, m0, None, 0)
    P = preconditioner(b.op_p)
    w, f, it, _ = _descend(b, w, lam, P, max_iter, gtol=1e-6)
    u = project_to_nehari(b, w, lam)
    prof = _positive_profile(u, rel=1e-6)
    m1 = per_sign_ray_margins(b, u, lam)
    if prof != "sign_changing":
        outcome = "collapsed"
    elif min(m1) <= 0:
        outcome = "ray_condition_failed"
    else:
        outcome = "sign_changing"
    return ProbeReport(float(lam), outcome, prof0, prof, m0, m1,
                       float(E.lagrangian_J_functional(b, u, lam)), it)
