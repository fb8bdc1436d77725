"""Problem functionals built from the Gagliardo energies.

Naming used throughout the package (all with lumped L^p quadrature):

* ``functional_I``   I(u) = [u]_p^p + ||u||_p^p
* ``functional_J``   J(u) = sum-weighted  V |u|^p
* ``q_energy``       Q(u) = [u]_q^q + ||u||_q^q
* ``pq_energy``      E(u) = I(u)/p + (mu/q) Q(u)
* ``lagrangian_J_functional``  F(u) = E(u) - (lam/p) J(u), whose critical
  points are the weak solutions of the p&q eigenvalue equation.

Gradients are Euclidean gradients with respect to the nodal values, so the
weak form tested against the k-th nodal basis vector is component k of
``grad_lagrangian``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .gagliardo import GagliardoOperator, LocalOperator, assemble
from .mesh import Mesh, Potential, _vals


@dataclass(frozen=True)
class ProblemParams:
    s: float
    p: float
    q: float
    mu: float
    lam: float
    V: Potential = field(repr=False)

    def __post_init__(self):
        if not 0.0 < self.s <= 1.0:
            raise ValidationError(f"s must lie in (0, 1) (or equal 1 for the local problem), got {self.s}")
        if not 1.0 < self.q < self.p:
            raise ValidationError(f"need 1 < q < p, got q={self.q}, p={self.p}")
        if self.mu < 0:
            raise ValidationError(f"mu must be nonnegative, got {self.mu}")

    @property
    def subcritical(self) -> bool:
        """Whether p < N/s with N = 1; recorded, not enforced."""
        return self.p * self.s < 1.0


@dataclass(frozen=True, eq=False)
class EnergyBundle:
    op_p: GagliardoOperator | LocalOperator
    op_q: GagliardoOperator | LocalOperator | None
    params: ProblemParams

    def __post_init__(self):
        if self.op_p.exponent != self.params.p:
            raise ValidationError("op_p exponent does not match p")
        if self.params.mu > 0:
            if self.op_q is None:
                raise ValidationError("mu > 0 requires the q-operator")
            if self.op_q.mesh is not self.op_p.mesh or self.op_q.s != self.op_p.s:
                raise ValidationError("p- and q-operators must share mesh and s")

    @property
    def mesh(self) -> Mesh:
        return self.op_p.mesh

    @property
    def h(self) -> float:
        return self.op_p.mesh.h

    @property
    def V(self) -> np.ndarray:
        return self.params.V.values

    def replace(self, **changes) -> "EnergyBundle":
        """Copy with some of (lam, mu, V) changed, reusing assembled operators."""
        pr = self.params
        new = ProblemParams(
            s=pr.s,
            p=pr.p,
            q=pr.q,
            mu=changes.pop("mu", pr.mu),
            lam=changes.pop("lam", pr.lam),
            V=changes.pop("V", pr.V),
        )
        if changes:
            raise TypeError(f"unexpected fields {sorted(changes)}")
        op_q = self.op_q
        if new.mu > 0 and op_q is None:
            op_q = _make_op(self.mesh, pr.s, pr.q)
        return EnergyBundle(self.op_p, op_q, new)


def _make_op(mesh, s, exponent):
    return LocalOperator(mesh, exponent) if s == 1.0 else assemble(mesh, s, exponent)


def make_bundle(mesh: Mesh, s: float, p: float, V: Potential, q: float | None = None,
                mu: float = 0.0, lam: float = 0.0) -> EnergyBundle:
    """Assemble the operators for one parameter set; s = 1 selects first differences."""
    if q is None:
        q = 1.0 + 0.5 * (p - 1.0)
    params = ProblemParams(s=s, p=p, q=q, mu=mu, lam=lam, V=V)
    op_p = _make_op(mesh, s, p)
    op_q = _make_op(mesh, s, q) if mu > 0 else None
    return EnergyBundle(op_p, op_q, params)


# -- elementary pieces ----------------------------------------------------

def _lp(b, u, a):
    return b.h * float(np.sum(np.abs(u) ** a))


def _lp_grad(b, u, a):
    return b.h * a * np.sign(u) * np.abs(u) ** (a - 1.0)


def _lp_hess_diag(b, u, a, floor=0.0):
    au = np.abs(u)
    if a < 2.0:
        au = np.maximum(au, max(floor, 1e-12 * max(float(au.max()), 1e-300)))
    return b.h * a * (a - 1.0) * au ** (a - 2.0)


def functional_I(b: EnergyBundle, u) -> float:
    u = _vals(u)
    return b.op_p.pow(u) + _lp(b, u, b.params.p)


def grad_I(b: EnergyBundle, u) -> np.ndarray:
    u = _vals(u)
    return b.op_p.gradient(u) + _lp_grad(b, u, b.params.p)


def hess_I(b: EnergyBundle, u, floor: float = 0.0) -> np.ndarray:
    """Dense Hessian; for p < 2, differences below ``floor`` are clipped."""
    u = _vals(u)
    H = b.op_p.hessian(u, floor)
    H[np.diag_indices_from(H)] += _lp_hess_diag(b, u, b.params.p, floor)
    return H


def functional_J(b: EnergyBundle, u) -> float:
    u = _vals(u)
    return b.h * float(np.sum(b.V * np.abs(u) ** b.params.p))


def grad_J(b: EnergyBundle, u) -> np.ndarray:
    u = _vals(u)
    return b.V * _lp_grad(b, u, b.params.p)


def hess_J(b: EnergyBundle, u, floor: float = 0.0) -> np.ndarray:
    return np.diag(b.V * _lp_hess_diag(b, _vals(u), b.params.p, floor))


def q_energy(b: EnergyBundle, u) -> float:
    """[u]_q^q + ||u||_q^q; requires the q-operator."""
    u = _vals(u)
    return b.op_q.pow(u) + _lp(b, u, b.params.q)


def grad_q_energy(b: EnergyBundle, u) -> np.ndarray:
    u = _vals(u)
    return b.op_q.gradient(u) + _lp_grad(b, u, b.params.q)


def hess_q_energy(b: EnergyBundle, u) -> np.ndarray:
    u = _vals(u)
    H = b.op_q.hessian(u)
    H[np.diag_indices_from(H)] += _lp_hess_diag(b, u, b.params.q)
    return H


def rayleigh_quotient(b: EnergyBundle, u) -> float:
    J = functional_J(b, u)
    if not J > 0:
        raise ValidationError("denominator constraint violated: J(u) <= 0")
    return functional_I(b, u) / J


def grad_rayleigh_quotient(b: EnergyBundle, u) -> np.ndarray:
    J = functional_J(b, u)
    R = functional_I(b, u) / J
    return (grad_I(b, u) - R * grad_J(b, u)) / J


# -- full problem -----------------------------------------------------------

def pq_energy(b: EnergyBundle, u) -> float:
    pr = b.params
    val = functional_I(b, u) / pr.p
    if pr.mu > 0:
        val += pr.mu / pr.q * q_energy(b, u)
    return val


def grad_pq_energy(b: EnergyBundle, u) -> np.ndarray:
    pr = b.params
    g = grad_I(b, u) / pr.p
    if pr.mu > 0:
        g = g + pr.mu / pr.q * grad_q_energy(b, u)
    return g


def hess_pq_energy(b: EnergyBundle, u) -> np.ndarray:
    pr = b.params
    H = hess_I(b, u) / pr.p
    if pr.mu > 0:
        H += pr.mu / pr.q * hess_q_energy(b, u)
    return H


def _lam(b, lam):
    return b.params.lam if lam is None else lam


def lagrangian_J_functional(b: EnergyBundle, u, lam: float | None = None) -> float:
    lam = _lam(b, lam)
    val = pq_energy(b, u)
    if lam != 0:
        val -= lam / b.params.p * functional_J(b, u)
    return val


def grad_lagrangian(b: EnergyBundle, u, lam: float | None = None) -> np.ndarray:
    lam = _lam(b, lam)
    g = grad_pq_energy(b, u)
    if lam != 0:
        g = g - lam / b.params.p * grad_J(b, u)
    return g


def hess_lagrangian(b: EnergyBundle, u, lam: float | None = None) -> np.ndarray:
    lam = _lam(b, lam)
    H = hess_pq_energy(b, u)
    if lam != 0:
        H -= lam / b.params.p * hess_J(b, u)
    return H


def eigen_residual(b: EnergyBundle, u, lam: float | None = None) -> float:
    """Relative stationarity ||grad F(u)|| / ||grad E(u)||.

    Zero exactly at discrete eigenpairs; invariant under u -> c u (c > 0)
    when mu = 0 because every term is (p-1)-homogeneous.
    """
    u = _vals(u)
    if not np.any(u):
        raise ValidationError("eigen_residual undefined for u = 0")
    lam = _lam(b, lam)
    scale = np.linalg.norm(grad_pq_energy(b, u))
    return float(np.linalg.norm(grad_lagrangian(b, u, lam)) / scale)
