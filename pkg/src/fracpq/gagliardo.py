"""Discrete Gagliardo energies on a :class:`~fracpq.mesh.Mesh`.

The energy of exponent ``alpha`` and order ``s`` is stored as

    [u]^alpha = K * ( sum_{i != j} w_ij |u_i - u_j|^alpha + sum_i t_i |u_i|^alpha )

with K = (1 - s) * alpha / 2 in one dimension.  Node i owns the cell
[x_i - h/2, x_i + h/2]; everything outside the union of cells carries the
value 0.

Pair weights are "linear exact": for an affine u the row sums reproduce
the continuum integral of |u(x) - u(y)|^alpha |x - y|^(-1 - s*alpha) over
cell i times the real line.  The singular own-cell contribution is folded
into the nearest-neighbour weight, which is what keeps the energy accurate
when the kernel concentrates near the diagonal (s close to 1).  Exterior
weights are cell-to-interval integrals of the kernel in closed form; a node
next to an exterior region additionally gets a virtual zero neighbour at
distance h so that the slope towards the boundary is seen the same way.

:class:`LocalOperator` is the s = 1 member of the family: first differences
with zero exterior neighbours.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg

from .errors import ValidationError
from .mesh import Domain1D, Mesh, _vals

# closed-form pair integrals lose ~2*log10(d/h) digits; switch to the series
# beyond this many cells
_SERIES_CUTOFF = 64.0


def bbm_constant(N: int, exponent: float) -> float:
    """Constant making (1 - s) * const * double-integral tend to ||grad u||_p^p.

    Its inverse is (1/p) times the integral of |omega_1|^p over the unit
    sphere; for N = 1 the sphere is {-1, 1}, so the constant is p / 2.
    """
    if N != 1:
        raise ValidationError(f"unsupported dimension N={N}; only N=1 is implemented")
    if not exponent > 1:
        raise ValidationError(f"exponent must exceed 1, got {exponent}")
    return exponent / 2.0


def normalizing_constant(s: float, exponent: float, N: int = 1) -> float:
    return (1.0 - s) * bbm_constant(N, exponent)


def exterior_kernel_integral(domain: Domain1D, x, sigma: float):
    """Integral of |x - y|^(-1 - sigma) over y outside the domain, for x inside.

    Each exterior piece [L, R] contributes F(d_near) - F(d_far) with
    F(d) = d^(-sigma) / sigma the primitive of the kernel.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for L, R in domain.exterior_pieces():
        if math.isinf(L):
            near, far = x - R, np.inf
        elif math.isinf(R):
            near, far = L - x, np.inf
        else:
            right = x < L
            near = np.where(right, L - x, x - R)
            far = np.where(right, R - x, x - L)
        if np.any(near <= 0):
            raise ValidationError("evaluation point must lie strictly inside the domain")
        out += near ** -sigma / sigma - (0.0 if np.isinf(far).all() else far ** -sigma / sigma)
    return out


def _second_primitive(z, beta):
    """G with G'' = |z|^beta and G(0) = 0, for beta > -1."""
    return np.abs(z) ** (beta + 2.0) / ((beta + 1.0) * (beta + 2.0))


def _cell_pair_moment(d, h, beta):
    """Integral of |x - y|^beta over two cells of width h whose centres are d >= h apart."""
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    far = d > _SERIES_CUTOFF * h
    dn = d[~far]
    out[~far] = (
        _second_primitive(dn + h, beta)
        - 2.0 * _second_primitive(dn, beta)
        + _second_primitive(dn - h, beta)
    )
    df = d[far]
    r2 = (h / df) ** 2
    out[far] = h * h * df ** beta * (
        1.0
        + beta * (beta - 1.0) * r2 / 12.0
        + beta * (beta - 1.0) * (beta - 2.0) * (beta - 3.0) * r2 * r2 / 360.0
    )
    return out


def _log_safe_primitive(z, sigma):
    """F2 with F2'(z) = z^(-sigma)/sigma, continuous through sigma = 1."""
    e = 1.0 - sigma
    lz = np.log(z)
    if abs(e) < 1e-12:
        return lz / sigma
    return np.expm1(e * lz) / (sigma * e)


def _cell_to_halfline(gap, h, sigma):
    """Integral over a cell (centre c) and y >= c + gap of |x - y|^(-1-sigma); gap > h/2."""
    return _log_safe_primitive(gap + 0.5 * h, sigma) - _log_safe_primitive(gap - 0.5 * h, sigma)


def near_weight(h: float, s: float, exponent: float) -> float:
    """Nearest-neighbour weight: adjacent-cell moment plus half the own-cell moment."""
    beta = exponent - 1.0 - s * exponent
    G = _second_primitive
    return float((G(2 * h, beta) - G(h, beta)) / h ** exponent)


def pair_weight(d, h: float, s: float, exponent: float):
    """Linear-exact weight of two nodes at distance d >= 2h."""
    beta = exponent - 1.0 - s * exponent
    d = np.asarray(d, dtype=float)
    return _cell_pair_moment(d, h, beta) / d ** exponent


class GagliardoOperator:
    """Assembled pair and tail weights for one (s, exponent)."""

    def __init__(self, mesh: Mesh, s: float, exponent: float, pair_weights, tail_weights):
        self.mesh = mesh
        self.s = float(s)
        self.exponent = float(exponent)
        self.constant = normalizing_constant(s, exponent)
        self.pair_weights = np.asarray(pair_weights)
        self.tail_weights = np.asarray(tail_weights)
        self.pair_weights.setflags(write=False)
        self.tail_weights.setflags(write=False)
        self._rowsum = self.pair_weights.sum(axis=1)

    def __repr__(self):
        return f"GagliardoOperator(n={self.mesh.n}, s={self.s}, exponent={self.exponent})"

    @property
    def local(self) -> bool:
        return False

    def with_exponent(self, exponent: float) -> "GagliardoOperator":
        if exponent == self.exponent:
            return self
        return assemble(self.mesh, self.s, exponent)

    def pow(self, u) -> float:
        u = _vals(u)
        a = self.exponent
        D = np.abs(u[:, None] - u[None, :])
        if a == 2.0:
            pair = D * D
            tail = u * u
        else:
            pair = D ** a
            tail = np.abs(u) ** a
        total = np.sum((self.pair_weights * pair).ravel()) + np.sum(self.tail_weights * tail)
        return self.constant * float(total)

    def gradient(self, u) -> np.ndarray:
        u = _vals(u)
        a = self.exponent
        D = u[:, None] - u[None, :]
        if a == 2.0:
            phi = D
            tphi = u
        else:
            phi = np.abs(D) ** (a - 2.0) * D if a >= 2.0 else np.sign(D) * np.abs(D) ** (a - 1.0)
            tphi = np.sign(u) * np.abs(u) ** (a - 1.0)
        return self.constant * a * (2.0 * np.sum(self.pair_weights * phi, axis=1) + self.tail_weights * tphi)

    def hessian(self, u, floor: float = 0.0) -> np.ndarray:
        """Dense Hessian of :meth:`pow`.  For exponent < 2, differences below
        ``floor`` are clipped so the matrix stays finite."""
        u = _vals(u)
        a = self.exponent
        c = self.constant * a * (a - 1.0)
        if a == 2.0:
            Wd = self.pair_weights
            td = self.tail_weights
        else:
            D = np.abs(u[:, None] - u[None, :])
            au = np.abs(u)
            if a < 2.0:
                floor = max(floor, 1e-12 * max(float(au.max()), 1e-300))
                D = np.maximum(D, floor)
                au = np.maximum(au, floor)
            Wd = self.pair_weights * D ** (a - 2.0)
            td = self.tail_weights * au ** (a - 2.0)
        H = -2.0 * Wd
        H[np.diag_indices_from(H)] = 2.0 * Wd.sum(axis=1) - 2.0 * np.diag(Wd) + td
        return c * H

    def weak_action(self, u, v) -> float:
        """<A(u), v>, the derivative of pow/exponent at u in direction v."""
        return float(np.dot(self.gradient(u), _vals(v))) / self.exponent

    def quadratic_matrix(self) -> np.ndarray:
        """Matrix A with pow(u) = u^T A u when exponent == 2."""
        if self.exponent != 2.0:
            raise ValidationError("quadratic_matrix requires exponent 2")
        A = -2.0 * np.array(self.pair_weights)
        A[np.diag_indices_from(A)] = 2.0 * self._rowsum + self.tail_weights
        return self.constant * A


def assemble(mesh: Mesh, s: float, exponent: float) -> GagliardoOperator:
    """Build pair and tail weights for order ``s`` and exponent ``exponent`` on ``mesh``."""
    if not 0.0 < s < 1.0:
        raise ValidationError(f"s must lie in (0, 1), got {s}")
    if not exponent > 1.0:
        raise ValidationError(f"exponent must exceed 1, got {exponent}")
    h = mesh.h
    x = mesh.nodes
    comp = mesh.node_component
    n = mesh.n
    sigma = s * exponent

    D = np.abs(x[:, None] - x[None, :])
    W = np.zeros((n, n))
    off = ~np.eye(n, dtype=bool)
    far = off & (D > 1.5 * h)
    W[far] = pair_weight(D[far], h, s, exponent)
    wn = near_weight(h, s, exponent)
    idx = np.arange(n - 1)
    same = comp[idx] == comp[idx + 1]
    W[idx[same], idx[same] + 1] = wn
    W[idx[same] + 1, idx[same]] = wn
    W = 0.5 * (W + W.T)

    # exterior: everything outside the node cells
    pieces = []
    for sl in mesh.component_slices():
        pieces.append((x[sl][0] - 0.5 * h, x[sl][-1] + 0.5 * h))
    ext = [(-math.inf, pieces[0][0])]
    ext += [(r0, l1) for (_, r0), (l1, _) in zip(pieces[:-1], pieces[1:])]
    ext.append((pieces[-1][1], math.inf))

    tail = np.zeros(n)
    for L, R in ext:
        left_side = x > R  # piece lies to the left of the node
        gap_near = np.where(left_side, x - R, L - x)
        gap_far = np.where(left_side, x - L, R - x)
        touching = np.abs(gap_near - 0.5 * h) <= 1e-9 * h
        # the first cell-width of a touching piece is a virtual zero node
        gap_near = np.where(touching, gap_near + h, gap_near)
        val = _cell_to_halfline(gap_near, h, sigma)
        finite = np.isfinite(gap_far)
        if np.any(finite):
            val[finite] -= _cell_to_halfline(gap_far[finite], h, sigma)
        tail += np.maximum(val, 0.0) + np.where(touching, wn, 0.0)
    tail *= 2.0
    return GagliardoOperator(mesh, s, exponent, W, tail)


class LocalOperator:
    """First-difference energy sum_e len_e |du_e / len_e|^alpha (the s = 1 limit).

    Edges run between consecutive nodes of a component and from the end
    nodes to the interval endpoints, where u = 0.
    """

    def __init__(self, mesh: Mesh, exponent: float):
        if not exponent > 1.0:
            raise ValidationError(f"exponent must exceed 1, got {exponent}")
        self.mesh = mesh
        self.s = 1.0
        self.exponent = float(exponent)
        self.constant = 1.0
        tails, heads, lens = [], [], []
        n = mesh.n
        for sl, (a, b) in zip(mesh.component_slices(), mesh.domain.intervals):
            idx = np.arange(sl.start, sl.stop)
            xs = mesh.nodes[sl]
            tails += [n] + list(idx)
            heads += list(idx) + [n]
            lens += [xs[0] - a] + list(np.diff(xs)) + [b - xs[-1]]
        # index n is the shared zero exterior value
        self._i = np.array(tails)
        self._j = np.array(heads)
        self._len = np.array(lens, dtype=float)

    def __repr__(self):
        return f"LocalOperator(n={self.mesh.n}, exponent={self.exponent})"

    @property
    def local(self) -> bool:
        return True

    def with_exponent(self, exponent: float) -> "LocalOperator":
        return self if exponent == self.exponent else LocalOperator(self.mesh, exponent)

    def _diff(self, u):
        ue = np.append(_vals(u), 0.0)
        return (ue[self._j] - ue[self._i]) / self._len

    def pow(self, u) -> float:
        g = self._diff(u)
        return float(np.sum(self._len * np.abs(g) ** self.exponent))

    def gradient(self, u) -> np.ndarray:
        a = self.exponent
        g = self._diff(u)
        flux = a * np.sign(g) * np.abs(g) ** (a - 1.0)
        out = np.zeros(self.mesh.n + 1)
        np.add.at(out, self._j, flux)
        np.add.at(out, self._i, -flux)
        return out[:-1]

    def hessian(self, u, floor: float = 0.0) -> np.ndarray:
        a = self.exponent
        g = np.abs(self._diff(u))
        if a < 2.0:
            g = np.maximum(g, max(floor, 1e-12 * max(float(np.abs(_vals(u)).max()), 1e-300)))
        c = a * (a - 1.0) * g ** (a - 2.0) / self._len
        n = self.mesh.n
        H = np.zeros((n + 1, n + 1))
        np.add.at(H, (self._i, self._i), c)
        np.add.at(H, (self._j, self._j), c)
        np.add.at(H, (self._i, self._j), -c)
        np.add.at(H, (self._j, self._i), -c)
        return H[:-1, :-1]

    def weak_action(self, u, v) -> float:
        return float(np.dot(self.gradient(u), _vals(v))) / self.exponent

    def quadratic_matrix(self) -> np.ndarray:
        if self.exponent != 2.0:
            raise ValidationError("quadratic_matrix requires exponent 2")
        return self.hessian(np.zeros(self.mesh.n)) / 2.0


def seminorm_pow(op, u) -> float:
    return op.pow(u)


def seminorm_gradient(op, u):
    from .mesh import NodalFunction

    return NodalFunction(op.gradient(u), op.mesh)


def weak_action(op, u, v) -> float:
    return op.weak_action(u, v)


def preconditioner(op):
    """Cholesky factor of (A_2 + h I) for the exponent-2 companion of ``op``."""
    A = op.with_exponent(2.0).quadratic_matrix()
    A[np.diag_indices_from(A)] += op.mesh.h
    return linalg.cho_factor(A)
