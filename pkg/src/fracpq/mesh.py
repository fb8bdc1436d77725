"""Disjoint-interval domains, uniform interior grids and lumped L^p quadrature.

A discrete function is stored by its values at the interior nodes only.
Values outside the domain are zero by construction, so the Dirichlet
exterior condition never has to be imposed separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Domain1D:
    """Finite union of disjoint open intervals, sorted left to right."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        if not ivs:
            raise ValidationError("domain must contain at least one interval")
        for a, b in ivs:
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValidationError(f"interval ({a}, {b}) is not finite")
            if not b > a:
                raise ValidationError(f"interval ({a}, {b}) has nonpositive length")
        for (_, b0), (a1, _) in zip(ivs[:-1], ivs[1:]):
            if not b0 < a1:
                raise ValidationError("intervals must be sorted and pairwise disjoint")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def from_list(cls, intervals: Iterable[Sequence[float]]) -> "Domain1D":
        return cls(tuple((a, b) for a, b in intervals))

    @property
    def component_count(self) -> int:
        return len(self.intervals)

    @property
    def measure(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def exterior_pieces(self) -> list[tuple[float, float]]:
        """Maximal intervals of the complement, including the two unbounded tails."""
        pieces = [(-math.inf, self.intervals[0][0])]
        for (_, b0), (a1, _) in zip(self.intervals[:-1], self.intervals[1:]):
            pieces.append((b0, a1))
        pieces.append((self.intervals[-1][1], math.inf))
        return pieces

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        """True when the domain is invariant under x -> -x."""
        mirrored = sorted((-b, -a) for a, b in self.intervals)
        return all(
            abs(a - c) <= tol and abs(b - d) <= tol
            for (a, b), (c, d) in zip(self.intervals, mirrored)
        )


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform grid of spacing ``h`` with nodes strictly inside the domain."""

    domain: Domain1D
    h: float
    nodes: np.ndarray
    node_component: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.node_component.setflags(write=False)

    @property
    def n(self) -> int:
        return self.nodes.size

    def component_slices(self) -> list[slice]:
        """Index ranges of the node runs, one per component."""
        out = []
        start = 0
        for k in range(self.domain.component_count):
            stop = start + int(np.count_nonzero(self.node_component == k))
            out.append(slice(start, stop))
            start = stop
        return out

    def mirror_index(self, tol: float | None = None) -> np.ndarray | None:
        """Permutation mapping node i to the node at -x_i, or None if the grid is not symmetric."""
        tol = 1e-9 * self.h if tol is None else tol
        order = np.argsort(-self.nodes, kind="stable")
        if np.all(np.abs(self.nodes[order] + self.nodes) <= tol):
            return order
        return None


def build_mesh(domain: Domain1D, n_per_unit: int) -> Mesh:
    """Place nodes at a_k + h, a_k + 2h, ... strictly below b_k with h = 1/n_per_unit.

    Raises:
        ValidationError: if ``n_per_unit < 4``, if an interval is shorter than
            2h, or if two components are separated by a gap shorter than h.
    """
    if int(n_per_unit) != n_per_unit or n_per_unit < 4:
        raise ValidationError(f"n_per_unit must be an integer >= 4, got {n_per_unit}")
    n_per_unit = int(n_per_unit)
    h = 1.0 / n_per_unit
    coords = []
    comps = []
    for k, (a, b) in enumerate(domain.intervals):
        if (b - a) < 2 * h * (1 - 1e-12):
            raise ValidationError(
                f"interval ({a}, {b}) unresolvable at this resolution (h={h})"
            )
        ratio = (b - a) * n_per_unit
        m = int(math.ceil(ratio - 1e-9)) - 1
        x = a + h * np.arange(1, m + 1)
        coords.append(x)
        comps.append(np.full(m, k, dtype=np.int64))
    for (_, b0), (a1, _) in zip(domain.intervals[:-1], domain.intervals[1:]):
        if a1 - b0 < h * (1 - 1e-12):
            raise ValidationError(
                f"gap ({b0}, {a1}) unresolvable at this resolution (h={h})"
            )
    return Mesh(domain, h, np.concatenate(coords), np.concatenate(comps))


def _vals(u) -> np.ndarray:
    return np.asarray(getattr(u, "values", u), dtype=float)


@dataclass(frozen=True, eq=False)
class NodalFunction:
    """Values at the interior nodes of ``mesh``; zero outside the domain."""

    values: np.ndarray
    mesh: Mesh = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n,):
            raise ValidationError(
                f"expected {self.mesh.n} nodal values, got shape {v.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __neg__(self):
        return NodalFunction(-self.values, self.mesh)

    def scaled(self, c: float) -> "NodalFunction":
        return NodalFunction(c * self.values, self.mesh)

    def positive_part(self) -> "NodalFunction":
        return NodalFunction(np.maximum(self.values, 0.0), self.mesh)

    def negative_part(self) -> "NodalFunction":
        """max(-u, 0), a nonnegative function."""
        return NodalFunction(np.maximum(-self.values, 0.0), self.mesh)


@dataclass(frozen=True, eq=False)
class Potential:
    """Nodal samples of a bounded weight V."""

    values: np.ndarray
    mesh: Mesh = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n,):
            raise ValidationError(
                f"expected {self.mesh.n} potential samples, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValidationError("potential samples must be finite")
        if not np.any(v > 0):
            raise ValidationError("potential must be positive on at least one node")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def ess_sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))

    def scaled(self, c: float) -> "Potential":
        return Potential(c * self.values, self.mesh)

    @classmethod
    def constant(cls, mesh: Mesh, c: float = 1.0) -> "Potential":
        return cls(np.full(mesh.n, float(c)), mesh)

    @classmethod
    def from_function(cls, mesh: Mesh, f: Callable[[np.ndarray], np.ndarray]) -> "Potential":
        return cls(np.broadcast_to(f(mesh.nodes), (mesh.n,)), mesh)


def _one(x):
    return np.ones_like(x)


def _sign_step(x, center=0.0):
    return np.where(x < center, 1.0, -1.0)


def _gaussian_bump(x, center=0.0, width=0.25):
    return np.exp(-0.5 * ((x - center) / width) ** 2)


POTENTIAL_CATALOG: dict[str, Callable[..., np.ndarray]] = {
    "one": _one,
    "sign_step": _sign_step,
    "gaussian_bump": _gaussian_bump,
}


def catalog_potential(mesh: Mesh, name: str, **kwargs) -> Potential:
    try:
        f = POTENTIAL_CATALOG[name]
    except KeyError:
        raise ValidationError(
            f"unknown potential {name!r}; choose from {sorted(POTENTIAL_CATALOG)}"
        ) from None
    return Potential(f(mesh.nodes, **kwargs), mesh)


def lp_norm_p(u, exponent: float, h: float | None = None) -> float:
    """Lumped quadrature of the p-th power: h * sum |u_i|^p."""
    if not exponent > 1:
        raise ValidationError(f"exponent must exceed 1, got {exponent}")
    h = u.mesh.h if h is None else h
    return h * float(np.sum(np.abs(_vals(u)) ** exponent))


def weighted_lp_norm_p(u, V, exponent: float, h: float | None = None) -> float:
    """h * sum V_i |u_i|^p; negative when V is."""
    if h is None:
        h = u.mesh.h if hasattr(u, "mesh") else V.mesh.h
    return h * float(np.sum(_vals(V) * np.abs(_vals(u)) ** exponent))
