import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracpq.errors import ValidationError
from fracpq.mesh import (Domain1D, NodalFunction, Potential, build_mesh, catalog_potential,
                         lp_norm_p, weighted_lp_norm_p)


def test_domain_rejects_overlap_and_empty():
    with pytest.raises(ValidationError):
        Domain1D(())
    with pytest.raises(ValidationError):
        Domain1D(((0.0, 1.0), (0.5, 2.0)))
    with pytest.raises(ValidationError):
        Domain1D(((1.0, 1.0),))
    with pytest.raises(ValidationError):
        Domain1D(((0.0, math.inf),))


def test_exterior_pieces_cover_complement():
    d = Domain1D(((-1.0, -0.2), (0.2, 1.0)))
    assert d.exterior_pieces() == [(-math.inf, -1.0), (-0.2, 0.2), (1.0, math.inf)]
    assert d.component_count == 2
    assert d.measure == pytest.approx(1.6)
    assert d.is_symmetric()
    assert not Domain1D(((0.0, 1.0),)).is_symmetric()


def test_nodes_strictly_inside_and_uniform():
    m = build_mesh(Domain1D(((-1.0, -0.2), (0.2, 1.0))), 20)
    assert m.h == 0.05
    for sl, (a, b) in zip(m.component_slices(), m.domain.intervals):
        x = m.nodes[sl]
        assert np.all(x > a) and np.all(x < b)
        assert np.allclose(np.diff(x), m.h)
        assert x[0] - a == pytest.approx(m.h) and b - x[-1] <= m.h + 1e-12
    assert m.n == 2 * 15


def test_mesh_errors():
    with pytest.raises(ValidationError):
        build_mesh(Domain1D(((0.0, 1.0),)), 3)
    with pytest.raises(ValidationError, match="unresolvable"):
        build_mesh(Domain1D(((0.0, 0.1),)), 8)
    with pytest.raises(ValidationError, match="unresolvable"):
        build_mesh(Domain1D(((0.0, 1.0), (1.01, 2.0))), 8)


def test_mirror_index():
    m = build_mesh(Domain1D(((-1.0, 1.0),)), 16)
    mi = m.mirror_index()
    assert np.allclose(m.nodes[mi], -m.nodes)
    assert build_mesh(Domain1D(((0.0, 1.0),)), 16).mirror_index() is None


def test_nodal_function_parts():
    m = build_mesh(Domain1D(((0.0, 1.0),)), 8)
    u = NodalFunction(np.linspace(-1, 1, m.n), m)
    assert np.all(u.negative_part().values >= 0)
    assert np.allclose(u.positive_part().values - u.negative_part().values, u.values)
    with pytest.raises(ValidationError):
        NodalFunction(np.ones(3), m)
    with pytest.raises(ValueError):
        u.values[0] = 2.0


def test_potential_validation_and_catalog():
    m = build_mesh(Domain1D(((-1.0, 1.0),)), 8)
    with pytest.raises(ValidationError):
        Potential(-np.ones(m.n), m)
    with pytest.raises(ValidationError):
        Potential(np.full(m.n, np.nan), m)
    V = catalog_potential(m, "sign_step")
    assert not V.nonnegative and V.ess_sup == 1.0
    assert catalog_potential(m, "gaussian_bump").values.max() == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        catalog_potential(m, "nope")


def test_lp_norms():
    m = build_mesh(Domain1D(((0.0, 1.0),)), 10)
    u = NodalFunction(np.ones(m.n), m)
    assert lp_norm_p(u, 2.0) == pytest.approx(m.h * m.n)
    V = Potential.constant(m, -1.0 + 2.0)
    assert weighted_lp_norm_p(u, V, 3.0) == pytest.approx(lp_norm_p(u, 3.0))
    assert weighted_lp_norm_p(u, Potential(np.r_[-np.ones(m.n - 1), 1.0], m), 2.0) < 0
    with pytest.raises(ValidationError):
        lp_norm_p(u, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.01, 0.5), st.integers(4, 40))
def test_node_count_matches_length(L, gap, n):
    d = Domain1D(((0.0, L), (L + gap, 2 * L + gap)))
    try:
        m = build_mesh(d, n)
    except ValidationError:
        assert L < 2.0 / n or gap < 1.0 / n
        return
    for sl, (a, b) in zip(m.component_slices(), d.intervals):
        assert sl.stop - sl.start == math.ceil((b - a) * n - 1e-9) - 1
