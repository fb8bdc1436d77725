import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracpq.errors import ValidationError
from fracpq.gagliardo import (LocalOperator, _cell_pair_moment, _cell_to_halfline, assemble, bbm_constant,
                              exterior_kernel_integral, normalizing_constant, pair_weight, seminorm_gradient,
                              seminorm_pow, weak_action)
from fracpq.mesh import Domain1D, NodalFunction, build_mesh

from conftest import SPLIT, SYM, cached_mesh
from oracles import bump, cell_pair_moment, continuum_seminorm_pow, exterior_integral


def test_bbm_constant_values():
    assert bbm_constant(1, 2.0) == 1.0
    assert bbm_constant(1, 3.0) == 1.5
    assert normalizing_constant(0.3, 2.5) == pytest.approx(0.7 * 1.25)
    with pytest.raises(ValidationError, match="unsupported dimension"):
        bbm_constant(2, 2.0)


def test_exterior_integral_closed_form_single_interval():
    d = Domain1D(((-1.0, 2.0),))
    x = np.array([-0.5, 0.3, 1.9])
    sig = 0.8
    expect = ((x + 1.0) ** -sig + (2.0 - x) ** -sig) / sig
    assert np.allclose(exterior_kernel_integral(d, x, sig), expect, rtol=1e-14)


@pytest.mark.parametrize("sigma", [0.3, 1.0, 1.7])
def test_exterior_integral_against_quadrature(sigma):
    ivs = SPLIT.intervals
    for x in (-0.9, -0.3, 0.5):
        ref = exterior_integral(ivs, x, sigma)
        assert exterior_kernel_integral(SPLIT, x, sigma) == pytest.approx(ref, rel=1e-9)
    with pytest.raises(ValidationError):
        exterior_kernel_integral(SPLIT, 0.0, sigma)


@pytest.mark.parametrize("beta", [-0.5, 0.0, 0.5, 1.25])
@pytest.mark.parametrize("k", [1, 2, 5, 63, 65, 200])
def test_cell_pair_moment_against_quadrature(beta, k):
    h = 0.01
    got = _cell_pair_moment(np.array([k * h]), h, beta)[0]
    assert got == pytest.approx(cell_pair_moment(k * h, h, beta), rel=1e-8)


@pytest.mark.parametrize("sigma", [0.4, 1.0, 1.9])
def test_cell_to_halfline_against_quadrature(sigma):
    from scipy import integrate
    h, gap = 0.05, 0.075
    ref = integrate.dblquad(lambda y, x: (y - x) ** (-1 - sigma), -h / 2, h / 2, gap, np.inf)[0]
    assert _cell_to_halfline(np.array(gap), h, sigma) == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("s,p", [(0.3, 2.0), (0.5, 3.0), (0.9, 1.5)])
def test_far_pair_weight_is_midpoint_kernel(s, p):
    h = 0.01
    d = h * np.array([10.0, 30.0, 100.0, 1000.0])
    w = pair_weight(d, h, s, p)
    assert np.all(np.abs(w / (h * h * d ** (-1 - s * p)) - 1.0) <= 0.01)


def test_operator_structure(split_mesh):
    op = assemble(split_mesh, 0.6, 2.5)
    W = op.pair_weights
    assert np.array_equal(W, W.T)
    assert np.all(W >= 0) and np.all(np.diag(W) == 0)
    assert np.all(op.tail_weights > 0)
    ends = [sl.start for sl in split_mesh.component_slices()] + [sl.stop - 1 for sl in split_mesh.component_slices()]
    mid = split_mesh.n // 4
    assert all(op.tail_weights[e] > op.tail_weights[mid] for e in ends)
    assert op.constant == pytest.approx(0.4 * 1.25)
    with pytest.raises(ValidationError):
        assemble(split_mesh, 1.0, 2.0)
    with pytest.raises(ValidationError):
        assemble(split_mesh, 0.5, 1.0)


@pytest.mark.parametrize("s,p", [(0.5, 2.0), (0.5, 3.0), (0.8, 2.0)])
def test_bump_energy_matches_continuum_quadrature(s, p):
    ref = continuum_seminorm_pow(bump, (-0.5, 0.5), s, p)
    m = cached_mesh(SYM.intervals, 256)
    got = seminorm_pow(assemble(m, s, p), bump(m.nodes))
    assert got == pytest.approx(ref, rel=5e-3)


def test_hat_self_convergence():
    vals = []
    for n in (32, 256):
        m = cached_mesh(SYM.intervals, n)
        vals.append(seminorm_pow(assemble(m, 0.5, 2.0), 1.0 - np.abs(m.nodes)))
    assert abs(vals[0] - vals[1]) / vals[1] <= 0.02


def test_zero_and_quadratic_form(sym_mesh, rng):
    op = assemble(sym_mesh, 0.4, 2.0)
    u = rng.standard_normal(sym_mesh.n)
    assert seminorm_pow(op, np.zeros(sym_mesh.n)) == 0.0
    assert np.allclose(op.gradient(np.zeros(sym_mesh.n)), 0.0)
    A = op.quadratic_matrix()
    assert np.allclose(A, A.T)
    assert u @ A @ u == pytest.approx(seminorm_pow(op, u), rel=1e-12)
    assert np.all(np.linalg.eigvalsh(A) > 0)


@pytest.mark.parametrize("a", [1.5, 2.0, 2.5, 3.0])
def test_gradient_matches_finite_differences(a, rng):
    m = cached_mesh(SPLIT.intervals, 8)
    op = assemble(m, 0.6, a)
    if a >= 2:
        u = rng.standard_normal(m.n)
    else:
        u = np.sort(rng.uniform(0.1, 1.0, m.n))
        u = u + 5e-3 * np.arange(m.n)
        u[::2] *= -1
    g = seminorm_gradient(op, u).values
    eps = 1e-6 * max(1.0, np.abs(u).max())
    fd = np.array([(op.pow(u + eps * e) - op.pow(u - eps * e)) / (2 * eps) for e in np.eye(m.n)])
    tol = 1e-6 if a >= 2 else 1e-4
    assert np.linalg.norm(g - fd) <= tol * np.linalg.norm(g)
    H = op.hessian(u)
    fdH = np.array([(op.gradient(u + eps * e) - op.gradient(u - eps * e)) / (2 * eps) for e in np.eye(m.n)])
    assert np.linalg.norm(H - fdH) <= 1e-5 * np.linalg.norm(H)


@pytest.mark.parametrize("a", [1.5, 2.0, 3.0])
def test_weak_action_identities(a, sym_mesh, rng):
    op = assemble(sym_mesh, 0.5, a)
    u, v, w = rng.standard_normal((3, sym_mesh.n))
    assert weak_action(op, u, u) == pytest.approx(seminorm_pow(op, u), rel=1e-12)
    assert weak_action(op, u, v + w) == pytest.approx(weak_action(op, u, v) + weak_action(op, u, w), rel=1e-10, abs=1e-12)
    assert np.allclose(op.gradient(-u), -op.gradient(u))


@pytest.mark.parametrize("a", [1.5, 2.0, 3.0])
def test_monotone_homogeneous_contraction(a, rng):
    m = cached_mesh(SPLIT.intervals, 8)
    op = assemble(m, 0.5, a)
    for _ in range(200):
        u, v = rng.standard_normal((2, m.n)) * rng.uniform(0.1, 10)
        assert op.weak_action(u, u - v) - op.weak_action(v, u - v) >= -1e-12
        t = rng.uniform(-5, 5)
        assert op.pow(t * u) == pytest.approx(abs(t) ** a * op.pow(u), rel=1e-12)
        assert op.pow(np.abs(u)) <= op.pow(u) * (1 + 1e-14)


def test_local_operator_matches_stencil():
    m = build_mesh(Domain1D(((0.0, 1.0),)), 10)
    op = LocalOperator(m, 2.0)
    A = op.quadratic_matrix()
    T = (2 * np.eye(m.n) - np.eye(m.n, k=1) - np.eye(m.n, k=-1)) / m.h
    assert np.allclose(A, T)
    u = m.nodes * (1 - m.nodes)
    exact = sum(m.h * ((u2 - u1) / m.h) ** 2 for u1, u2 in zip(np.r_[0, u], np.r_[u, 0]))
    assert op.pow(u) == pytest.approx(exact)
    g = op.gradient(u)
    eps = 1e-6
    fd = [(op.pow(u + eps * e) - op.pow(u - eps * e)) / (2 * eps) for e in np.eye(m.n)]
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_local_operator_uses_actual_edge_lengths():
    m = build_mesh(Domain1D(((0.0, 0.95),)), 10)
    op = LocalOperator(m, 2.0)
    u = np.zeros(m.n)
    u[-1] = 1.0
    # last node at 0.9, endpoint at 0.95: edge of length 0.05 plus one of length h
    assert op.pow(u) == pytest.approx(1 / 0.05 + 1 / m.h)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(1.2, 4.0), st.floats(-3, 3).filter(lambda c: abs(c) > 1e-3))
def test_homogeneity_property(s, a, c):
    m = cached_mesh(SPLIT.intervals, 8)
    op = assemble(m, s, a)
    u = np.cos(np.arange(m.n))
    assert op.pow(c * u) == pytest.approx(abs(c) ** a * op.pow(u), rel=1e-11)
