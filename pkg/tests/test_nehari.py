import functools

import numpy as np
import pytest

from fracpq import energies as E
from fracpq import nehari as N
from fracpq.eigsolve import lambda1, lambda2_minimax
from fracpq.errors import ValidationError

from conftest import SPLIT, SYM, cached_bundle


@functools.lru_cache(maxsize=None)
def ground(intervals=SYM.intervals, n=32, s=0.5, p=3.0, q=2.0):
    b0 = cached_bundle(intervals, n, s, p, q)
    return b0, lambda1(b0, tol=1e-10)


def test_fibering_algebra():
    fd = N.fibering_from_values(1.0, 2.0, 3.0, 2.0)
    assert fd.t0 == pytest.approx(2.0)
    assert fd.xi(2.0) == pytest.approx(0.0, abs=1e-14)
    fd = N.fibering_from_values(-0.5, 2.0, 3.0, 2.0)
    assert fd.t0 is None and fd.level() is None
    assert np.all(fd.xi(np.linspace(0.01, 100, 50)) > 0)


def test_fibering_sign_structure_and_nehari_point(rng):
    b0, r1 = ground()
    b = b0.replace(mu=1.0)
    lam = 1.5 * r1.lambda_est
    w = r1.eigenfunction.values * (1 + 0.1 * rng.standard_normal(b.mesh.n))
    fd = N.fibering(b, w, lam)
    assert fd.A > 0 and fd.B > 0
    t = np.linspace(0, 3 * fd.t0, 101)[1:]
    xi = fd.xi(t)
    assert np.all(xi[t < fd.t0 * (1 - 1e-9)] > 0) and np.all(xi[t > fd.t0 * (1 + 1e-9)] < 0)
    u = fd.t0 * w
    scale = E.functional_I(b, u) + E.q_energy(b, u)
    assert abs(N.nehari_pairing(b, u, lam)) <= 1e-10 * scale
    assert E.lagrangian_J_functional(b, u, lam) == pytest.approx(fd.level(), rel=1e-10)
    assert N.energy_identity_defect(b, u, lam) <= 1e-10


def test_fibering_requires_mu():
    b0, r1 = ground()
    with pytest.raises(ValidationError):
        N.fibering(b0, r1.eigenfunction, 2.0)


@pytest.mark.parametrize("intervals", [SYM.intervals, SPLIT.intervals])
def test_certificate_soundness(intervals):
    b0, r1 = ground(intervals, 20, 0.5, 2.5, 1.5)
    b = b0.replace(mu=1.0)
    for eps in (0.01, 0.1, 0.5):
        cert = N.nonexistence_certificate(b, (1 - eps) * r1.lambda_est, trials=300, probes=[r1.eigenfunction])
        assert cert.passed and cert.passed_count == 300
    cert = N.nonexistence_certificate(b, 1.01 * r1.lambda_est, trials=10, probes=[r1.eigenfunction])
    assert not cert.passed and cert.probe_margins[0] > 0
    assert N.nonexistence_certificate(b, 0.0, trials=50).passed
    with pytest.raises(ValidationError):
        N.nonexistence_certificate(b, 1.0, trials=0)


def test_solve_m_lambda_contract():
    b0, r1 = ground()
    b = b0.replace(mu=1.0)
    lam = 1.5 * r1.lambda_est
    rep = N.solve_m_lambda(b, lam, tol=1e-8, init=r1.eigenfunction)
    assert rep.converged
    assert rep.nehari_residual <= 1e-8 and rep.eigen_residual <= 1e-7
    assert rep.energy_identity_defect <= 1e-8
    assert rep.m_lambda >= 1e-12 and rep.sign_profile == "positive"
    u = rep.minimizer.values
    assert np.min(u) > -1e-8 * np.max(np.abs(u))
    levels = [N.solve_m_lambda(b, lam, tol=1e-8, seed=sd, init=r1.eigenfunction).m_lambda for sd in (1, 2)]
    assert np.allclose(levels, rep.m_lambda, rtol=1e-4)
    doubled = N.solve_m_lambda(b.replace(mu=2.0), lam, tol=1e-8, init=r1.eigenfunction)
    assert doubled.m_lambda > rep.m_lambda


def test_solve_m_lambda_without_init_uses_bump():
    b0, r1 = ground()
    rep = N.solve_m_lambda(b0.replace(mu=0.5), 1.3 * r1.lambda_est, tol=1e-8)
    assert rep.converged and rep.sign_profile == "positive"


def test_nehari_empty_below_lambda1():
    b0, r1 = ground()
    with pytest.raises(N.NehariEmptyError, match="Nehari manifold empty"):
        N.solve_m_lambda(b0.replace(mu=1.0), 0.95 * r1.lambda_est, init=r1.eigenfunction)


def test_minimum_is_below_random_nehari_points(rng):
    b0, r1 = ground()
    b = b0.replace(mu=1.0)
    lam = 1.5 * r1.lambda_est
    m = N.solve_m_lambda(b, lam, init=r1.eigenfunction).m_lambda
    for _ in range(50):
        w = r1.eigenfunction.values + 0.2 * rng.standard_normal(b.mesh.n) * r1.eigenfunction.values
        fd = N.fibering(b, w, lam)
        if fd.t0 is not None:
            assert fd.level() >= m * (1 - 1e-10)


def test_sign_changing_probe_collapses_inside_band():
    b0, r1 = ground(n=16)
    r2 = lambda2_minimax(b0, tol=1e-9, lambda1_report=r1)
    lam = 0.5 * (r1.lambda_est + r2.lambda_est)
    b = b0.replace(mu=1.0)
    outcomes = [N.sign_changing_probe(b, lam, seed=sd, u1=r1.eigenfunction).outcome for sd in range(3)]
    assert all(o == "collapsed" for o in outcomes)
    rep = N.sign_changing_probe(b0.replace(mu=0.01), lam, start=r2.eigenfunction)
    assert rep.outcome == "ray_condition_failed" and min(rep.start_margins) < 0
