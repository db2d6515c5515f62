import json
import math

import numpy as np
import pytest

from nmat.boundary import (
    BoundarySolution,
    ConformalMap,
    SolverOptions,
    ThetaCoefficients,
    boundary_curve,
    build_map,
    cauchy_project,
    closed_form_map,
    closed_form_power,
    closed_form_theta,
    mass,
    self_consistency,
    singular_mismatch,
    solve,
)
from nmat.errors import (
    BoundaryBreakdown,
    InvalidArgument,
    NonFinite,
    NoRealRoot,
    RootInsideDisk,
    SelfIntersection,
    ThetaNonPositive,
)
from nmat.potential import Potential, RadialProfile

GAUSS = RadialProfile.power(1, 1)
M = 1024
ZETA = np.exp(2j * np.pi * np.arange(64) / 64 + 0.1j)


def bisect_scalar(C, b, K, lo, hi, iters=300):
    """Oracle for the degree-one scalar equation by plain bisection."""

    def F(a):
        return C * b * a ** (-2 * b) + K**2 * a ** (2 * b - 2) * (1 - 1 / b) / (C * b) - 1

    flo = F(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.sign(F(mid)) == np.sign(flo):
            lo, flo = mid, F(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- cauchy_project ---------------------------------------------------------------


def test_cauchy_project_constant():
    c = cauchy_project(np.ones(M))
    assert c[0] == pytest.approx(1.0, abs=1e-15)
    assert np.abs(c[1:]).max() < 1e-15


def test_cauchy_project_cosine():
    phi = 2 * np.pi * np.arange(M) / M
    c = cauchy_project(2 * np.cos(phi))
    assert abs(c[0]) < 1e-15 and c[1] == pytest.approx(1.0, abs=1e-14)
    assert np.abs(c[2:]).max() < 1e-14


def test_cauchy_project_log_series():
    # h = log I^{-1}(theta) for b = 1, a = 1, beta = 0.2: log|1 + beta u|^2
    beta = 0.2
    u = np.exp(2j * np.pi * np.arange(M) / M)
    c = cauchy_project(np.log(np.abs(1 + beta * u) ** 2))
    k = np.arange(1, 40)
    series = (-1.0) ** (k + 1) * beta**k / k
    assert np.abs(c[1:40] - series).max() < 1e-10
    assert abs(c[0]) < 1e-14


def test_cauchy_project_nonfinite():
    h = np.ones(M)
    h[3] = np.inf
    with pytest.raises(NonFinite):
        cauchy_project(h)


# -- build_map --------------------------------------------------------------------


def test_build_map_circle():
    # theta = I(r^2) constant: f(zeta) = r / zeta, pole amplitude r, stored a = 1/r
    prof = RadialProfile.power(0.5, 2)
    r = 1.3
    fmap = build_map(ThetaCoefficients.constant(prof.moment(r * r)), prof, M)
    assert np.abs(fmap(ZETA * 0.7) - r / (ZETA * 0.7)).max() < 1e-12
    assert fmap.pole_amplitude == pytest.approx(r, rel=1e-14)
    assert fmap.a == pytest.approx(1 / r, rel=1e-14)
    assert np.abs(fmap.c[1:]).max() < 1e-14


def test_build_map_worked_case():
    theta = ThetaCoefficients(np.array([1.04, 0.2]))  # (1 + 0.2 z)(1 + 0.2 / z)
    fmap = build_map(theta, GAUSS, M)
    for rho in (1.0, 0.6):
        z = rho * ZETA
        assert np.abs(fmap(z) - (1 + 0.2 * z) / z).max() < 1e-10


def test_build_map_matches_closed_form_map():
    C, b, K = 1.0, 2.0, 0.3
    a, beta, _ = closed_form_power(C, b, K)
    fmap = build_map(closed_form_theta(C, b, a, beta), RadialProfile.power(C, b), M)
    ref = closed_form_map(C, b, a, [-1 / beta], M)
    # direct evaluation of (a zeta)^{-1} (1 + beta zeta)^{1/b}
    direct = (1 + beta * ZETA) ** (1 / b) / (a * ZETA)
    assert np.abs(fmap(ZETA) - direct).max() < 1e-8
    assert np.abs(ref(ZETA) - direct).max() < 1e-12


def test_build_map_theta_nonpositive():
    with pytest.raises(ThetaNonPositive):
        build_map(ThetaCoefficients(np.array([1.0, 0.6])), GAUSS, M)


# -- self consistency, mismatch, mass ----------------------------------------------------


def test_self_consistency_examples():
    circ = build_map(ThetaCoefficients.constant(1.0), GAUSS, M)
    assert self_consistency(circ, ThetaCoefficients.constant(1.0), GAUSS) < 1e-14
    theta = ThetaCoefficients(np.array([1.04, 0.2]))
    fmap = build_map(theta, GAUSS, M)
    assert self_consistency(fmap, theta, GAUSS) < 1e-10
    c = fmap.c.copy()
    c[1] += 1e-3
    assert self_consistency(ConformalMap(fmap.a, c), theta, GAUSS) > 1e-6


def test_singular_mismatch_examples():
    pot0 = Potential(GAUSS)
    circ = build_map(ThetaCoefficients.constant(1.0), GAUSS, M)
    assert singular_mismatch(ThetaCoefficients.constant(1.0), circ, pot0).size == 0
    pot = Potential(GAUSS, (0.2,))
    theta = ThetaCoefficients(np.array([1.04, 0.2]))
    fmap = build_map(theta, GAUSS, M)
    assert np.abs(singular_mismatch(theta, fmap, pot)).max() < 1e-12
    # beta perturbed to 0.25: theta residue 0.25, f P'(f) residue still K/... = 0.2
    theta2 = ThetaCoefficients(np.array([1 + 0.25**2, 0.25]))
    mm = singular_mismatch(theta2, build_map(theta2, GAUSS, M), pot)
    assert mm[0].real == pytest.approx(0.05, abs=1e-10)
    assert abs(mm[0].imag) < 1e-12


def test_mass_examples():
    circ = build_map(ThetaCoefficients.constant(1.0), GAUSS, M)
    assert mass(ThetaCoefficients.constant(1.0), circ) == pytest.approx(1.0, abs=1e-14)
    theta = ThetaCoefficients(np.array([1.04, 0.2]))
    fmap = build_map(theta, GAUSS, M)
    re, im = mass(theta, fmap, return_imag=True)
    assert re == pytest.approx(1.0, abs=1e-10) and abs(im) < 1e-10
    assert mass(ThetaCoefficients.constant(2.0), circ) == pytest.approx(2.0, abs=1e-14)


# -- solve ------------------------------------------------------------------------------


@pytest.mark.parametrize("C,b", [(1, 1), (2, 1), (1, 0.5), (0.5, 2), (0.7, 1.3)])
def test_solve_disk(C, b):
    sol = solve(Potential(RadialProfile.power(C, b)))
    r = (C * b) ** (-1 / (2 * b))
    assert np.abs(np.abs(sol.curve) - r).max() < 1e-8
    assert sol.map.pole_amplitude == pytest.approx(r, rel=1e-12)


def test_solve_disk_generalized():
    prof = RadialProfile.generalized((-2, 0.5, 1.5), 0.7)
    sol = solve(Potential(prof))
    assert np.abs(np.abs(sol.curve) - math.sqrt(prof.moment_inv(1.0))).max() < 1e-8


def test_solve_worked_case_center():
    sol = solve(Potential(GAUSS, (0.2,)))
    assert np.abs(np.abs(sol.curve - 0.2) - 1.0).max() < 1e-10


@pytest.mark.parametrize("C,b,K", [(1, 1, 0.2), (0.5, 2, 0.1), (1, 2, 0.3), (1, 0.5, 0.1)])
def test_solve_matches_closed_form(C, b, K):
    sol = solve(Potential(RadialProfile.power(C, b), (K,)))
    a, beta, _ = closed_form_power(C, b, K)
    theta = closed_form_theta(C, b, a, beta)
    assert sol.a == pytest.approx(a, abs=1e-8)
    assert abs(sol.theta.coefficient(0) - theta.coefficient(0)) < 1e-8
    assert abs(sol.theta.coefficient(1) - theta.coefficient(1)) < 1e-8


def test_solve_residuals(solved_cases):
    for name, (pot, sol) in solved_cases.items():
        assert sol.residuals["self_consistency"] < 1e-8, name
        assert sol.residuals["mass"] < 1e-8, name
        assert sol.residuals["singular"] < 1e-10, name


def test_rotation_covariance():
    s0 = solve(Potential(GAUSS, (0.2,)))
    phi = 0.7
    s1 = solve(Potential(GAUSS, (0.2 * np.exp(1j * phi),)))
    # P = K z with K -> K e^{i phi} moves the droplet center to conj(K): rotation by -phi
    rot = s0.curve * np.exp(-1j * phi)
    d = np.abs(rot[:, None] - s1.curve[None, :]).min(axis=1)
    assert d.max() < 1e-3  # polyline sampling, 512 points on a unit circle
    assert np.abs(np.abs(s1.curve - 0.2 * np.exp(-1j * phi)) - 1).max() < 1e-10


def test_continuation_step_independence():
    pot = Potential(RadialProfile.power(1, 2), (0.3,))
    a = solve(pot, SolverOptions(continuation_steps=8))
    b = solve(pot, SolverOptions(continuation_steps=16))
    assert np.abs(a.theta.params() - b.theta.params()).max() < 1e-9
    assert abs(a.a - b.a) < 1e-9


def test_breakdown():
    with pytest.raises(BoundaryBreakdown):
        solve(Potential(GAUSS, (5.0,)))


def test_solution_json_round_trip():
    pot = Potential(RadialProfile.power(1, 2), (0.3,))
    sol = solve(pot, fingerprint="abc")
    doc = json.loads(json.dumps(sol.to_json()))
    assert set(doc) >= {"a", "theta", "fourier", "curve", "residuals", "config_fingerprint"}
    back = BoundarySolution.from_json(doc, pot)
    assert back.a == sol.a
    assert np.array_equal(back.map.c, sol.map.c)
    assert np.array_equal(back.curve, sol.curve)


# -- closed forms -------------------------------------------------------------------------


def test_closed_form_trivial():
    a, beta, _ = closed_form_power(1, 1, 0)
    assert a == pytest.approx(1.0) and beta == 0
    a, beta, _ = closed_form_power(1, 1, 0.2)
    assert a == pytest.approx(1.0, abs=1e-15) and beta == pytest.approx(0.2, abs=1e-15)


@pytest.mark.parametrize("C,b,K", [(1, 2, 0.3), (0.5, 2, 0.1), (1, 0.5, 0.1), (2, 1.5, 0.4)])
def test_closed_form_matches_bisection(C, b, K):
    a, beta, fmap = closed_form_power(C, b, K)
    a0 = (C * b) ** (1 / (2 * b))
    lo, hi = (a0, 3 * a0) if b > 1 else (a0 / 3, a0)
    ref = bisect_scalar(C, b, K, lo, hi)
    assert a == pytest.approx(ref, rel=1e-12)
    assert C * b * beta * a ** (1 - 2 * b) == pytest.approx(K, abs=1e-12)
    theta = closed_form_theta(C, b, a, beta)
    assert mass(theta, fmap) == pytest.approx(1.0, abs=1e-10)
    # area condition written out
    assert C * b * a ** (-2 * b) * (1 + beta**2 * (1 - 1 / b)) == pytest.approx(1.0, abs=1e-12)


def test_closed_form_no_root():
    with pytest.raises(NoRealRoot):
        closed_form_power(1, 1, 1.5)


def test_closed_form_map_examples():
    a = 0.8
    f0 = closed_form_map(1, 1, a, [])
    assert np.abs(f0(ZETA) - 1 / (a * ZETA)).max() < 1e-14
    f1 = closed_form_map(1, 1, a, [-5.0])
    k = np.arange(1, 30)
    assert np.abs(f1.c[1:30] - (-1.0) ** (k + 1) * 0.2**k / k).max() < 1e-14
    assert np.abs(f1(ZETA) - (1 + 0.2 * ZETA) / (a * ZETA)).max() < 1e-12
    f2 = closed_form_map(1, 2, a, [3.0, -3.0])
    assert np.abs(f2(ZETA) ** 2 * (a * ZETA) ** 2 - (1 - ZETA**2 / 9)).max() < 1e-12
    with pytest.raises(RootInsideDisk):
        closed_form_map(1, 1, a, [0.5])


# -- boundary curve ---------------------------------------------------------------------


def test_boundary_curve_circle():
    circ = build_map(ThetaCoefficients.constant(GAUSS.moment(4.0)), GAUSS, M)
    pts = boundary_curve(circ, 4)
    assert np.abs(pts - np.array([2, 2j, -2, -2j])).max() < 1e-12
    # counterclockwise: positive signed area
    x, y = pts.real, pts.imag
    assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) > 0


def test_boundary_curve_worked_case():
    fmap = build_map(ThetaCoefficients(np.array([1.04, 0.2])), GAUSS, M)
    assert np.abs(np.abs(boundary_curve(fmap, 256) - 0.2) - 1).max() < 1e-10


def test_boundary_curve_errors():
    circ = build_map(ThetaCoefficients.constant(1.0), GAUSS, M)
    with pytest.raises(InvalidArgument):
        boundary_curve(circ, 0)
    # f = 1/zeta + 2 zeta^2 winds twice around, so the polyline crosses itself
    c = np.zeros(M, complex)
    c[3] = 2.0 + 0j
    loop = ConformalMap(1.0, c)
    with pytest.raises(SelfIntersection) as exc:
        boundary_curve(loop, 128)
    assert exc.value.curve is not None
