import numpy as np
import pytest

from latentflow.exceptions import NumericalError, ValidationError
from latentflow.flowmatch import GaussianTransportSpec, gaussian_oracle_velocity
from latentflow.odesolver import SolverConfig, dopri5_step, solve


def test_step_zero_rhs_is_exact():
    z = np.array([1.0, -2.0])
    z5, err, _ = dopri5_step(lambda z, t: np.zeros_like(z), z, 0.0, 0.1)
    np.testing.assert_array_equal(z5, z)
    np.testing.assert_array_equal(err, 0.0)


def test_step_constant_rhs_is_exact():
    c = np.array([2.0, -0.5])
    z = np.zeros(2)
    z5, err, _ = dopri5_step(lambda z, t: c, z, 0.0, 0.25)
    np.testing.assert_allclose(z5, 0.25 * c, rtol=0, atol=1e-15)
    np.testing.assert_allclose(err, 0.0, atol=1e-16)


def test_step_matches_analytic_exponential():
    z5, _, _ = dopri5_step(lambda z, t: -z, np.array(1.0), 0.0, 0.1)
    assert abs(float(z5) - np.exp(-0.1)) <= 1e-9
    assert abs(float(z5) - 0.9048374) <= 1e-7


def test_step_reports_non_finite_stage():
    def rhs(z, t):
        return np.full_like(z, np.nan) if t > 0.0 else np.zeros_like(z)

    with pytest.raises(NumericalError, match="stage"):
        dopri5_step(rhs, np.array([1.0]), 0.0, 0.1)


def test_solve_zero_rhs_bit_exact_with_step_cap():
    z0 = np.array([0.25, -1.5, 3.75])
    z1, stats = solve(lambda z, t: np.zeros_like(z), z0)
    assert np.array_equal(z0, z1)
    assert stats.accepted == 10  # max step 0.1 over the unit interval


def test_solve_exponential_decay_meets_tolerance():
    z1, stats = solve(lambda z, t: -z, np.array(1.0))
    assert abs(float(z1) - np.exp(-1.0)) <= 1e-6
    assert abs(float(z1) - 0.3678794) <= 1e-6
    assert stats.accepted >= 10


def test_accepted_steps_at_least_interval_over_max_step():
    for rhs in (lambda z, t: np.zeros_like(z), lambda z, t: -z, lambda z, t: np.sin(10 * t) * z):
        _, stats = solve(rhs, np.array(1.0), cfg=SolverConfig(max_step=0.1))
        assert stats.accepted >= 10


def test_halving_tolerances_never_increases_error():
    errors = []
    tol = 1e-3
    while tol >= 1e-7:
        cfg = SolverConfig(abs_tol=tol, rel_tol=tol, max_step=1.0)
        z1, _ = solve(lambda z, t: -z, np.array(1.0), cfg=cfg)
        errors.append(abs(float(z1) - np.exp(-1.0)))
        tol /= 2.0
    assert all(b <= a + 1e-15 for a, b in zip(errors, errors[1:]))


def test_global_error_scales_with_tolerance():
    errs = []
    for tol in (1e-3, 1e-5, 1e-7):
        cfg = SolverConfig(abs_tol=tol, rel_tol=tol, max_step=1.0)
        z1, _ = solve(lambda z, t: -z, np.array(1.0), cfg=cfg)
        errs.append(abs(float(z1) - np.exp(-1.0)))
    assert errs[0] > errs[1] > errs[2]


def test_gaussian_oracle_flow_maps_prior_quantiles_to_posterior():
    spec = GaussianTransportSpec(a=0.0, s=1.0, b=3.0, r=1.0)
    rhs = lambda z, t: gaussian_oracle_velocity(spec, t, z)
    for k in (0.0, 1.0, 2.0):
        for sign in (1.0, -1.0):
            z0 = np.array(spec.a + sign * k * spec.s)
            z1, _ = solve(rhs, z0)
            target = spec.b + sign * k * spec.r
            assert abs(float(z1) - target) <= 1e-3


def test_solve_nan_state_reports_last_t():
    def rhs(z, t):
        return np.full_like(z, 1e4) * z  # explodes

    with pytest.raises(NumericalError):
        solve(rhs, np.array(1.0), cfg=SolverConfig(max_rejected=5))


def test_final_step_lands_exactly_on_t1():
    _, stats = solve(lambda z, t: -z, np.array(1.0), cfg=SolverConfig(max_step=0.3))
    assert sum(stats.step_sizes) == pytest.approx(1.0, abs=1e-12)


def test_config_validation():
    with pytest.raises(ValidationError):
        SolverConfig(max_step=0.0).validate()
    with pytest.raises(ValidationError):
        SolverConfig(abs_tol=-1.0).validate()
    with pytest.raises(ValidationError):
        solve(lambda z, t: z, np.array(1.0), t0=1.0, t1=0.0)
