"""Explicit constants and the rough-coefficient parabolic solver."""

import math

import numpy as np
import pytest

from difflab import (ConstantsBundle, Field, GridSpec, ParabolicCylinder,
                     ParameterError, RoughCoefficient, Trajectory,
                     alpha_practical, explicit_constants, fitted_prefactor,
                     fitted_moment_prefactor, forcing_constant, full_mask,
                     holder_bound_check, initial_oscillation_check,
                     iteration_c1, iteration_lambda, k2_constant,
                     k3_constant, kernel_evolve, oscillation_decay_check,
                     shrunk_radius, solve_rough, supremum_bound_check,
                     unit_ball_volume)

INF = float("inf")
ORACLE_RTOL = 5e-12      # twelve significant digits
ORDER_TOL = 1e-10        # discrete comparison-principle slack
EXACT_TOL = 1e-10

# Frozen reference values for the closed-form constants, computed once with
# 50-digit arithmetic and rounded to 13 significant digits.  Columns:
# d, p, q, a0, c0, gamma, beta, delta, A, alpha, K1.
CONSTANTS_ORACLE = [
    (1, INF, INF, 1.0, 1.0,
     2.0, 0.245, 3.476520811331e-4, 0.1953125, 2.508215685496e-4, 1.0),
    (1, INF, 2, 1.0, 2.0,
     1.5, 0.245, 1.278940533293e-4, 0.4658474953125, 9.226195825239e-5,
     1.333333333333),
    (1, 4, 4, 0.5, 3.0,
     1.25, 0.1225, 4.704959286795e-5, 0.1827326370811, 3.393990558885e-5,
     1.051373884203),
    (2, INF, INF, 1.0, 2.0,
     2.0, 0.1225, 6.198024405288e-6, 0.09765625, 4.470943391931e-6, 1.0),
    (2, 4, 8, 1.0, 1.0,
     1.25, 0.1225, 4.579755003321e-5, 0.2678850402843, 3.303670566476e-5,
     1.146531350645),
    (2, 10, 5, 2.0, 1.5,
     1.4, 0.245, 1.684797711324e-5, 0.8088840981535, 1.215334889510e-5,
     1.440243824127),
    (3, INF, 4, 1.0, 2.0,
     1.25, 0.08166666666667, 2.484037947438e-7, 0.3762805076056,
     1.791854836626e-7, 1.6),
    (3, 8, 8, 0.25, 4.0,
     1.375, 0.02041666666667, 6.157314469134e-10, 0.02806512512684,
     4.441563526274e-10, 0.9522635988253),
    (3, 4, 12, 3.0, 1.0,
     1.25, 0.245, 4.989323591187e-6, 0.9417446246000, 3.599045179606e-6,
     1.315303850134),
    (4, INF, INF, 1.0, 1.0,
     2.0, 0.06125, 5.059611759419e-7, 0.048828125, 3.649739320382e-7, 1.0),
    (4, 8, 16, 1.0, 2.0,
     1.5, 0.06125, 9.267002190271e-9, 0.1296312551694, 6.684729082879e-9,
     1.144401559423),
    (4, 6, 24, 0.5, 5.0,
     1.5, 0.030625, 5.693842933578e-14, 0.04327633278908,
     4.107239481937e-14, 1.030493861659),
]


# ---------------------------------------------------------------------------
# constants


def test_constants_against_oracle_table():
    for row in CONSTANTS_ORACLE:
        d, p, q, a0, c0 = row[:5]
        c = explicit_constants(int(d), p, q, a0, c0)
        got = (c.gamma, c.beta, c.delta, c.A, c.alpha, c.K1)
        for name, g, want in zip(
                ("gamma", "beta", "delta", "A", "alpha", "K1"), got, row[5:]):
            assert g == pytest.approx(want, rel=ORACLE_RTOL), \
                f"{name} for (d,p,q,a0,c0)={row[:5]}"


def test_constants_closed_forms():
    for d in (1, 2, 3, 4):
        c = explicit_constants(d, INF, INF, 1.0, 1.0)
        assert c.gamma == 2.0
        assert c.beta == pytest.approx(49.0 / (200.0 * d), rel=1e-15)
    c = explicit_constants(1, INF, INF, 1.0, 1.0)
    assert c.beta == pytest.approx(0.245, rel=1e-15)
    # the sandwich parameters always satisfy 0 < delta < 1 < c0 a0 / a0
    for row in CONSTANTS_ORACLE:
        c = explicit_constants(int(row[0]), row[1], row[2], row[3], row[4])
        assert 0.0 < c.delta < 1.0
        assert 0.0 < c.alpha <= min(c.gamma, 0.5)
        assert c.A > 0.0
        assert c.K1 > 0.0


def test_constants_reject_supercritical_exponents():
    with pytest.raises(ParameterError):
        explicit_constants(2, 2.0, 2.0, 1.0, 1.0)   # gamma = 0
    with pytest.raises(ParameterError):
        explicit_constants(3, 2.0, 2.0, 1.0, 1.0)   # gamma < 0
    with pytest.raises(ParameterError):
        explicit_constants(2, INF, INF, 0.0, 1.0)   # a0 must be positive
    with pytest.raises(ParameterError):
        explicit_constants(2, INF, INF, 1.0, 0.5)   # c0 must be >= 1


def test_constants_to_dict_round_trip():
    c = explicit_constants(2, 4.0, 8.0, 1.0, 1.0)
    d = c.to_dict()
    assert d["gamma"] == c.gamma and d["delta"] == c.delta
    assert set(d) == {"d", "p", "q", "a0", "c0", "gamma", "beta", "delta",
                      "A", "alpha", "K1"}


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0)


def test_iteration_lambda_arithmetic():
    # hand-checkable configuration: gamma = 1/2, delta = 3.4765e-4, eps = 1/4
    c = ConstantsBundle(d=2, p=2.0, q=4.0, a0=1.0, c0=1.0, gamma=0.5,
                        beta=0.245, delta=3.476520811331e-4, A=0.1,
                        alpha=2.5e-4, K1=1.0)
    lam = iteration_lambda(c, 0.25)
    assert lam == pytest.approx(0.99983, abs=1e-5)
    assert lam == pytest.approx(1.0 - c.delta / 2.0, rel=1e-12)
    # for gamma = 2 the geometric factors dominate nothing either
    c2 = explicit_constants(2, INF, INF, 1.0, 2.0)
    lam2 = iteration_lambda(c2, 0.25)
    assert lam2 == pytest.approx(1.0 - c2.delta / 2.0, rel=1e-12)
    assert 0.0 < lam2 < 1.0


def test_derived_constants_monotone_and_positive():
    c = explicit_constants(2, INF, INF, 1.0, 2.0)
    k2a = k2_constant(c, 0.25, 0.1, 1.0)
    k2b = k2_constant(c, 0.25, 0.4, 1.0)
    assert 0.0 < k2a <= k2b            # longer horizon, larger constant
    k3 = k3_constant(c, 2.0)
    assert k3 > 0.0
    cf = forcing_constant(c, 2.0)
    assert cf > 0.0
    c1 = iteration_c1(c, k2a, k3, cf, 0.3, 0.25)
    assert c1 >= 1.0
    rf = shrunk_radius(c, 0.3, 0.5, 1.0, 1.0)
    assert 0.0 < rf <= 0.3
    assert alpha_practical(c) >= c.alpha


# ---------------------------------------------------------------------------
# solver exact cases


def test_rough_coefficient_validation():
    mask = full_mask(GridSpec.make((1.0,), 17))
    with pytest.raises(ParameterError):
        RoughCoefficient(Field.constant(mask, 3.0), 1.0, 2.0)
    with pytest.raises(ParameterError):
        RoughCoefficient(1.0, -1.0, 2.0)
    with pytest.raises(ParameterError):
        RoughCoefficient(1.0, 1.0, 0.9)
    coeff = RoughCoefficient(Field.constant(mask, 1.5), 1.0, 2.0)
    assert np.all(coeff.at(0.0, mask) == 1.5)


def test_rough_coefficient_time_frames():
    mask = full_mask(GridSpec.make((1.0,), 9))
    a_traj = Trajectory(mask, np.array([0.0, 0.5]),
                        np.vstack([np.ones(9), 2.0 * np.ones(9)]))
    coeff = RoughCoefficient(a_traj, 1.0, 2.0)
    assert np.all(coeff.at(0.4, mask) == 1.0)   # left frame rule
    assert np.all(coeff.at(0.6, mask) == 2.0)


def test_solve_constant_state_is_fixed_point():
    mask = full_mask(GridSpec.make((1.0, 1.0), 17))
    coeff = RoughCoefficient(1.3, 1.0, 2.0)
    sol = solve_rough(Field.constant(mask, 0.7), coeff, t_end=0.2,
                      n_frames=9)
    assert np.max(np.abs(sol.traj.values - 0.7)) <= EXACT_TOL
    assert sol.dtw_negative_fraction == 0.0


def test_solve_uniform_forcing_linear_in_time():
    # a dw/dt = lap w + f with w0 = 0, a = 2, f = 2 stays flat: w(t) = t
    mask = full_mask(GridSpec.make((1.0,), 33))
    coeff = RoughCoefficient(2.0, 2.0, 1.0)
    sol = solve_rough(Field.constant(mask, 0.0), coeff, forcing=2.0,
                      t_end=0.5, n_frames=17)
    for k, t in enumerate(sol.traj.times):
        assert np.max(np.abs(sol.traj.values[k] - t)) <= EXACT_TOL


def test_solve_matches_kernel_on_pure_heat():
    # a = 1 with a node delta reproduces the kernel bench run for run
    mask = full_mask(GridSpec.make((1.0, 1.0), 25))
    kern = kernel_evolve(mask, (0.5, 0.5), 0.05, n_frames=17)
    delta = np.zeros(mask.active_count)
    full = np.zeros(mask.grid.n)
    full[mask.nearest_node((0.5, 0.5))] = 1.0
    delta[mask.gather(full) > 0] = 1.0 / mask.grid.h ** 2
    sol = solve_rough(Field(mask, delta), RoughCoefficient(1.0, 1.0, 1.0),
                      t_end=0.05, n_frames=17)
    # frame selection differs between the two benches; compare the frames
    # recorded at identical times
    shared = 0
    for k, t in enumerate(sol.traj.times):
        j = np.argmin(np.abs(kern.times - t))
        if abs(kern.times[j] - t) < 1e-12:
            shared += 1
            assert np.max(np.abs(sol.traj.values[k] - kern.values[j])) \
                <= 1e-12 * kern.values.max()
    assert shared >= 2   # at least t = 0 and t = t_end coincide


def test_solve_rejects_unstable_dt():
    mask = full_mask(GridSpec.make((1.0,), 17))
    coeff = RoughCoefficient(1.0, 1.0, 2.0)
    with pytest.raises(ParameterError):
        solve_rough(Field.constant(mask, 0.0), coeff, t_end=0.1,
                    dt=mask.grid.h ** 2)
    with pytest.raises(ParameterError):
        solve_rough(Field.constant(mask, 0.0), coeff, t_end=0.0)


# ---------------------------------------------------------------------------
# discrete comparison principles (exact for the monotone explicit step)


def test_comparison_in_the_forcing():
    rng = np.random.default_rng(7)
    mask = full_mask(GridSpec.make((1.0, 1.0), 25))
    n = mask.active_count
    coeff = RoughCoefficient(Field(mask, 1.0 + rng.random(n)), 1.0, 2.0)
    w0 = Field(mask, rng.random(n))
    f2 = Field(mask, rng.standard_normal(n))
    f1 = Field(mask, f2.values - np.abs(rng.standard_normal(n)))
    s1 = solve_rough(w0, coeff, forcing=f1, t_end=0.05, n_frames=33)
    s2 = solve_rough(w0, coeff, forcing=f2, t_end=0.05, n_frames=33)
    assert float(np.max(s1.traj.values - s2.traj.values)) <= ORDER_TOL


def test_coefficient_sandwich():
    # constant data + nonnegative forcing make dw/dt >= 0, so the solution
    # with the uniformly smallest clock rate dominates pointwise
    rng = np.random.default_rng(13)
    mask = full_mask(GridSpec.make((1.0, 1.0), 25))
    n = mask.active_count
    a_mid = Field(mask, 1.0 + rng.random(n))
    f = Field(mask, np.abs(rng.standard_normal(n)))
    w0 = Field.constant(mask, 0.3)
    lo = solve_rough(w0, RoughCoefficient(2.0, 1.0, 2.0), forcing=f,
                     t_end=0.05, n_frames=33)
    mid = solve_rough(w0, RoughCoefficient(a_mid, 1.0, 2.0), forcing=f,
                      t_end=0.05, n_frames=33)
    hi = solve_rough(w0, RoughCoefficient(1.0, 1.0, 2.0), forcing=f,
                     t_end=0.05, n_frames=33)
    assert lo.steps == mid.steps == hi.steps
    assert float(np.max(lo.traj.values - mid.traj.values)) <= ORDER_TOL
    assert float(np.max(mid.traj.values - hi.traj.values)) <= ORDER_TOL


# ---------------------------------------------------------------------------
# estimate checks


def _rough_run(seed=42, n=33, t_end=0.06, forcing=None):
    rng = np.random.default_rng(seed)
    mask = full_mask(GridSpec.make((1.0, 1.0), n))
    consts = explicit_constants(2, INF, INF, 1.0, 2.0)
    a = Field(mask, 1.0 + rng.random(mask.active_count))
    w0 = Field(mask, 0.5 + 0.5 * rng.random(mask.active_count))
    sol = solve_rough(w0, RoughCoefficient(a, 1.0, 2.0), forcing=forcing,
                      t_end=t_end, n_frames=129)
    cyl = ParabolicCylinder(t0=t_end, x0=(0.5, 0.5), radius=0.3,
                            shape=consts.beta)
    return sol, consts, w0, cyl


def test_oscillation_decay_unforced():
    sol, consts, w0, cyl = _rough_run()
    rep = oscillation_decay_check(sol, cyl, consts)
    assert rep.passed
    assert rep.lhs <= rep.rhs
    # the quarter-cylinder oscillation really is much smaller here
    assert rep.lhs <= 0.5 * rep.rhs


def test_supremum_bound_unforced_is_exact():
    sol, consts, w0, _ = _rough_run()
    rep = supremum_bound_check(sol, consts, w0)
    assert rep.passed
    assert rep.lhs <= np.max(np.abs(w0.values)) + 1e-12


def test_supremum_bound_forced_saturates():
    # f = 1, a = 1, w0 = 0 up to T = 1 gives sup w = 1.0 exactly, and the
    # p = q = inf bound 1 * T^(gamma/2) matches it
    mask = full_mask(GridSpec.make((1.0,), 33))
    consts = explicit_constants(1, INF, INF, 1.0, 1.0)
    w0 = Field.constant(mask, 0.0)
    sol = solve_rough(w0, RoughCoefficient(1.0, 1.0, 1.0), forcing=1.0,
                      t_end=1.0, n_frames=17)
    rep = supremum_bound_check(sol, consts, w0, forcing=1.0)
    assert rep.passed
    assert rep.lhs == pytest.approx(1.0, abs=1e-12)
    assert rep.rhs == pytest.approx(1.0, abs=1e-9)


def test_supremum_bound_nonpositive_forcing():
    rng = np.random.default_rng(3)
    mask = full_mask(GridSpec.make((1.0, 1.0), 25))
    f = Field(mask, -np.abs(rng.standard_normal(mask.active_count)))
    w0 = Field(mask, rng.random(mask.active_count))
    sol = solve_rough(w0, RoughCoefficient(1.0, 1.0, 2.0), forcing=f,
                      t_end=0.05, n_frames=33)
    assert float(np.max(sol.traj.values)) <= float(np.max(w0.values)) \
        + ORDER_TOL


def test_holder_bound_calibration_and_tracer():
    sol, consts, w0, _ = _rough_run()
    kern = kernel_evolve(sol.traj.mask, (0.5, 0.5), 0.06, n_frames=33)
    kp = fitted_prefactor(kern, 1.0, t_hi=0.06)
    mp = fitted_moment_prefactor(kern, 0.25, t_hi=0.06)
    rep = holder_bound_check(sol, consts, w0, r0=0.3, kernel_prefactor=kp,
                             moment_prefactor=mp)
    assert rep.passed
    assert rep.params["mode"] == "calibration"
    assert rep.lhs == pytest.approx(rep.rhs, rel=1e-12)   # fitted equality
    assert rep.details["tracer"]
    assert all(row["pass"] for row in rep.details["tracer"])
    assert 0.0 < rep.details["lambda"] < 1.0

    # verification mode with headroom passes, without headroom fails
    c_star = rep.params["c_star"]
    ver = holder_bound_check(sol, consts, w0, r0=0.3, kernel_prefactor=kp,
                             moment_prefactor=mp, c_star=1.5 * c_star)
    assert ver.passed and ver.params["mode"] == "verification"
    bad = holder_bound_check(sol, consts, w0, r0=0.3, kernel_prefactor=kp,
                             moment_prefactor=mp, c_star=0.5 * c_star)
    assert not bad.passed


def test_initial_oscillation_check_smoke():
    sol, consts, w0, cyl = _rough_run()
    kern = kernel_evolve(sol.traj.mask, (0.5, 0.5), 0.06, n_frames=33)
    kp = fitted_prefactor(kern, 1.0, t_hi=0.06)
    mp = fitted_moment_prefactor(kern, 0.25, t_hi=0.06)
    rep = initial_oscillation_check(sol, consts, w0, cyl, 0.25, mp, kp)
    assert rep.passed
    assert rep.lhs <= rep.rhs
    assert np.isfinite(rep.rhs)
