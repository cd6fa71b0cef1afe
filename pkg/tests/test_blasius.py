"""Shooting solve of the similarity profile and the self-similar rescaling."""

from __future__ import annotations

import io

import numpy as np
import pytest

from prandtl3d.blasius import (
    FPP0_REFERENCE,
    RescaleParams,
    _shoot_end,
    rescale,
    solve_blasius,
    write_profile_csv,
)
from prandtl3d.errors import NonConvergence

# Frozen output of notes/oracle_blasius.py: independent plain-Python RK4 at
# half the default step (5e-4), secant-refined until the end defect hit
# machine zero.  Computed once; do not regenerate casually.
ORACLE_FPP0 = 0.4695999883610211


@pytest.fixture(scope="module")
def profile():
    return solve_blasius()


def test_shoot_parameter_against_half_step_oracle(profile):
    assert abs(profile.fpp0 - ORACLE_FPP0) < 1e-6


def test_shoot_parameter_against_classical_value(profile):
    assert abs(profile.fpp0 - FPP0_REFERENCE) < 1e-4


def test_ode_residual_from_recovered_third_derivative(profile):
    assert profile.residual_max() < 1e-8


def test_fd_third_derivative_consistency_is_second_order(profile):
    coarse = solve_blasius(step=2e-3)
    fine = profile.fd_consistency()
    ratio = coarse.fd_consistency() / fine
    assert fine < 1e-6
    assert 3.0 < ratio < 5.0


def test_wall_and_far_field_values(profile):
    assert profile.f[0] == 0.0
    assert profile.fp[0] == 0.0
    assert profile.fpp[0] == profile.fpp0
    assert 1.0 - 1e-8 <= profile.fp[-1] <= 1.0


def test_profile_monotonicity(profile):
    assert np.all(np.diff(profile.one_minus_fp) < 0)
    assert np.all(profile.fpp > 0)
    assert np.all(np.diff(profile.f) > 0)


def test_complement_keeps_relative_precision_deep_into_tail(profile):
    # The tracked complement must follow the Gaussian tail far below the
    # resolution of 1 - (stored f'), which saturates near 1e-16.
    i = int(round(12.0 / profile.step))
    assert 0 < profile.one_minus_fp[i] < 1e-25


def test_tail_fit_and_ratio_bounds(profile):
    C, c = profile.tail_fit(6.0, 10.0)
    assert -1.3 < C < -1.1
    r = profile.tail_ratio(C, c, lo=5.0, hi=12.0)
    assert 0.9 < r.min() and r.max() < 1.2


def test_bisection_monotonicity_property(profile):
    n = int(round(profile.zeta_max / profile.step))
    g0 = _shoot_end(profile.fpp0, profile.step, n)
    g_up = _shoot_end(profile.fpp0 + 1e-6, profile.step, n)
    g_dn = _shoot_end(profile.fpp0 - 1e-6, profile.step, n)
    # larger shot parameter -> faster rise of f' -> smaller complement
    assert g_up < g0 < g_dn


def test_preconditions_rejected():
    with pytest.raises(ValueError):
        solve_blasius(zeta_max=8.0)
    with pytest.raises(ValueError):
        solve_blasius(step=0.05)
    with pytest.raises(ValueError):
        solve_blasius(tol=1e-6)


def test_bad_bracket_raises_nonconvergence():
    with pytest.raises(NonConvergence):
        solve_blasius(bracket=(0.6, 0.8))


def test_csv_round_trip(profile):
    buf = io.StringIO()
    write_profile_csv(profile, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "zeta,f,fp,fpp"
    assert lines[-1].startswith("# fpp0=")
    assert float(lines[-1].split("=")[1]) == profile.fpp0
    assert len(lines) == len(profile.zeta_grid) + 2
    row = lines[1 + 1000].split(",")
    assert float(row[0]) == pytest.approx(profile.zeta_grid[1000])
    assert float(row[2]) == pytest.approx(profile.fp[1000], rel=1e-15)


def test_rescale_requires_group_constraint():
    with pytest.raises(ValueError):
        RescaleParams(a=1.0, b=2.0, k=1.0)
    RescaleParams(a=4.0, b=2.0, k=1.0)  # admissible


def test_rescale_identity(profile):
    s = rescale(profile, RescaleParams(1.0, 1.0, 1.0))
    x = np.array([0.0, 0.3, 1.7])
    z = np.array([0.1, 1.0, 4.0])
    expect = profile.fp_at(z / np.sqrt(2.0 * (x + profile.x0)))
    assert np.allclose(s.u(x, z), expect, rtol=0, atol=0)


def test_rescale_tail_exponent_window(profile):
    # a = 1/(100 (1+X)), b^2 = 5 mu / (4 m): the transported exponent stays
    # within [100/101, 1] times 5 mu / 4 across the streamwise range.
    mu, m, X = 0.4, 0.5, 0.2
    a = 1.0 / (100.0 * (1.0 + X))
    b = np.sqrt(5.0 * mu / (4.0 * m))
    s = rescale(profile, RescaleParams(a, b, b * b / a))
    xs = np.linspace(0.0, X, 21)
    ex = s.tail_exponent(m, xs)
    top = 5.0 * mu / 4.0
    assert np.all(ex <= top + 1e-15)
    assert np.all(ex >= (100.0 / 101.0) * top - 1e-15)


def _residual_2d(sampler, xs, zs):
    """Centered-difference steady residual u u_x + w u_z - u_zz on a box."""
    X, Z = np.meshgrid(xs, zs, indexing="ij")
    u = sampler.u(X, Z)
    w = sampler.w(X, Z)
    dx = xs[1] - xs[0]
    dz = zs[1] - zs[0]
    ux = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * dx)
    uz = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * dz)
    uzz = (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / dz**2
    core = u[1:-1, 1:-1]
    return core * ux + w[1:-1, 1:-1] * uz - uzz


def test_rescale_preserves_equation_second_order(profile):
    s = rescale(profile, RescaleParams(a=0.5, b=1.0, k=2.0))
    errs = []
    for nx, nz in ((41, 61), (81, 121)):
        xs = np.linspace(0.1, 0.9, nx)
        zs = np.linspace(0.2, 3.2, nz)
        errs.append(np.max(np.abs(_residual_2d(s, xs, zs))))
    ratio = errs[0] / errs[1]
    assert 3.0 < ratio < 5.0
