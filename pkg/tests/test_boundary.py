"""Perturbation generator, wall characteristics, compatibility, assembly."""

import numpy as np
import pytest
from scipy.interpolate import RectBivariateSpline

from prandtl3d import boundary as bdy
from prandtl3d.background import build_background
from prandtl3d.blasius import solve_blasius
from prandtl3d.errors import (CrossingDetected, DegenerateU, DomainError,
                              EnvelopeViolation, GridMismatch)
from prandtl3d.grid import make_grid, make_state


@pytest.fixture(scope="module")
def prof():
    return solve_blasius(step=2e-3)


@pytest.fixture(scope="module")
def setup(prof):
    g = make_grid(24, 16, 96, 0.19, 0.15, 8.0)
    b = build_background(prof, g, 0.1, mu=0.15)
    p = bdy.PerturbationSpec(eps=0.4, A=10.0, delta=0.25, N=4.0, mu=0.05)
    return g, b, p


def qt_plane(g, amp=0.2):
    xx, yy = np.meshgrid(g.x_nodes, g.y_nodes, indexing="ij")
    return amp * np.cos(3.0 * xx + 2.0 * yy)


# ---------------------------------------------------------------- envelopes

def test_envelope_phi_branches():
    A, delta, N, mu = 10.0, 0.25, 4.0, 0.05
    assert bdy.envelope_phi(0.0, 0.1, A, delta, N, mu, 2) == pytest.approx(0.01)
    assert bdy.envelope_phi(0.0, 1.0, A, delta, N, mu, 2) == pytest.approx(
        delta**2)
    x = 0.1
    z_far = 5.0 * np.sqrt(1.1)
    expect = np.exp(A * x) * delta**2 * np.exp(N**2 * mu) \
        * np.exp(-mu * z_far**2 / 1.1)
    assert bdy.envelope_phi(x, z_far, A, delta, N, mu, 2) == pytest.approx(
        expect)
    # branch junctions are continuous
    for zj in (delta, N):
        lo = bdy.envelope_phi(0.0, zj - 1e-12, A, delta, N, mu, 1)
        hi = bdy.envelope_phi(0.0, zj + 1e-12, A, delta, N, mu, 1)
        assert lo == pytest.approx(hi, rel=1e-9)


def test_generator_analytic_derivatives(setup):
    _, _, p = setup
    x, y, z = 0.07, 0.11, 1.3
    h = 1e-6
    fd_z = (p.delta_u(x, y, z + h) - p.delta_u(x, y, z - h)) / (2 * h)
    assert fd_z == pytest.approx(float(p.delta_u(x, y, z, dz=1)), rel=1e-8)
    fd_x = (p.delta_u(x + h, y, z) - p.delta_u(x - h, y, z)) / (2 * h)
    assert fd_x == pytest.approx(float(p.delta_u(x, y, z, dxy=("x",))),
                                 rel=1e-8)
    hm = 1e-4
    fd_xy = (p.delta_v(x + hm, y + hm, z) - p.delta_v(x + hm, y - hm, z)
             - p.delta_v(x - hm, y + hm, z) + p.delta_v(x - hm, y - hm, z)) \
        / (4 * hm * hm)
    assert fd_xy == pytest.approx(float(p.delta_v(x, y, z, dxy=("x", "y"))),
                                  rel=1e-5)
    assert float(p.delta_u(x, y, 0.0)) == 0.0


def test_generator_envelopes_pass(setup, prof):
    g, b, p = setup
    rep = p.check_envelopes(g, prof, b.x0)
    assert len(rep.entries) == 12
    assert rep.all_passed
    ids = {e.check_id for e in rep.entries}
    assert ids == set(bdy.ENVELOPE_CHECKS)


def test_generator_envelope_violation_detected(setup, prof):
    g, b, _ = setup
    loud = bdy.PerturbationSpec(eps=0.4, A=10.0, delta=0.25, N=4.0, mu=0.05,
                                amp=400.0)
    rep = loud.check_envelopes(g, prof, b.x0)
    assert not rep.all_passed


# ----------------------------------------------------------- characteristics

def test_default_seeds_layout(setup):
    g, _, _ = setup
    seeds = bdy.default_seeds(g)
    nx, ny = g.shape[:2]
    assert seeds.shape == (nx + ny - 1, 2)
    assert np.all(seeds[:ny, 0] == 0.0)
    assert np.allclose(seeds[:ny, 1], g.y_nodes)
    assert np.all(seeds[ny:, 1] == 0.0)
    # the corner appears exactly once
    assert np.sum(np.all(seeds == 0.0, axis=1)) == 1


def test_characteristics_straight_for_zero_coefficient(setup):
    g, _, _ = setup
    cf = bdy.solve_characteristics(g, np.zeros(g.shape[:2]), n_sub=2)
    for i in (0, g.shape[0] // 2, g.shape[0] - 1):
        ids, y, s = cf.station_samples(i)
        assert np.max(np.abs(y - (cf.seeds[ids, 1] + s))) < 1e-13
    assert np.nanmax(np.abs(cf.jac_eta - 1.0)) == 0.0
    assert np.nanmax(np.abs(cf.jac_xi)) == 0.0


def test_characteristics_jacobian_bound(setup):
    g, _, _ = setup
    epsq = 0.05
    xx, yy = np.meshgrid(g.x_nodes, g.y_nodes, indexing="ij")
    qt = 0.5 * epsq * np.sin(2.0 * yy) * np.cos(3.0 * xx)
    cf = bdy.solve_characteristics(g, qt, eps=epsq, n_sub=2)
    assert cf.max_jac_eta <= np.exp(epsq * g.X) * (1 + 1e-10)


def test_characteristics_crossing_detected(setup):
    g, _, _ = setup
    xx, yy = np.meshgrid(g.x_nodes, g.y_nodes, indexing="ij")
    qt_bad = -2.0 * np.tanh((yy - 0.5 * g.Y) / (0.1 * g.Y)) + 0.0 * xx
    with pytest.raises(CrossingDetected):
        bdy.solve_characteristics(g, qt_bad, n_sub=2)


def test_characteristics_rejects_wrong_plane(setup):
    g, _, _ = setup
    with pytest.raises(GridMismatch):
        bdy.solve_characteristics(g, np.zeros((3, 3)))
    with pytest.raises(DomainError):
        bdy.solve_characteristics(g, np.zeros(g.shape[:2]),
                                  seeds=np.array([[g.dx / 3, 0.0]]))


def test_directional_derivative_along_paths(setup):
    g, _, _ = setup
    qt = qt_plane(g)
    spq = RectBivariateSpline(g.x_nodes, g.y_nodes, qt)
    errs = []
    for n_sub in (2, 4):
        cf = bdy.solve_characteristics(g, qt, n_sub=n_sub)
        worst = 0.0
        for p in range(0, cf.seeds.shape[0], 7):
            s, xs, ys = cf.path(p)
            if s.size < 3:
                continue
            f = np.sin(2.0 * xs + 3.0 * ys)
            dfds = np.gradient(f, s, edge_order=2)
            qv = spq.ev(xs, np.clip(ys, 0.0, g.Y))
            exact = np.cos(2.0 * xs + 3.0 * ys) * (2.0 + 3.0 * (1.0 + qv))
            worst = max(worst, float(np.max(np.abs(dfds - exact))))
        errs.append(worst)
    order = np.log2(errs[0] / errs[1])
    assert order > 1.7


# ------------------------------------------------------------- coefficients

def test_compat_zero_for_background(setup):
    g, b, _ = setup
    silent = bdy.PerturbationSpec(eps=0.4, A=10.0, delta=0.25, N=4.0,
                                  mu=0.05, amp=0.0)
    for which in ("u", "v"):
        c = bdy.compat_coefficients(silent, b, order_max=3, which=which)
        assert np.max(np.abs(c.a[0])) == 0.0
        assert np.max(np.abs(c.a[1])) < 1e-15
        assert np.max(np.abs(c.a[2])) < 1e-12
        assert np.max(np.abs(c.a[3])) < 1e-10
        assert np.max(np.abs(c.f1_plane)) < 1e-15


def test_compat_a0_is_wall_gap(setup):
    g, b, p = setup
    c = bdy.compat_coefficients(p, b, order_max=2, which="u")
    direct = p.delta_u(c.seeds[:, 0], c.seeds[:, 1], b.eps0)
    assert np.array_equal(c.a[0], direct)
    assert np.max(np.abs(c.a[0])) <= p.eps**8 * b.eps0**2


def test_compat_eps_scaling(setup):
    g, b, p = setup
    half = bdy.PerturbationSpec(eps=0.2, A=10.0, delta=0.25, N=4.0, mu=0.05)
    c1 = bdy.compat_coefficients(p, b, order_max=2, which="u")
    c2 = bdy.compat_coefficients(half, b, order_max=2, which="u")
    assert np.max(np.abs(c1.a[0])) / np.max(np.abs(c2.a[0])) == pytest.approx(
        2.0**8, rel=1e-12)
    # the higher coefficients pick up quadratic-in-data corrections
    for i in (1, 2):
        ratio = np.max(np.abs(c1.a[i])) / np.max(np.abs(c2.a[i]))
        assert ratio == pytest.approx(2.0**8, rel=1e-5)


def test_compat_u_and_v_differ(setup):
    g, b, p = setup
    cu = bdy.compat_coefficients(p, b, order_max=2, which="u")
    cv = bdy.compat_coefficients(p, b, order_max=2, which="v")
    assert np.max(np.abs(cu.a[1] - cv.a[1])) > 0.1 * np.max(np.abs(cu.a[1]))


def test_compat_rejects_bad_arguments(setup):
    g, b, p = setup
    with pytest.raises(DomainError):
        bdy.compat_coefficients(p, b, order_max=0)
    with pytest.raises(DomainError):
        bdy.compat_coefficients(p, b, order_max=4)
    with pytest.raises(DomainError):
        bdy.compat_coefficients(p, b, which="w")
    with pytest.raises(DomainError):
        bdy.compat_coefficients(p, b, seeds=np.array([[g.dx / 3, 0.0]]))


def test_compat_uses_previous_iterate(setup):
    g, b, p = setup
    shear = make_state(g, b.ubar.copy(),
                       b.ubar * (1.0 + 0.2 * np.cos(
                           2.0 * g.y_nodes[None, :, None])))
    c_bg = bdy.compat_coefficients(p, b, order_max=2, which="u")
    c_st = bdy.compat_coefficients(p, b, state_prev=shear, order_max=2,
                                   which="u")
    assert np.array_equal(c_bg.a[0], c_st.a[0])
    assert np.max(np.abs(c_bg.a[1] - c_st.a[1])) > 0.0


# ------------------------------------------------------------------ cutoffs

def test_cutoff_plain_power_below_ninth_order():
    s = np.linspace(0.0, 1.0, 301)
    assert np.array_equal(bdy.cutoff_phi(1, s), s)
    assert np.array_equal(bdy.cutoff_phi(2, s), s**2)


def test_cutoff_high_order_plateau():
    M = 3.0
    theta = (1.0 / (M + 1.0)) ** (1.0 / 1.0)
    s1, s2 = theta / 4.0, theta / 2.0
    plateau = 2.0 * s1**9
    assert bdy.cutoff_phi(9, np.array([s1]), M)[0] == s1**9
    assert bdy.cutoff_phi(9, np.array([s2]), M)[0] == plateau
    assert bdy.cutoff_phi(9, np.array([10.0]), M)[0] == plateau
    s = np.linspace(0.0, 3.0 * s2, 40001)
    vals = bdy.cutoff_phi(9, s, M)
    assert np.all(np.diff(vals) >= 0.0)
    assert np.max(vals) == plateau
    # curvature is continuous across the rounding corners
    s_star = 2.0 ** (1.0 / 9.0) * s1
    w = 0.9 * min(s_star - s1, s2 - s_star)
    h = 1e-7
    for sj in (s_star - w, s_star + w):
        probe = bdy.cutoff_phi(9, np.array(
            [sj - 2 * h, sj - h, sj, sj + h, sj + 2 * h]), M)
        d2l = (probe[0] - 2 * probe[1] + probe[2]) / h**2
        d2r = (probe[2] - 2 * probe[3] + probe[4]) / h**2
        scale = 9.0 * 8.0 * s_star**7
        assert abs(d2l - d2r) < 1e-3 * scale


# ----------------------------------------------------------------- assembly

def test_build_zero_perturbation_reproduces_traces(setup):
    g, b, _ = setup
    silent = bdy.PerturbationSpec(eps=0.4, A=10.0, delta=0.25, N=4.0,
                                  mu=0.05, amp=0.0)
    cf = bdy.solve_characteristics(g, np.zeros(g.shape[:2]), n_sub=2)
    cu = bdy.compat_coefficients(silent, b, order_max=2, which="u")
    cv = bdy.compat_coefficients(silent, b, order_max=2, which="v")
    data = bdy.build_boundary_data(silent, b, cf, cu, cv, i_max=2)
    tr = bdy.background_traces(b)
    assert np.max(np.abs(data.u_z0 - tr.u_z0)) < 1e-15
    assert np.array_equal(data.u_x0, tr.u_x0)
    assert np.array_equal(data.v_y0, tr.v_y0)
    assert np.array_equal(data.u_top, tr.u_top)


def test_build_wall_gap_and_face_consistency(setup):
    g, b, p = setup
    cf = bdy.solve_characteristics(g, np.zeros(g.shape[:2]), n_sub=2)
    cu = bdy.compat_coefficients(p, b, order_max=2, which="u")
    cv = bdy.compat_coefficients(p, b, order_max=2, which="v")
    data = bdy.build_boundary_data(p, b, cf, cu, cv, i_max=2)
    gap = np.max(np.abs(data.u_z0 - b.ubar[:, :, 0]))
    bound = min(bdy.WALL_GAP_C2 * p.eps**8 * b.eps0**2,
                bdy.WALL_GAP_C3 * p.eps**7 * b.eps0**3)
    assert 0.0 < gap < bound
    # wall rows of the inflow faces agree with the wall plane
    assert np.max(np.abs(data.u_x0[:, 0] - data.u_z0[0, :])) < 1e-14
    assert np.max(np.abs(data.u_y0[:, 0] - data.u_z0[:, 0])) < 1e-14
    assert data.report.all_passed
    with pytest.raises(DomainError):
        bdy.build_boundary_data(p, b, cf, cu, cv, i_max=1)


def test_build_wall_gap_eps_scaling(setup):
    g, b, p = setup
    cf = bdy.solve_characteristics(g, np.zeros(g.shape[:2]), n_sub=2)
    gaps = {}
    for eps in (0.4, 0.2):
        pe = bdy.PerturbationSpec(eps=eps, A=10.0, delta=0.25, N=4.0, mu=0.05)
        cu = bdy.compat_coefficients(pe, b, order_max=2, which="u")
        cv = bdy.compat_coefficients(pe, b, order_max=2, which="v")
        data = bdy.build_boundary_data(pe, b, cf, cu, cv, i_max=2)
        gaps[eps] = np.max(np.abs(data.u_z0 - b.ubar[:, :, 0]))
    assert gaps[0.4] / gaps[0.2] == pytest.approx(2.0**8, rel=1e-5)


def test_build_envelope_violation_raises(setup, prof):
    g, b, _ = setup
    loud = bdy.PerturbationSpec(eps=0.4, A=10.0, delta=0.25, N=4.0, mu=0.05,
                                amp=400.0)
    cf = bdy.solve_characteristics(g, np.zeros(g.shape[:2]), n_sub=2)
    cu = bdy.compat_coefficients(loud, b, order_max=2, which="u")
    cv = bdy.compat_coefficients(loud, b, order_max=2, which="v")
    with pytest.raises(EnvelopeViolation) as exc:
        bdy.build_boundary_data(loud, b, cf, cu, cv, i_max=2)
    assert exc.value.report.failures()


def test_build_first_order_agreement_with_a1(setup, prof):
    _, _, p = setup
    errs = []
    bounds = []
    for nx, ny in ((24, 16), (48, 32)):
        g = make_grid(nx, ny, 96, 0.19, 0.15, 8.0)
        b = build_background(prof, g, 0.1, mu=0.15)
        cf = bdy.solve_characteristics(g, qt_plane(g), n_sub=2)
        cu = bdy.compat_coefficients(p, b, order_max=2, which="u")
        cv = bdy.compat_coefficients(p, b, order_max=2, which="v")
        data = bdy.build_boundary_data(p, b, cf, cu, cv, i_max=2)
        plane = RectBivariateSpline(g.x_nodes, g.y_nodes,
                                    data.u_z0 - b.ubar[:, :, 0])
        worst = 0.0
        for pid in range(cf.seeds.shape[0]):
            s, xs, ys = cf.path(pid)
            if s.size <= cf.n_sub or np.max(ys[:cf.n_sub + 1]) > g.Y - 2 * g.dy:
                continue
            fd1 = (plane.ev(xs[cf.n_sub], ys[cf.n_sub])
                   - plane.ev(xs[0], ys[0])) / g.dx
            worst = max(worst, abs(fd1 - cu.a[1, pid]))
        errs.append(worst)
        bounds.append(np.max(np.abs(cu.a[2])) * g.dx)
    assert errs[0] < bounds[0]
    ratio = errs[0] / errs[1]
    assert 1.5 < ratio < 2.8


# -------------------------------------------------------------------- trace

@pytest.fixture(scope="module")
def trace_pair(prof):
    out = []
    for ny, nz in ((64, 256), (128, 512)):
        g = make_grid(8, ny, nz, 0.1, 0.15, 8.0)
        b = build_background(prof, g, 0.1, mu=0.15, detail="core")
        st = make_state(g, b.ubar.copy(), b.ubar.copy())
        out.append((g, b, st))
    return out


def test_trace_background_convergence(trace_pair):
    errs = []
    for g, b, st in trace_pair:
        rec = bdy.trace_dx_u_at_inflow(g, st)
        w0 = b.wbar[0, :, 0][:, None]
        u0 = b.ubar[0, :, 0][:, None]
        oracle = b.d_x_ubar[0] + (w0 / u0) * b.d_z_ubar[0]
        errs.append(np.max(np.abs(rec - oracle)[:, 1:-1]))
    order = np.log2(errs[0] / errs[1])
    assert order > 0.8
    assert errs[1] < 2e-3


def test_trace_wall_anchor(trace_pair):
    g, b, st = trace_pair[0]
    flux = bdy.inflow_flux_integral(g, st)
    assert np.max(np.abs(flux[:, 0])) == 0.0
    near = np.abs(flux[:, 1:4] / st.u[0][:, 1:4] / g.z_nodes[None, 1:4])
    assert np.max(near) < 0.5


def test_trace_y_independent_state_drops_transverse_terms(prof):
    from prandtl3d.grid import cumulative_z
    g = make_grid(8, 32, 64, 0.1, 0.15, 6.0)
    prof_z = 0.2 + 0.8 * np.tanh(g.z_nodes + 0.1)
    u = np.broadcast_to(prof_z, g.shape).copy()
    st = make_state(g, u, 1.1 * u)
    rec = bdy.trace_dx_u_at_inflow(g, st)
    # with no y variation only the diffusion term survives
    u2d = st.u[0]
    dzz = np.gradient(np.gradient(u2d, g.z_nodes, axis=1, edge_order=2),
                      g.z_nodes, axis=1, edge_order=2)
    expect = np.gradient(u2d * cumulative_z(g, dzz / u2d**2), g.z_nodes,
                         axis=1, edge_order=2)
    assert np.max(np.abs(rec - expect)) < 1e-12
    # node-spacing ulps keep the transverse gradient of a constant from
    # being exactly zero, so rows agree only to that noise level
    assert np.max(np.abs(rec[0] - rec[-1])) < 1e-11


def test_trace_degenerate_u_raises(trace_pair):
    g, b, st = trace_pair[0]
    with pytest.raises(DegenerateU):
        bdy.inflow_flux_integral(g, st, u_floor=np.max(st.u))
