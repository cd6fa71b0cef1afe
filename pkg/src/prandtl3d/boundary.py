"""Compatible boundary data: wall characteristics, series coefficients, envelopes.

The wall plane z=0 carries data assembled along the characteristics of
dx/ds = 1, dy/ds = 1 + qtilde.  Per-seed Taylor coefficients a^i are the
along-characteristic derivatives forced by the interior equations, so the
data meets the corner compatibility conditions up to the truncation order.
The perturbation family is analytic; every envelope check below evaluates
closed forms rather than differencing generated samples.

The vertical transport that enters the coefficient a^1 carries the wall
anchor wbar(x,y,0) of the lifted background.  Without it the background
itself would fail to be a steady state of the marching scheme by the
O(eps0^2) transpiration left over from the wall lift, and the zero
perturbation coefficients would not vanish.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .errors import (CrossingDetected, DegenerateU, DomainError,
                     EnvelopeViolation, GridMismatch)
from .grid import cumulative_z, d_y, d_z
from .report import DiagnosticsReport

# Existential constants for the assembled wall gap against eps^8 eps0^2
# and eps^7 eps0^3, calibrated over the exercised range eps0 in
# [0.025, 0.2] and eps <= 0.4 with at least 5x headroom.  The sharp
# content, the pure power-of-eps scaling of the gap, is tested separately.
WALL_GAP_C2 = 100.0
WALL_GAP_C3 = 100.0
# Absolute floor on the wall-gap bound: below this the double-precision
# cancellation noise of the coefficient tables (about 1e-17 on unit-size
# background terms) dominates any amplitude-scaled bound.
WALL_GAP_ABS_FLOOR = 1e-14
# Quarter of the measured minimum of dz u_bd over the 3/2-rate envelope on
# the inflow faces; the minimum sits at the top of the deepest face column.
SHEAR_FLOOR_C = 1e-4

ENVELOPE_CHECKS = ("bd-value", "bd-dz", "bd-dxy", "bd-dz-dxy", "bd-dxy2",
                   "bd-shear-floor")


def envelope_phi(x, z, A, delta, N, mu, i):
    """Three-zone growth envelope in the layer variable z/sqrt(x+1)."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    w = z / np.sqrt(x + 1.0)
    amp = np.exp(A * x)
    near = amp * w**i
    mid = amp * delta**i
    far = mid * np.exp(N**2 * mu) * np.exp(-mu * z**2 / (x + 1.0))
    return np.where(w <= delta, near, np.where(w <= N, mid, far))


@dataclass
class PerturbationSpec:
    """Analytic family of admissible inflow perturbations.

    delta_u and delta_v are the gaps to the unlifted background; the cubic
    wall factor keeps the value, slope, and tangential-derivative envelopes
    satisfied simultaneously, and the Gaussian factor decays faster than
    the envelope tail for every admissible mu.
    """

    eps: float
    A: float
    delta: float
    N: float
    mu: float
    amp: float = 1.0
    kx: float = 3.0
    ky: float = 2.0
    phase_v: float = 1.0
    generator: str = "wall-cubic wave"

    def __post_init__(self):
        if self.eps <= 0.0 or self.eps >= 1.0:
            raise DomainError("eps must lie in (0, 1)")
        if min(self.A, self.delta, self.N, self.mu) <= 0.0:
            raise DomainError("envelope parameters must be positive")
        if self.amp < 0.0:
            raise DomainError("amp must be nonnegative")

    def _scale(self):
        # Peak of z^3 exp(-3 mu z^2) sits at z = 1/sqrt(2 mu); the decay
        # rate 3 mu keeps the bump below the envelope tail (rate mu against
        # a cubic prefactor) all the way out.
        gmax = (2.0 * self.mu) ** -1.5 * np.exp(-1.5)
        return self.eps**8 * self.amp * 0.5 * self.delta**2 / gmax

    def _g(self, z, order=0):
        c = 3.0 * self.mu
        e = np.exp(-c * z**2)
        if order == 0:
            return z**3 * e
        if order == 1:
            return (3.0 * z**2 - 2.0 * c * z**4) * e
        return (6.0 * z - 14.0 * c * z**3 + 4.0 * c**2 * z**5) * e

    def delta_u(self, x, y, z, dz=0, dxy=()):
        """Perturbation of u_bd; dz and dxy select analytic derivatives."""
        return self._eval(x, y, z, 0.0, dz, dxy)

    def delta_v(self, x, y, z, dz=0, dxy=()):
        return self._eval(x, y, z, self.phase_v, dz, dxy)

    def _eval(self, x, y, z, shift, dz, dxy):
        val = self._scale() * self._g(np.asarray(z, float), dz)
        # Tangential derivatives rotate the phase by pi/2 each and pick up
        # the matching wavenumber factor.
        factor = 1.0
        phase = shift
        for axis in dxy:
            factor *= self.kx if axis == "x" else self.ky
            phase += 0.5 * np.pi
        return val * factor * np.cos(self.kx * np.asarray(x, float)
                                     + self.ky * np.asarray(y, float) + phase)

    def check_envelopes(self, grid, blasius, x0=1.0):
        """Growth-rate report for the generated data on the inflow faces."""
        report = DiagnosticsReport(meta={"eps": self.eps, "amp": self.amp})
        e = self.eps
        for zone, xt, yt in (
                ("x=0", np.zeros_like(grid.y_nodes), grid.y_nodes),
                ("y=0", grid.x_nodes, np.zeros_like(grid.x_nodes))):
            xe = xt[:, None]
            ye = yt[:, None]
            z = grid.z_nodes[None, :]
            phi1 = envelope_phi(xe, z, self.A, self.delta, self.N, self.mu, 1)
            phi2 = envelope_phi(xe, z, self.A, self.delta, self.N, self.mu, 2)

            def pair(dz=0, dxy=()):
                return (np.abs(self._eval(xe, ye, z, 0.0, dz, dxy))
                        + np.abs(self._eval(xe, ye, z, self.phase_v, dz, dxy)))

            checks = [
                ("bd-value", e**8 * phi2 - pair()),
                ("bd-dz", e**7 * phi2 - pair(dz=1)),
                ("bd-dxy", e**6 * phi1
                 - worst_over(lambda d: pair(dxy=d), ("x",), ("y",))),
                ("bd-dz-dxy", e**6 * phi1
                 - worst_over(lambda d: pair(dz=1, dxy=d), ("x",), ("y",))),
                ("bd-dxy2", e**6 * phi1
                 - worst_over(lambda d: pair(dxy=d),
                              ("x", "x"), ("x", "y"), ("y", "y"))),
            ]
            # The wall row is excluded: generator and envelope both vanish
            # identically at z=0, leaving an exact tie.
            for cid, gap in checks:
                gap = gap[:, 1:]
                k = np.unravel_index(np.argmin(gap), gap.shape)
                report.add(cid, zone, float(gap[k]))

            m = 0.5 * (xe + ye)
            S = np.sqrt(2.0 * (m + x0))
            dz_ub = blasius.fpp_at(z / S) / S + self._eval(xe, ye, z, 0.0, 1, ())
            dz_vb = blasius.fpp_at(z / S) / S \
                + self._eval(xe, ye, z, self.phase_v, 1, ())
            env = np.exp(-1.5 * self.mu * z**2 / (1.0 + grid.X))
            margin = float(np.min(np.minimum(dz_ub, dz_vb) / env)) - SHEAR_FLOOR_C
            report.add("bd-shear-floor", zone, margin)
        return report


def worst_over(fn, *variants):
    """Largest magnitude over tangential-derivative choices."""
    return np.max(np.stack([fn(v) for v in variants]), axis=0)


def default_seeds(grid):
    """Characteristic seeds at the grid nodes of the two inflow edges."""
    left = [(0.0, float(t)) for t in grid.y_nodes]
    bottom = [(float(t), 0.0) for t in grid.x_nodes[1:]]
    return np.array(left + bottom)


@dataclass
class CharField:
    """Wall characteristics from the inflow edges, sampled on substeps.

    ys[g, p] is the y position of path p at global substep g (x = g ds);
    rows before a path's seed station hold NaN.  jac_eta and jac_xi are the
    variational sensitivities to shifting the seed across and along the
    marching direction.
    """

    grid: object
    seeds: np.ndarray
    n_sub: int
    ds: float
    seed_station: np.ndarray
    ys: np.ndarray
    jac_eta: np.ndarray
    jac_xi: np.ndarray
    eps: float = None
    max_jac_eta: float = field(init=False, default=0.0)

    def __post_init__(self):
        self.max_jac_eta = float(np.nanmax(np.abs(self.jac_eta)))

    def station_samples(self, i):
        """Paths alive at grid station x_i: (path ids, y, s)."""
        ids = np.flatnonzero(self.seed_station <= i)
        g = i * self.n_sub
        y = self.ys[g, ids]
        s = self.grid.x_nodes[i] - self.seeds[ids, 0]
        return ids, y, s

    def path(self, p):
        """(s, x, y) samples of one path from its seed to the outflow."""
        g0 = self.seed_station[p] * self.n_sub
        g = np.arange(g0, self.ys.shape[0])
        s = (g - g0) * self.ds
        return s, self.seeds[p, 0] + s, self.ys[g, p]


def solve_characteristics(grid, qtilde_z0, seeds=None, eps=None, n_sub=2,
                          cross_tol=1e-8):
    """Integrate the wall characteristics and their seed sensitivities.

    Classical 4th-order steps on ds = dx/n_sub keep every sample aligned
    with the grid stations, so assembly later never interpolates in x.
    The coefficient field is queried through a bicubic surface with y
    clamped to the strip; paths that leave through y = Y keep integrating
    on the clamped value, which only affects samples outside the domain.
    """
    qtilde_z0 = np.asarray(qtilde_z0, dtype=float)
    if qtilde_z0.shape != grid.shape[:2]:
        raise GridMismatch(
            f"wall coefficient shape {qtilde_z0.shape} != {grid.shape[:2]}"
        )
    if seeds is None:
        seeds = default_seeds(grid)
    seeds = np.asarray(seeds, dtype=float)
    nx = grid.shape[0]
    sp = RectBivariateSpline(grid.x_nodes, grid.y_nodes, qtilde_z0,
                             kx=min(3, nx - 1), ky=min(3, grid.shape[1] - 1))
    station = np.searchsorted(grid.x_nodes, seeds[:, 0] - 1e-12 * grid.dx)
    if np.max(np.abs(grid.x_nodes[station] - seeds[:, 0])) > 1e-9:
        raise DomainError("seed x positions must sit on grid stations")

    ds = grid.dx / n_sub
    n_paths = seeds.shape[0]
    total = (nx - 1) * n_sub
    ys = np.full((total + 1, n_paths), np.nan)
    je = np.full((total + 1, n_paths), np.nan)
    jx = np.full((total + 1, n_paths), np.nan)
    y_cur = np.full(n_paths, np.nan)
    je_cur = np.full(n_paths, np.nan)
    jx_cur = np.full(n_paths, np.nan)
    g_act = station * n_sub

    def rhs(xs, y, a, b):
        yc = np.clip(y, 0.0, grid.Y)
        x_arr = np.full_like(y, xs)
        q = sp.ev(x_arr, yc)
        qy = sp.ev(x_arr, yc, dy=1)
        qx = sp.ev(x_arr, yc, dx=1)
        return 1.0 + q, qy * a, qx + qy * b

    for g in range(total + 1):
        born = g_act == g
        y_cur[born] = seeds[born, 1]
        je_cur[born] = 1.0
        jx_cur[born] = 0.0
        ys[g] = y_cur
        je[g] = je_cur
        jx[g] = jx_cur
        if g == total:
            break
        act = g_act <= g
        xs = g * ds
        y0, a0, b0 = y_cur[act], je_cur[act], jx_cur[act]
        k1 = rhs(xs, y0, a0, b0)
        k2 = rhs(xs + 0.5 * ds, y0 + 0.5 * ds * k1[0], a0 + 0.5 * ds * k1[1],
                 b0 + 0.5 * ds * k1[2])
        k3 = rhs(xs + 0.5 * ds, y0 + 0.5 * ds * k2[0], a0 + 0.5 * ds * k2[1],
                 b0 + 0.5 * ds * k2[2])
        k4 = rhs(xs + ds, y0 + ds * k3[0], a0 + ds * k3[1], b0 + ds * k3[2])
        y_cur[act] = y0 + ds / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        je_cur[act] = a0 + ds / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        jx_cur[act] = b0 + ds / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])

    cf = CharField(grid=grid, seeds=seeds, n_sub=n_sub, ds=ds,
                   seed_station=station, ys=ys, jac_eta=je, jac_xi=jx, eps=eps)
    _check_no_crossing(cf, cross_tol)
    if eps is not None and cf.max_jac_eta > np.exp(eps * grid.X) * (1 + 1e-10):
        raise DomainError(
            f"seed sensitivity {cf.max_jac_eta:.6f} exceeds "
            f"exp(eps X) = {np.exp(eps * grid.X):.6f}"
        )
    return cf


def _check_no_crossing(cf, cross_tol):
    """Distinct paths must keep their order and a positive gap at stations."""
    prev_ids = prev_y = None
    for i in range(cf.grid.shape[0]):
        ids, y, _ = cf.station_samples(i)
        order = np.argsort(y, kind="stable")
        gaps = np.diff(y[order])
        if gaps.size and np.min(gaps) < cross_tol:
            raise CrossingDetected(
                f"paths merge at station x={cf.grid.x_nodes[i]:.4f} "
                f"(min gap {np.min(gaps):.3e})"
            )
        if prev_ids is not None:
            pos = {p: k for k, p in enumerate(ids[order])}
            ranks = [pos[p] for p in prev_ids[np.argsort(prev_y, kind="stable")]]
            if np.any(np.diff(ranks) < 0):
                raise CrossingDetected(
                    f"path order flips entering station x={cf.grid.x_nodes[i]:.4f}"
                )
        prev_ids, prev_y = ids, y


@dataclass
class CompatCoeffs:
    """Per-seed series coefficients a^0..a^order of the wall data."""

    seeds: np.ndarray
    a: np.ndarray
    which: str
    eps: float
    eps0: float
    f1_plane: np.ndarray


def _seed_indices(grid, seeds):
    ii = np.searchsorted(grid.x_nodes, seeds[:, 0] - 1e-12 * grid.dx)
    jj = np.searchsorted(grid.y_nodes, seeds[:, 1] - 1e-12 * grid.dy)
    ok = (np.abs(grid.x_nodes[ii] - seeds[:, 0]) < 1e-9) \
        & (np.abs(grid.y_nodes[jj] - seeds[:, 1]) < 1e-9)
    if not ok.all():
        raise DomainError("coefficient seeds must sit on wall grid nodes")
    return ii, jj


def compat_coefficients(pert, bg, state_prev=None, seeds=None, order_max=2,
                        which="u"):
    """Along-characteristic Taylor coefficients of the wall data.

    a^0 is the prescribed gap at the lifted wall; a^1 = -F1 comes from the
    wall trace of the marching equation (the cumulative-integral transports
    vanish there, leaving the anchor term and the degenerate diffusion);
    higher orders differentiate F1 along the characteristic direction.
    When state_prev is None the previous iterate is the background and all
    its derivatives are taken from the analytic tables, so a zero
    perturbation yields exactly zero coefficients.
    """
    if order_max < 1 or order_max > 3:
        raise DomainError("order_max must be between 1 and 3")
    if which not in ("u", "v"):
        raise DomainError("which must be 'u' or 'v'")
    grid = bg.grid
    if seeds is None:
        seeds = default_seeds(grid)
    seeds = np.asarray(seeds, dtype=float)

    xw = grid.x_nodes[:, None]
    yw = grid.y_nodes[None, :]
    ub0 = bg.ubar[:, :, 0]
    dx_ub0 = bg.d_x_ubar[:, :, 0]
    dz_ub0 = bg.d_z_ubar[:, :, 0]
    dzz_ub0 = bg.d_zz_ubar[:, :, 0]
    w_wall = bg.wbar[:, :, 0]

    gap = pert.delta_u if which == "u" else pert.delta_v
    # The gap is evaluated directly rather than as (background + gap) minus
    # background, so coefficients keep scaling below round-off of the O(1)
    # trace values.
    a0_plane = gap(xw, yw, bg.eps0)
    bd0 = ub0 + a0_plane
    dz_bd0 = dz_ub0 + gap(xw, yw, bg.eps0, dz=1)
    dzz_bd0 = dzz_ub0 + gap(xw, yw, bg.eps0, dz=2)

    if state_prev is None:
        u_prev0 = ub0
        ratio_prev0 = ub0
        dz_rp0 = dz_ub0
        qt0 = np.zeros_like(ub0)
    else:
        if not grid.same_nodes(state_prev.grid):
            raise GridMismatch("previous iterate lives on a different grid")
        u_prev0 = state_prev.u[:, :, 0]
        ratio_prev0 = (state_prev.u if which == "u" else state_prev.v)[:, :, 0]
        dz_rp0 = d_z(grid, state_prev.u if which == "u"
                     else state_prev.v)[:, :, 0]
        qt0 = state_prev.q[:, :, 0] / u_prev0
    if np.min(u_prev0) <= 0.0 or np.min(ratio_prev0) <= 0.0:
        raise DegenerateU("previous iterate not positive on the wall")

    ds_ub = (2.0 + qt0) * dx_ub0
    d_ratio = (dz_bd0 * ratio_prev0 - bd0 * dz_rp0) / ratio_prev0**2
    diffusion = (d_ratio * dz_bd0 + (bd0 / ratio_prev0) * dzz_bd0) / u_prev0
    f1 = ds_ub + (w_wall / u_prev0) * dz_bd0 - diffusion

    planes = [a0_plane, -f1]
    fk = f1
    for _ in range(order_max - 1):
        fk = (np.gradient(fk, grid.x_nodes, axis=0, edge_order=2)
              + (1.0 + qt0) * np.gradient(fk, grid.y_nodes, axis=1,
                                          edge_order=2))
        planes.append(-fk)

    ii, jj = _seed_indices(grid, seeds)
    a = np.stack([p[ii, jj] for p in planes])
    return CompatCoeffs(seeds=seeds, a=a, which=which, eps=pert.eps,
                        eps0=bg.eps0, f1_plane=f1)


def cutoff_phi(i, s, M=0.0):
    """Taper of the i-th series term: plain power, then a plateau.

    Below ninth order the junction exponent 1/(i-8) degenerates, so the
    plain power applies everywhere.  From ninth order on the power runs
    past the first junction to where it meets twice the first-junction
    value, and a narrow quintic rounds that corner onto the flat plateau
    with matched value, slope, and curvature; the rounding window sits
    inside the transition zone, so the result never exceeds the plateau
    by more than the corner ripple.
    """
    s = np.asarray(s, dtype=float)
    if i < 9:
        return s**i
    theta = (1.0 / (M + 1.0)) ** (1.0 / (i - 8))
    s1, s2 = 0.25 * theta, 0.5 * theta
    plateau = 2.0 * s1**i
    s_star = 2.0 ** (1.0 / i) * s1
    w = 0.9 * min(s_star - s1, s2 - s_star)
    a, b = s_star - w, s_star + w
    h = b - a
    t = np.clip((s - a) / h, 0.0, 1.0)
    t2, t3, t4, t5 = t * t, t**3, t**4, t**5
    blend = (a**i * (1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5)
             + h * i * a ** (i - 1) * (t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5)
             + h * h * i * (i - 1) * a ** (i - 2)
             * 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5)
             + plateau * (10.0 * t3 - 15.0 * t4 + 6.0 * t5))
    return np.where(s <= a, s**i, np.where(s >= b, plateau, blend))


def series_sum(charfield, coeffs, i_max, M, station):
    """Wall-data correction along the paths alive at one station."""
    ids, y, s = charfield.station_samples(station)
    corr = coeffs.a[0, ids].copy()
    fact = 1.0
    for i in range(1, min(i_max, coeffs.a.shape[0] - 1) + 1):
        fact *= i
        corr += coeffs.a[i, ids] * cutoff_phi(i, s, M) / fact
    return ids, y, corr


@dataclass
class BoundaryData:
    """Dirichlet data for one solve: wall, two inflow faces, and the top."""

    grid: object
    eps: float
    eps0: float
    u_z0: np.ndarray
    v_z0: np.ndarray
    u_x0: np.ndarray
    v_x0: np.ndarray
    u_y0: np.ndarray
    v_y0: np.ndarray
    u_top: np.ndarray
    v_top: np.ndarray
    i_max: int = 0
    M: float = 0.0
    report: object = None


def background_traces(bg):
    """Boundary data equal to the background's own traces (no perturbation)."""
    return BoundaryData(
        grid=bg.grid, eps=0.0, eps0=bg.eps0,
        u_z0=bg.ubar[:, :, 0].copy(), v_z0=bg.ubar[:, :, 0].copy(),
        u_x0=bg.ubar[0].copy(), v_x0=bg.ubar[0].copy(),
        u_y0=bg.ubar[:, 0].copy(), v_y0=bg.ubar[:, 0].copy(),
        u_top=bg.ubar[:, :, -1].copy(), v_top=bg.ubar[:, :, -1].copy(),
    )


def build_boundary_data(pert, bg, charfield, coeffs_u, coeffs_v, i_max=2,
                        M=None):
    """Assemble compatible data on the wall, the inflow faces, and the top.

    The wall value is the analytic background trace plus the interpolated
    series correction, so a zero perturbation reproduces the traces
    exactly.  The faces carry the prescribed lifted data.  Every envelope
    is re-checked on the result; a violation raises with the report
    attached.
    """
    grid = bg.grid
    if not grid.same_nodes(charfield.grid):
        raise GridMismatch("characteristics were solved on a different grid")
    if i_max < 2:
        raise DomainError("series truncation must keep at least two orders")
    if M is None:
        M = float(sum(np.max(np.abs(c.a)) for c in (coeffs_u, coeffs_v)))

    nx, ny = grid.shape[:2]
    corr_u = np.empty((nx, ny))
    corr_v = np.empty((nx, ny))
    for i in range(nx):
        for corr, coeffs in ((corr_u, coeffs_u), (corr_v, coeffs_v)):
            ids, y, vals = series_sum(charfield, coeffs, i_max, M, i)
            order = np.argsort(y)
            corr[i] = CubicSpline(y[order], vals[order])(grid.y_nodes)

    x = grid.x_nodes[:, None]
    y = grid.y_nodes[:, None]
    zl = grid.z_nodes[None, :] + bg.eps0
    data = BoundaryData(
        grid=grid, eps=pert.eps, eps0=bg.eps0,
        u_z0=bg.ubar[:, :, 0] + corr_u,
        v_z0=bg.ubar[:, :, 0] + corr_v,
        u_x0=bg.ubar[0] + pert.delta_u(0.0, y, zl),
        v_x0=bg.ubar[0] + pert.delta_v(0.0, y, zl),
        u_y0=bg.ubar[:, 0] + pert.delta_u(x, 0.0, zl),
        v_y0=bg.ubar[:, 0] + pert.delta_v(x, 0.0, zl),
        u_top=bg.ubar[:, :, -1]
        + pert.delta_u(x, grid.y_nodes[None, :], grid.Zmax + bg.eps0),
        v_top=bg.ubar[:, :, -1]
        + pert.delta_v(x, grid.y_nodes[None, :], grid.Zmax + bg.eps0),
        i_max=i_max, M=M,
    )

    report = pert.check_envelopes(grid, bg.blasius, bg.x0)
    e, e0 = pert.eps, bg.eps0
    for corr, tag in ((corr_u, "u"), (corr_v, "v")):
        worst = float(np.max(np.abs(corr)))
        bound = min(WALL_GAP_C2 * e**8 * e0**2,
                    WALL_GAP_C3 * e**7 * e0**3)
        # tiny amplitudes push the analytic bound below the round-off
        # floor of the coefficient tables; the check cannot resolve that
        report.add(f"bd-wall-gap-{tag}", "z=0",
                   max(bound, WALL_GAP_ABS_FLOOR) - worst)
    data.report = report
    if not report.all_passed:
        bad = ", ".join(en.check_id for en in report.failures())
        exc = EnvelopeViolation(f"assembled data breaks envelopes: {bad}")
        exc.report = report
        raise exc
    return data


def inflow_flux_integral(grid, state, u_floor=0.0):
    """Reconstructed cumulative x-dilation on the inflow face.

    Integrates the compatibility identity from the wall, so the result is
    the trace of int_0^z dx u with an exact zero at z=0; dividing by u
    stays O(z) there because the lifted data is bounded away from zero.
    """
    u = state.u[0]
    v = state.v[0]
    if np.min(u) <= u_floor:
        raise DegenerateU(
            f"inflow face min u = {np.min(u):.3e} at floor {u_floor:.3e}"
        )
    dy_u = d_y(grid, state.u)[0]
    dy_v = d_y(grid, state.v)[0]
    dz_u = np.gradient(u, grid.z_nodes, axis=1, edge_order=2)
    dzz_u = np.gradient(dz_u, grid.z_nodes, axis=1, edge_order=2)
    rhs = -v * dy_u + cumulative_z(grid, dy_v) * dz_u + dzz_u
    return u * cumulative_z(grid, rhs / u**2)


def trace_dx_u_at_inflow(grid, state, u_floor=0.0):
    """x-derivative of u on the inflow face forced by compatibility."""
    flux = inflow_flux_integral(grid, state, u_floor)
    return np.gradient(flux, grid.z_nodes, axis=1, edge_order=2)
