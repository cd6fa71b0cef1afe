"""Picard marching solver for the coupled tangential velocity pair.

Each outer iterate freezes the transport and diffusion coefficients on
the previous pair and marches the two quasilinear equations in x.  The
z direction is implicit (advection plus conservative degenerate
diffusion, one batched tridiagonal solve per y-row block); the y
transport is explicit upwind with an internal substep guard on the
marching ratio.  The vertical transport carries the wall anchor
wbar(x,y,0) so the lifted background is an exact steady state of the
continuous scheme and the marched error is pure truncation.

The quadratic diffusion ratio (new iterate over previous) is resolved
by an inner lag loop per micro-step; it contracts in one or two passes
away from pathological data.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import (AdmissibilityLost, DomainError, GridMismatch,
                     InnerDivergence, PicardStall)
from .grid import d_z, make_state
from .vecfield import commutator_K_direct, make_context

QTILDE_LIMIT = 0.5


@dataclass
class SolverConfig:
    """Tolerances and scheme switches for one Picard solve."""

    eps: float = 1e-3
    eps0_schedule: tuple = (0.1, 0.05, 0.025)
    picard_tol: float = 1e-10
    picard_max: int = 30
    inner_tol: float = 1e-11
    inner_max: int = 8
    upwind_order: int = 1
    u_floor_factor: float = 1e-3
    cfl_target: float = 0.95
    ledger_every: int = 0

    def __post_init__(self):
        if self.upwind_order not in (1, 2):
            raise DomainError("upwind_order must be 1 or 2")
        if self.picard_tol < 1e-12:
            raise DomainError("picard_tol below round-off budget 1e-12")
        if self.inner_tol <= 0.0 or self.picard_tol <= 0.0:
            raise DomainError("tolerances must be positive")
        if self.picard_max < 1 or self.inner_max < 1:
            raise DomainError("iteration limits must be at least 1")
        if not 0.0 < self.cfl_target <= 1.0:
            raise DomainError("cfl_target must lie in (0, 1]")
        if self.u_floor_factor <= 0.0:
            raise DomainError("u_floor_factor must be positive")
        sched = tuple(float(e) for e in self.eps0_schedule)
        if not sched or any(e <= 0.0 for e in sched):
            raise DomainError("eps0 schedule must be positive")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise DomainError("eps0 schedule must decrease strictly")
        self.eps0_schedule = sched


def _tridiag_solve(lo, dg, up, rhs):
    """Solve the batch of independent tridiagonal z-systems in one pass.

    The (ny, nz) systems chain into a single banded matrix.  The caller
    guarantees lo[:, 0] = up[:, -1] = 0 (the Dirichlet wall and top
    rows), which decouples consecutive y-blocks, so one LAPACK banded
    solve covers every row of the plane.
    """
    n = dg.size
    ab = np.zeros((3, n))
    ab[0, 1:] = up.ravel()[:-1]
    ab[1] = dg.ravel()
    ab[2, :-1] = lo.ravel()[1:]
    sol = solve_banded((1, 1), ab, rhs.ravel(), overwrite_ab=True,
                       check_finite=False)
    return sol.reshape(dg.shape)


def _dy_upwind(plane, dy, order):
    """Backward y-difference of a (ny, nz) plane; row 0 is never used."""
    out = np.zeros_like(plane)
    out[1:] = (plane[1:] - plane[:-1]) / dy
    if order == 2 and plane.shape[0] > 2:
        out[2:] = (3.0 * plane[2:] - 4.0 * plane[1:-1] + plane[:-2]) \
            / (2.0 * dy)
    return out


class _MicroState:
    """Per-equation history planes carried across micro-steps."""

    def __init__(self, start_plane, e_start):
        self.last = start_plane
        self.prev = None
        self.e_last = e_start
        self.e_prev = None

    def push(self, plane, e_plane):
        self.prev, self.last = self.last, plane
        self.e_prev, self.e_last = self.e_last, e_plane


def _solve_micro(cfg, grid, hist, coefs, wall, top, yface, ddx, bootstrap):
    """One implicit micro-step of a single equation.

    coefs holds the frozen previous-iterate planes at the target x:
    cy (y transport), W (anchored z transport), u_out (outer diffusion
    divisor), r_prev (diffusion ratio divisor).  Returns the new plane
    and the inner-lag iteration count.
    """
    cy, W, u_out, r_prev = coefs
    dz = grid.dz
    hm = dz[:-1][None, :]
    hp = dz[1:][None, :]
    wid = hm + hp

    lo = np.zeros_like(hist.last)
    dg = np.zeros_like(hist.last)
    up = np.zeros_like(hist.last)
    rhs = np.zeros_like(hist.last)

    if bootstrap or cfg.upwind_order == 1:
        dg += 1.0 / ddx
        rhs += hist.last / ddx - hist.e_last
    else:
        dg += 1.5 / ddx
        rhs += (4.0 * hist.last - hist.prev) / (2.0 * ddx) \
            - (2.0 * hist.e_last - hist.e_prev)

    Wc = W[:, 1:-1]
    if cfg.upwind_order == 1:
        wp = np.maximum(Wc, 0.0)
        wm = np.minimum(Wc, 0.0)
        lo[:, 1:-1] += -wp / hm
        dg[:, 1:-1] += wp / hm - wm / hp
        up[:, 1:-1] += wm / hp
    else:
        lo[:, 1:-1] += -Wc * hp / (hm * wid)
        dg[:, 1:-1] += Wc * (hp - hm) / (hm * hp)
        up[:, 1:-1] += Wc * hm / (hp * wid)

    u_lag = hist.last.copy()
    gap_prev = None
    used = 0
    for it in range(cfg.inner_max):
        used = it + 1
        ratio = u_lag / r_prev
        d_up = 0.5 * (ratio[:, 1:-1] + ratio[:, 2:])
        d_lo = 0.5 * (ratio[:, 1:-1] + ratio[:, :-2])
        c_up = 2.0 * d_up / (wid * hp * u_out[:, 1:-1])
        c_lo = 2.0 * d_lo / (wid * hm * u_out[:, 1:-1])

        LO = lo.copy()
        DG = dg.copy()
        UP = up.copy()
        LO[:, 1:-1] -= c_lo
        DG[:, 1:-1] += c_lo + c_up
        UP[:, 1:-1] -= c_up

        R = rhs.copy()
        # Dirichlet rows: wall, top, and the y=0 face
        LO[:, 0] = 0.0
        DG[:, 0] = 1.0
        UP[:, 0] = 0.0
        R[:, 0] = wall
        LO[:, -1] = 0.0
        DG[:, -1] = 1.0
        UP[:, -1] = 0.0
        R[:, -1] = top
        LO[0] = 0.0
        DG[0] = 1.0
        UP[0] = 0.0
        R[0] = yface

        sol = _tridiag_solve(LO, DG, UP, R)
        gap = float(np.max(np.abs(sol - u_lag)))
        if gap < cfg.inner_tol:
            return sol, used
        if gap_prev is not None and gap >= gap_prev:
            raise InnerDivergence(
                f"inner lag stalled at gap {gap:.3e} after {used} passes"
            )
        gap_prev = gap
        u_lag = sol
    return u_lag, used


def _lerp(a, b, frac):
    return a if frac == 0.0 else (1.0 - frac) * a + frac * b


def march_step(cfg, bg, bd, prev):
    """One Picard iterate: march the pair through the slab sequence.

    Coefficients are frozen on prev; boundary values come from bd.  The
    marched pair is returned as a fresh state along with scheme info
    (substep count, worst inner iteration count).
    """
    grid = prev.grid
    if not grid.same_nodes(bg.grid) or not grid.same_nodes(bd.grid):
        raise GridMismatch("state, background, and data grids differ")
    floor = cfg.u_floor_factor * bg.eps0
    if np.min(prev.u) <= floor or np.min(prev.v) <= floor:
        raise AdmissibilityLost(
            f"previous iterate touches the floor {floor:.3e}"
        )
    qt = prev.q / prev.u
    worst_qt = float(np.max(np.abs(qt)))
    if worst_qt >= QTILDE_LIMIT:
        raise AdmissibilityLost(
            f"previous iterate has |q|/u = {worst_qt:.4f} >= 1/2"
        )

    cy = 1.0 + qt
    w_wall = bg.wbar[:, :, 0]
    W = (w_wall[:, :, None] - prev.int_dx_u) / prev.u \
        - cy * prev.int_dy_v / prev.v

    nx = grid.shape[0]
    target = cfg.cfl_target if cfg.upwind_order == 1 else 0.4 * cfg.cfl_target
    nu = float(np.max(cy)) * grid.dx / grid.dy
    n_sub = max(1, int(np.ceil(nu / target)))
    ddx = grid.dx / n_sub

    u_new = np.empty_like(prev.u)
    v_new = np.empty_like(prev.v)
    u_new[0] = bd.u_x0
    v_new[0] = bd.v_x0

    e0_u = cy[0] * _dy_upwind(bd.u_x0, grid.dy, cfg.upwind_order)
    e0_v = cy[0] * _dy_upwind(bd.v_x0, grid.dy, cfg.upwind_order)
    hist_u = _MicroState(bd.u_x0.copy(), e0_u)
    hist_v = _MicroState(bd.v_x0.copy(), e0_v)

    worst_inner = 0
    first = True
    for i in range(1, nx):
        for m in range(1, n_sub + 1):
            frac = m / n_sub
            cy_t = _lerp(cy[i - 1], cy[i], frac)
            W_t = _lerp(W[i - 1], W[i], frac)
            up_t = _lerp(prev.u[i - 1], prev.u[i], frac)
            vp_t = _lerp(prev.v[i - 1], prev.v[i], frac)
            wall_u = _lerp(bd.u_z0[i - 1], bd.u_z0[i], frac)
            wall_v = _lerp(bd.v_z0[i - 1], bd.v_z0[i], frac)
            top_u = _lerp(bd.u_top[i - 1], bd.u_top[i], frac)
            top_v = _lerp(bd.v_top[i - 1], bd.v_top[i], frac)
            face_u = _lerp(bd.u_y0[i - 1], bd.u_y0[i], frac)
            face_v = _lerp(bd.v_y0[i - 1], bd.v_y0[i], frac)

            sol_u, used_u = _solve_micro(
                cfg, grid, hist_u, (cy_t, W_t, up_t, up_t),
                wall_u, top_u, face_u, ddx, first)
            sol_v, used_v = _solve_micro(
                cfg, grid, hist_v, (cy_t, W_t, up_t, vp_t),
                wall_v, top_v, face_v, ddx, first)
            worst_inner = max(worst_inner, used_u, used_v)
            first = False

            if np.min(sol_u) <= floor or np.min(sol_v) <= floor:
                raise AdmissibilityLost(
                    f"marched plane at x={grid.x_nodes[i - 1] + m * ddx:.4f} "
                    f"fell below the floor {floor:.3e}"
                )
            qplane = np.max(np.abs(sol_v - sol_u) / sol_u)
            if qplane >= QTILDE_LIMIT:
                raise AdmissibilityLost(
                    f"marched plane at x={grid.x_nodes[i - 1] + m * ddx:.4f} "
                    f"has |q|/u = {qplane:.4f}"
                )

            hist_u.push(sol_u, cy_t * _dy_upwind(sol_u, grid.dy,
                                                 cfg.upwind_order))
            hist_v.push(sol_v, cy_t * _dy_upwind(sol_v, grid.dy,
                                                 cfg.upwind_order))
        u_new[i] = hist_u.last
        v_new[i] = hist_v.last

    state = make_state(grid, u_new, v_new,
                       iterate_index=prev.iterate_index + 1)
    return state, {"n_sub": n_sub, "worst_inner": worst_inner}


def scheme_residual(bg, state, prev):
    """Continuous-form residual of the marched pair, by spectral-free FD.

    Useful for truncation studies: the residual of an exact solution of
    the continuous scheme shrinks with the grid at the interior order.
    """
    from .grid import d_x, d_y
    grid = state.grid
    qt = prev.q / prev.u
    cy = 1.0 + qt
    W = (bg.wbar[:, :, 0][:, :, None] - prev.int_dx_u) / prev.u \
        - cy * prev.int_dy_v / prev.v
    out = []
    for fld, ratio_prev in ((state.u, prev.u), (state.v, prev.v)):
        flux = (fld / ratio_prev) * d_z(grid, fld)
        res = d_x(grid, fld) + cy * d_y(grid, fld) \
            + W * d_z(grid, fld) - d_z(grid, flux) / prev.u
        out.append(res)
    return tuple(out)


@dataclass
class SolveTrace:
    """Per-iterate convergence record of one Picard solve."""

    eps0: float
    rows: list = field(default_factory=list)

    def add(self, n, delta_u, delta_v, min_dzu, max_absK, seconds):
        self.rows.append({"n": n, "delta_u": delta_u, "delta_v": delta_v,
                          "min_dzu": min_dzu, "max_absK": max_absK,
                          "seconds": seconds})

    def deltas(self):
        return [r["delta_u"] + r["delta_v"] for r in self.rows]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("eps0,n,delta_u,delta_v,min_dzu,max_absK,seconds\n")
            for r in self.rows:
                fh.write(f"{self.eps0:.17g},{r['n']},{r['delta_u']:.17g},"
                         f"{r['delta_v']:.17g},{r['min_dzu']:.17g},"
                         f"{r['max_absK']:.17g},{r['seconds']:.6g}\n")


def picard_solve(cfg, bg, bd, state0=None, on_iterate=None):
    """Iterate the marching map to its fixed point.

    state0 defaults to the background pair; a warm start from a nearby
    converged state keeps the same grid and just reseeds the frozen
    coefficients.  on_iterate(state, n) runs after each iterate (the
    ledger hook); convergence is the summed sup-norm update below
    picard_tol, and exhausting picard_max raises.
    """
    grid = bg.grid
    if state0 is None:
        state = make_state(grid, bg.ubar.copy(), bg.ubar.copy(), 0)
    else:
        if not grid.same_nodes(state0.grid):
            raise GridMismatch("warm start lives on a different grid")
        state = state0
    trace = SolveTrace(eps0=bg.eps0)
    for n in range(1, cfg.picard_max + 1):
        t0 = time.perf_counter()
        new, info = march_step(cfg, bg, bd, state)
        dt = time.perf_counter() - t0
        delta_u = float(np.max(np.abs(new.u - state.u)))
        delta_v = float(np.max(np.abs(new.v - state.v)))
        min_dzu = float(np.min(d_z(grid, new.u)))
        ctx = make_context(new, bg, eps0=bg.eps0, check_admissibility=False)
        max_k = float(np.max(np.abs(commutator_K_direct(ctx))))
        trace.add(n, delta_u, delta_v, min_dzu, max_k, dt)
        state = new
        if on_iterate is not None:
            on_iterate(state, n)
        if delta_u + delta_v < cfg.picard_tol:
            return state, trace
    raise PicardStall(
        f"no contraction to {cfg.picard_tol:.1e} within {cfg.picard_max} "
        f"iterates (last update {delta_u + delta_v:.3e})"
    )


@dataclass
class ContinuationResult:
    """Converged states along the lift schedule plus Cauchy gaps."""

    eps0_values: tuple
    states: list
    traces: list
    gaps: list
    z_probe: float


def eps0_continuation(cfg, profile, grid, pert, mu=None, z_probe=0.2,
                      bd_builder=None, on_iterate=None):
    """Solve along the decreasing lift schedule and measure Cauchy gaps.

    Every stage shares the grid, so consecutive converged pairs compare
    node-wise; the gap is the sup over z >= z_probe of the pair update.
    bd_builder(bg) may override the default data pipeline (used by the
    zero-perturbation studies).
    """
    from .background import build_background
    from .boundary import (build_boundary_data, compat_coefficients,
                           solve_characteristics)

    kprobe = int(np.searchsorted(grid.z_nodes, z_probe))
    states, traces = [], []
    warm = None
    for eps0 in cfg.eps0_schedule:
        bg = build_background(profile, grid, eps0, mu=mu, detail="core")
        if bd_builder is not None:
            bdata = bd_builder(bg)
        else:
            cf = solve_characteristics(grid, np.zeros(grid.shape[:2]))
            cu = compat_coefficients(pert, bg, order_max=2, which="u")
            cv = compat_coefficients(pert, bg, order_max=2, which="v")
            bdata = build_boundary_data(pert, bg, cf, cu, cv)
        state, trace = picard_solve(cfg, bg, bdata, state0=warm,
                                    on_iterate=on_iterate)
        states.append(state)
        traces.append(trace)
        warm = state
    gaps = []
    for a, b in zip(states, states[1:]):
        gap_u = float(np.max(np.abs(a.u - b.u)[:, :, kprobe:]))
        gap_v = float(np.max(np.abs(a.v - b.v)[:, :, kprobe:]))
        gaps.append(max(gap_u, gap_v))
    return ContinuationResult(eps0_values=cfg.eps0_schedule, states=states,
                              traces=traces, gaps=gaps, z_probe=z_probe)
