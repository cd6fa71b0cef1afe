"""Node-wise bound ledger for converged iterates and plot-data export.

Three check groups: plain sup-norm conclusions against the lifted
background pair, the weighted bootstrap family over the phi weights,
and a commutator/monotonicity/admissibility block.  The abstract
constants (c0, C, C2, d0) are config inputs; the documented defaults
were calibrated on the converged zero-perturbation reference run
(second-order march, 64x64x256 at X=0.1, eps = 1e-3, A = 1/X) with at
least 4x headroom over the measured worst ratios, then frozen.  The
weighted family divides by phi weights whose far tail can underflow on
very deep grids; such nodes are excluded and counted in the metadata.
"""

import time
from dataclasses import dataclass

import numpy as np

from .barriers import BarrierParams, eval_phi1
from .errors import DomainError, GridMismatch, UnknownQuantity
from .grid import d_x, d_y, d_z
from .report import DiagnosticsReport
from .vecfield import (apply_eta, apply_xi, commutator_K_direct, dz_K,
                       make_context)

# Calibrated ledger constants, see the module docstring.
C0_DEFAULT = 1e-4
C_CAP_DEFAULT = 1.0
C2_CAP_DEFAULT = 1.0
D0_DEFAULT = 1.0

WEIGHT_FLOOR = 1e-300

LEDGER_CHECK_IDS = (
    "zt-value", "zt-dz", "zt-dxy", "zt-dz-dxy", "zt-dxy2", "zt-dzz",
    "ledger-w-value", "ledger-w-dz", "ledger-w-vf", "ledger-w-dz-vf",
    "ledger-w-vf2", "ledger-dzz-cap", "ledger-shear-floor",
    "ledger-K", "ledger-dzK", "ledger-qtilde",
)

PLOT_QUANTITIES = ("u", "v", "q", "K", "dzu", "psi", "residual",
                   "barrier-margins")


@dataclass
class LedgerParams:
    """Amplitude, weight shapes, and the four abstract constants."""

    eps: float
    barrier: BarrierParams
    c0: float = 0.0
    C: float = 0.0
    C2: float = 0.0
    d0: float = 0.0
    config_hash: str = ""

    def __post_init__(self):
        if self.eps < 0.0:
            raise DomainError("eps must be nonnegative")
        self.c0 = self.c0 if self.c0 > 0.0 else C0_DEFAULT
        self.C = self.C if self.C > 0.0 else C_CAP_DEFAULT
        self.C2 = self.C2 if self.C2 > 0.0 else C2_CAP_DEFAULT
        self.d0 = self.d0 if self.d0 > 0.0 else D0_DEFAULT

    @classmethod
    def from_config(cls, cfg, eps0):
        from .config import barrier_params
        b = cfg.barrier
        return cls(eps=cfg.physics.eps, barrier=barrier_params(cfg, eps0),
                   c0=b.c0, C=b.C, C2=b.C2, d0=b.d0,
                   config_hash=cfg.config_hash)


def _node(grid, flat):
    i, j, k = np.unravel_index(int(flat), grid.shape)
    return (grid.x_nodes[i], grid.y_nodes[j], grid.z_nodes[k])


def _sup_entry(report, grid, check_id, lhs, budget):
    """Margin of sup(lhs) <= budget with the worst node recorded."""
    flat = np.argmax(lhs)
    report.add(check_id, "omega", budget - float(lhs.reshape(-1)[flat]),
               _node(grid, flat))


def _min_entry(report, grid, check_id, gap):
    """Margin of min(gap) >= 0 with the worst node recorded."""
    flat = np.argmin(gap)
    report.add(check_id, "omega", float(gap.reshape(-1)[flat]),
               _node(grid, flat))


def _weighted_entry(report, grid, check_id, diff, weight, budget):
    """Margin of sup(diff/weight) <= budget, flooring tiny weights."""
    keep = weight >= WEIGHT_FLOOR
    excluded = int(diff.size - np.count_nonzero(keep))
    report.meta.setdefault("excluded_nodes", {})[check_id] = excluded
    ratio = np.where(keep, diff / np.where(keep, weight, 1.0), -np.inf)
    flat = np.argmax(ratio)
    report.add(check_id, "omega", budget - float(ratio.reshape(-1)[flat]),
               _node(grid, flat))


def ledger_check(state, background, params):
    """Evaluate every ledger bound node-wise on one iterate.

    The tangential-derivative bounds must hold for each derivative
    choice (x or y, and either intrinsic field), so the recorded value
    is the pointwise worst choice.  All reductions are plain numpy
    maxima over fixed orderings, so reports are reproducible bit for
    bit.
    """
    grid = state.grid
    bg = background
    if not grid.same_nodes(bg.grid):
        raise GridMismatch("state and background grids differ")
    if bg.d_xz_ubar is None or bg.d_xx_ubar is None:
        raise DomainError("ledger needs full-detail background tables")
    p = params.barrier
    eps = params.eps
    report = DiagnosticsReport(meta={
        "config_hash": params.config_hash, "grid": grid.shape,
        "eps": eps, "eps0": p.eps0, "timestamp": time.time(),
    })

    du = np.abs(state.u - bg.ubar)
    dv = np.abs(state.v - bg.ubar)
    _sup_entry(report, grid, "zt-value", du + dv, eps)

    dzu = d_z(grid, state.u)
    dzv = d_z(grid, state.v)
    ddzu = np.abs(dzu - bg.d_z_ubar)
    ddzv = np.abs(dzv - bg.d_z_ubar)
    _sup_entry(report, grid, "zt-dz", ddzu + ddzv, eps)

    dxu, dyu = d_x(grid, state.u), d_y(grid, state.u)
    dxv, dyv = d_x(grid, state.v), d_y(grid, state.v)
    worst_u = np.maximum(np.abs(dxu - bg.d_x_ubar), np.abs(dyu - bg.d_x_ubar))
    worst_v = np.maximum(np.abs(dxv - bg.d_x_ubar), np.abs(dyv - bg.d_x_ubar))
    _sup_entry(report, grid, "zt-dxy", worst_u + worst_v, eps)

    worst_u = np.maximum(np.abs(d_z(grid, dxu) - bg.d_xz_ubar),
                         np.abs(d_z(grid, dyu) - bg.d_xz_ubar))
    worst_v = np.maximum(np.abs(d_z(grid, dxv) - bg.d_xz_ubar),
                         np.abs(d_z(grid, dyv) - bg.d_xz_ubar))
    _sup_entry(report, grid, "zt-dz-dxy", worst_u + worst_v, eps)

    def second_tangential(fx, fy):
        out = np.abs(d_x(grid, fx) - bg.d_xx_ubar)
        for fld in (fy,):
            out = np.maximum(out, np.abs(d_x(grid, fld) - bg.d_xx_ubar))
            out = np.maximum(out, np.abs(d_y(grid, fld) - bg.d_xx_ubar))
        out = np.maximum(out, np.abs(d_y(grid, fx) - bg.d_xx_ubar))
        return out

    _sup_entry(report, grid, "zt-dxy2",
               second_tangential(dxu, dyu) + second_tangential(dxv, dyv),
               eps)

    dzzu = d_z(grid, dzu)
    dzzv = d_z(grid, dzv)
    _sup_entry(report, grid, "zt-dzz",
               np.abs(dzzu - bg.d_zz_ubar) + np.abs(dzzv - bg.d_zz_ubar),
               2.0 * eps)

    # weighted bootstrap family
    alpha = p.alpha
    d0 = params.d0
    phi10 = eval_phi1(grid, p, 0.0).values
    phi1a = eval_phi1(grid, p, alpha).values
    w = eval_phi1(grid, p, 1.0 + 2.0 * alpha).values
    _weighted_entry(report, grid, "ledger-w-value", np.maximum(du, dv), w,
                    d0 * eps**6)
    _weighted_entry(report, grid, "ledger-w-dz", np.maximum(ddzu, ddzv),
                    phi1a, d0 * eps**5)

    ctx = make_context(state, bg, check_admissibility=False)
    tau = bg.d_x_ubar - (bg.int_dx_ubar / bg.ubar) * bg.d_z_ubar
    worst = None
    for op in (apply_xi, apply_eta):
        for fld in (state.u, state.v):
            dd = np.abs(op(ctx, fld) - tau)
            worst = dd if worst is None else np.maximum(worst, dd)
    _weighted_entry(report, grid, "ledger-w-vf", worst,
                    eval_phi1(grid, p, 1.0).values, d0 * eps**2)

    dz_tau = d_z(grid, tau)
    worst = None
    for op in (apply_xi, apply_eta):
        for fld in (state.u, state.v):
            dd = np.abs(d_z(grid, op(ctx, fld)) - dz_tau)
            worst = dd if worst is None else np.maximum(worst, dd)
    _weighted_entry(report, grid, "ledger-w-dz-vf", worst, phi1a,
                    d0 * eps**2)

    tau2 = d_x(grid, tau) - (bg.int_dx_ubar / bg.ubar) * dz_tau
    worst = None
    for outer in (apply_xi, apply_eta):
        for inner in (apply_xi, apply_eta):
            for fld in (state.u, state.v):
                dd = np.abs(outer(ctx, inner(ctx, fld)) - tau2)
                worst = dd if worst is None else np.maximum(worst, dd)
    _weighted_entry(report, grid, "ledger-w-vf2", worst,
                    eval_phi1(grid, p, 0.5 * alpha).values, d0 * eps**2)

    wall_scale = float(np.min(bg.ubar[:, :, 0] / bg.d_z_ubar[:, :, 0]))
    _, _, z = grid.meshgrid()
    cap = (eps / (1.0 + alpha / 7.0)) \
        * np.minimum(1.0, (z + wall_scale) ** alpha)
    _min_entry(report, grid, "ledger-dzz-cap",
               cap - np.abs(dzzu - bg.d_zz_ubar) * np.ones(grid.shape))

    floor = params.c0 * phi10 ** 1.5
    _min_entry(report, grid, "ledger-shear-floor",
               np.minimum(dzu, dzv) - floor)

    K = commutator_K_direct(ctx)
    _sup_entry(report, grid, "ledger-K", np.abs(K), eps**2 * params.C2)
    dzk = dz_K(ctx, K)
    _min_entry(report, grid, "ledger-dzK",
               (eps**2 * params.C / state.u) * phi10 - np.abs(dzk))

    _sup_entry(report, grid, "ledger-qtilde", np.abs(ctx.qtilde), 0.5)

    report.require_complete(LEDGER_CHECK_IDS)
    return report


def _pointwise_zt_margin(state, background, eps):
    """Min over the six conclusion bounds of the pointwise margin."""
    grid = state.grid
    bg = background
    du = np.abs(state.u - bg.ubar) + np.abs(state.v - bg.ubar)
    out = eps - du
    dzu, dzv = d_z(grid, state.u), d_z(grid, state.v)
    out = np.minimum(out, eps - np.abs(dzu - bg.d_z_ubar)
                     - np.abs(dzv - bg.d_z_ubar))
    dxu, dyu = d_x(grid, state.u), d_y(grid, state.u)
    dxv, dyv = d_x(grid, state.v), d_y(grid, state.v)
    t_u = np.maximum(np.abs(dxu - bg.d_x_ubar), np.abs(dyu - bg.d_x_ubar))
    t_v = np.maximum(np.abs(dxv - bg.d_x_ubar), np.abs(dyv - bg.d_x_ubar))
    out = np.minimum(out, eps - t_u - t_v)
    m_u = np.maximum(np.abs(d_z(grid, dxu) - bg.d_xz_ubar),
                     np.abs(d_z(grid, dyu) - bg.d_xz_ubar))
    m_v = np.maximum(np.abs(d_z(grid, dxv) - bg.d_xz_ubar),
                     np.abs(d_z(grid, dyv) - bg.d_xz_ubar))
    out = np.minimum(out, eps - m_u - m_v)
    s_u = np.maximum.reduce([np.abs(d_x(grid, dxu) - bg.d_xx_ubar),
                             np.abs(d_y(grid, dxu) - bg.d_xx_ubar),
                             np.abs(d_x(grid, dyu) - bg.d_xx_ubar),
                             np.abs(d_y(grid, dyu) - bg.d_xx_ubar)])
    s_v = np.maximum.reduce([np.abs(d_x(grid, dxv) - bg.d_xx_ubar),
                             np.abs(d_y(grid, dxv) - bg.d_xx_ubar),
                             np.abs(d_x(grid, dyv) - bg.d_xx_ubar),
                             np.abs(d_y(grid, dyv) - bg.d_xx_ubar)])
    out = np.minimum(out, eps - s_u - s_v)
    out = np.minimum(out, 2.0 * eps - np.abs(d_z(grid, dzu) - bg.d_zz_ubar)
                     - np.abs(d_z(grid, dzv) - bg.d_zz_ubar))
    return out


def _plot_field(state, quantity, background, eps):
    grid = state.grid
    if quantity == "u":
        return state.u
    if quantity == "v":
        return state.v
    if quantity == "q":
        return state.q
    if quantity == "psi":
        return state.psi
    if quantity == "dzu":
        return d_z(grid, state.u)
    if quantity == "K":
        ctx = make_context(state, background, check_admissibility=False)
        return commutator_K_direct(ctx)
    if quantity == "residual":
        if background is None:
            raise DomainError("residual needs the background tables")
        from .solver import scheme_residual
        ru, rv = scheme_residual(background, state, state)
        return np.maximum(np.abs(ru), np.abs(rv))
    if quantity == "barrier-margins":
        if background is None or eps is None:
            raise DomainError("barrier margins need background and eps")
        if background.d_xz_ubar is None:
            raise DomainError("barrier margins need full-detail tables")
        return _pointwise_zt_margin(state, background, eps)
    raise UnknownQuantity(quantity)


def emit_plot_data(state, quantity, slice_spec, background=None, eps=None):
    """Extract one plane of a named quantity as deterministic CSV text.

    slice_spec is ``axis=value`` with axis x, y, or z; the nearest grid
    plane is taken.  Rows run over the first remaining axis slowly and
    the second quickly, matching storage order.
    """
    if quantity not in PLOT_QUANTITIES:
        raise UnknownQuantity(quantity)
    grid = state.grid
    try:
        axis, _, val = slice_spec.partition("=")
        axis = axis.strip()
        level = float(val)
    except ValueError:
        raise DomainError(f"bad slice spec {slice_spec!r}") from None
    nodes = {"x": grid.x_nodes, "y": grid.y_nodes, "z": grid.z_nodes}
    if axis not in nodes:
        raise DomainError(f"slice axis must be x, y, or z, got {axis!r}")
    idx = int(np.argmin(np.abs(nodes[axis] - level)))

    field = _plot_field(state, quantity, background, eps)
    if axis == "x":
        plane, c1, c2 = field[idx], grid.y_nodes, grid.z_nodes
    elif axis == "y":
        plane, c1, c2 = field[:, idx], grid.x_nodes, grid.z_nodes
    else:
        plane, c1, c2 = field[:, :, idx], grid.x_nodes, grid.y_nodes
    lines = ["coord1,coord2,value"]
    for i, a in enumerate(c1):
        for j, b in enumerate(c2):
            lines.append(f"{a:.17g},{b:.17g},{plane[i, j]:.17g}")
    return "\n".join(lines) + "\n"
