"""Comparison functions with ridges, the operators P1/P2, and their verifiers.

Two barrier families: phi1 lives in the similarity ratio r = (z+eps0)/
sqrt(x+1) with zones wall-power / plateau / Gaussian tail, and phi2
composes the same zone structure with the stream function.  The piecewise
junctions ("ridges") fall between grid nodes; one-sided z-derivatives
jump downward across each ridge, which is what lets the maximum
principle exclude extrema there.  Scans that apply finite differences
exclude the two node layers bracketing each ridge.
"""

from dataclasses import dataclass

import numpy as np

from .grid import d_x, d_y, d_z
from .report import DiagnosticsReport
from . import vecfield as vf


@dataclass
class BarrierParams:
    """Shape constants shared by every barrier in one run."""

    A: float
    delta: float
    N: float
    mu: float
    alpha: float
    eps0: float

    def __post_init__(self):
        if self.A <= 0.0:
            raise ValueError("A must be positive")
        if not 0.0 < self.delta <= 0.5:
            raise ValueError("delta must lie in (0, 1/2]")
        if self.N <= self.delta:
            raise ValueError("N must exceed delta")
        if self.mu <= 0.0 or self.alpha <= 0.0 or self.eps0 <= 0.0:
            raise ValueError("mu, alpha, eps0 must be positive")


@dataclass
class BarrierEval:
    """Barrier values with one-sided z-derivatives and the ridge layers.

    Off the mask left_dz equals right_dz (the node's zone derivative);
    on the mask they hold the one-sided limits at the adjacent ridge
    surface, whose gap is strictly positive.
    """

    values: np.ndarray
    left_dz: np.ndarray
    right_dz: np.ndarray
    ridge_mask: np.ndarray


def _mark_bracketing(coord, target):
    """Mask of the node layers bracketing a monotone level crossing.

    coord: z-monotone 3D array, target: (nx, ny, 1) level per column.
    Marks the pair of consecutive layers whose interval contains the
    level, including exact hits.
    """
    mask = np.zeros(coord.shape, dtype=bool)
    hit = (coord[..., :-1] - target[..., 0:1] * np.ones_like(coord[..., :-1])) * (
        coord[..., 1:] - target[..., 0:1]
    ) <= 0.0
    # Guard against targets outside the column range.
    inside = (target[..., 0] >= coord[..., 0]) & (target[..., 0] <= coord[..., -1])
    hit &= inside[..., None]
    mask[..., :-1] |= hit
    mask[..., 1:] |= hit
    return mask


def eval_phi1(grid, params, beta):
    """The r-space barrier: r^beta wall zone, plateau, Gaussian tail."""
    p = params
    x, _, z = grid.meshgrid()
    sq = np.sqrt(x + 1.0)
    r = (z + p.eps0) / sq
    eax = np.exp(p.A * x)
    shape = grid.shape

    tail = p.delta**beta * np.exp(p.N**2 * p.mu) * np.exp(-p.mu * r * r)
    v1 = eax * r**beta
    v2 = eax * p.delta**beta
    v3 = eax * tail
    values = np.where(r <= p.delta, v1, np.where(r <= p.N, v2, v3))
    values = np.broadcast_to(values, shape).copy()

    d1 = eax * beta * r ** (beta - 1.0) / sq if beta > 0.0 else np.zeros(shape)
    d3 = eax * tail * (-2.0 * p.mu * (z + p.eps0) / (x + 1.0))
    deriv = np.where(r <= p.delta, d1, np.where(r <= p.N, 0.0, d3))
    deriv = np.broadcast_to(deriv, shape).copy()

    left = deriv.copy()
    right = deriv.copy()
    mask = np.zeros(shape, dtype=bool)
    r_full = np.broadcast_to(r, shape)
    x2 = np.broadcast_to(x, shape[:2] + (1,))

    ridges = []
    if beta > 0.0:
        # One-sided slopes at r = delta: wall-zone power from below, 0 above.
        lo = np.broadcast_to(
            np.exp(p.A * x2[..., 0]) * beta * p.delta ** (beta - 1.0)
            / np.sqrt(x2[..., 0] + 1.0),
            shape[:2],
        )
        ridges.append((p.delta, lo, np.zeros(shape[:2])))
    hi_lo = np.zeros(shape[:2])
    hi_hi = np.broadcast_to(
        np.exp(p.A * x2[..., 0]) * p.delta**beta
        * (-2.0 * p.mu * p.N / np.sqrt(x2[..., 0] + 1.0)),
        shape[:2],
    )
    ridges.append((p.N, hi_lo, hi_hi))

    for level, below, above in ridges:
        m = _mark_bracketing(r_full, np.full(shape[:2] + (1,), level))
        mask |= m
        left[m] = np.broadcast_to(below[..., None], shape)[m]
        right[m] = np.broadcast_to(above[..., None], shape)[m]
    return BarrierEval(values, left, right, mask)


def eval_phi2(grid, params, psi, beta, u=None):
    """The stream-function barrier for beta in [0, 1).

    z-derivatives come from the chain rule through psi, so the slope of
    psi (the streamwise velocity) is needed; it is recovered by finite
    differences when not passed in.
    """
    if u is None:
        u = d_z(grid, psi)
    return _phi2_eval(grid, params, psi, u, beta)


def _phi2_eval(grid, params, psi, u, beta):
    p = params
    x, _, _ = grid.meshgrid()
    sq = np.sqrt(x + 1.0) * np.ones_like(psi)
    w = psi / sq
    eax = np.exp(p.A * x) * np.ones_like(psi)
    tail = p.delta**beta * np.exp(p.N**2 * p.mu) * np.exp(-p.mu * psi * psi / (x + 1.0))

    with np.errstate(divide="ignore"):
        powv = np.where(w > 0.0, w**beta, 1.0 if beta == 0.0 else 0.0)
    values = np.where(w <= p.delta, eax * powv,
                      np.where(w <= p.N, eax * p.delta**beta, eax * tail))

    if beta > 0.0:
        with np.errstate(divide="ignore"):
            d1 = eax * beta * np.where(w > 0.0, w ** (beta - 1.0), 0.0) / sq * u
    else:
        d1 = np.zeros_like(values)
    d3 = eax * tail * (-2.0 * p.mu * psi / (x + 1.0)) * u
    deriv = np.where(w <= p.delta, d1, np.where(w <= p.N, 0.0, d3))

    left = deriv.copy()
    right = deriv.copy()
    mask = np.zeros(values.shape, dtype=bool)

    ridges = []
    if beta > 0.0:
        below = eax * beta * p.delta ** (beta - 1.0) / sq * u
        ridges.append((p.delta * sq, below, np.zeros_like(values)))
    above_hi = eax * p.delta**beta * (-2.0 * p.mu * p.N / sq) * u
    ridges.append((p.N * sq, np.zeros_like(values), above_hi))

    for level, below, above in ridges:
        m = _mark_bracketing(psi, level[..., :1])
        mask |= m
        left[m] = below[m]
        right[m] = above[m]
    return BarrierEval(values, left, right, mask)


def eval_phi2_ridge(grid, params, psi, u=None):
    """phi2 with unit exponent: rises as psi - psi^(1+alpha), then a plateau."""
    if u is None:
        u = d_z(grid, psi)
    p = params
    x, _, _ = grid.meshgrid()
    eax = np.exp(p.A * x) * np.ones_like(psi)
    rising = eax * (psi - psi ** (1.0 + p.alpha))
    plateau = eax * p.delta * (1.0 - p.delta**p.alpha)
    values = np.where(psi <= p.delta, rising, plateau)

    slope = eax * (1.0 - (1.0 + p.alpha) * psi**p.alpha) * u
    deriv = np.where(psi <= p.delta, slope, 0.0)

    left = deriv.copy()
    right = deriv.copy()
    level = np.full(psi.shape[:2] + (1,), p.delta)
    mask = _mark_bracketing(psi, level)
    below = eax * (1.0 - (1.0 + p.alpha) * p.delta**p.alpha) * u
    left[mask] = below[mask]
    right[mask] = 0.0
    return BarrierEval(values, left, right, mask)


def laplacian_z(grid, f):
    """Direct 3-point second z-difference (keeps ridge pollution local)."""
    z = grid.z_nodes
    out = np.empty_like(f)
    hm = z[1:-1] - z[:-2]
    hp = z[2:] - z[1:-1]
    out[..., 1:-1] = 2.0 * (
        hm * f[..., 2:] - (hm + hp) * f[..., 1:-1] + hp * f[..., :-2]
    ) / (hm * hp * (hm + hp))
    out[..., 0] = out[..., 1]
    out[..., -1] = out[..., -2]
    return out


def _tangential(ctx, w):
    g = ctx.grid
    return d_x(g, w) + (1.0 + ctx.qtilde) * d_y(g, w)


def apply_P1(ctx, state_n, w, route="euclidean"):
    """P1 w: tangential transport minus the conservative normal diffusion."""
    if route == "vf":
        return (vf.apply_xi(ctx, w) + (1.0 + ctx.qtilde) * vf.apply_eta(ctx, w)
                - vf.apply_psi(ctx, state_n.u * vf.apply_psi(ctx, w)))
    g = ctx.grid
    u, un = ctx.state.u, state_n.u
    btilde = ctx.G + (1.0 + ctx.qtilde) * ctx.F
    wz = d_z(g, w)
    return (_tangential(ctx, w) - btilde * wz
            - (un / u**2) * laplacian_z(g, w)
            - (d_z(g, un / u) / u) * wz)


def apply_P2(ctx, state_n, w, route="euclidean"):
    """P2 w: like P1 but with the non-divergence form of the diffusion."""
    if route == "vf":
        psi_w = vf.apply_psi(ctx, w)
        return (vf.apply_xi(ctx, w) + (1.0 + ctx.qtilde) * vf.apply_eta(ctx, w)
                - state_n.u * vf.apply_psi(ctx, psi_w))
    g = ctx.grid
    u, un = ctx.state.u, state_n.u
    btilde = ctx.G + (1.0 + ctx.qtilde) * ctx.F
    wz = d_z(g, w)
    return (_tangential(ctx, w) - btilde * wz
            - (un / u**2) * laplacian_z(g, w)
            + (un * d_z(g, u) / u**3) * wz)


def _interior_scan_mask(grid, ridge_mask=None):
    """Open-domain scan: drop the x=0 and y=0 inflow faces and ridge layers."""
    keep = np.ones(grid.shape, dtype=bool)
    keep[0, :, :] = False
    keep[:, 0, :] = False
    if ridge_mask is not None:
        keep &= ~ridge_mask
    return keep


def _zone_entry(report, check_id, zone, grid, pvals, weight, keep):
    """Record the largest c2 with P >= c2 * weight on the kept nodes."""
    sel = keep & (weight > 0.0)
    if not np.any(sel):
        report.add(check_id, zone, np.inf, passed=True)
        return
    ratio = np.where(sel, pvals / np.where(sel, weight, 1.0), np.inf)
    flat = np.argmin(ratio)
    i, j, k = np.unravel_index(flat, grid.shape)
    c2 = float(ratio[i, j, k])
    report.add(check_id, zone, c2,
               (grid.x_nodes[i], grid.y_nodes[j], grid.z_nodes[k]))
    report.meta.setdefault("c2_est", {})[check_id] = c2


def verify_barrier_inequalities(ctx, state_n, params, delta0=None):
    """Scan every barrier inequality off the ridge layers; margins are the
    measured c2 (or the raw gap for the far-zone bound with no constant)."""
    grid = ctx.grid
    p = params
    if delta0 is None:
        delta0 = p.delta
    x, _, z = grid.meshgrid()
    r = (z + p.eps0) / np.sqrt(x + 1.0)
    psi = ctx.state.psi
    u = ctx.state.u
    report = DiagnosticsReport(meta={"A": p.A, "delta": p.delta, "N": p.N,
                                     "mu": p.mu, "alpha": p.alpha,
                                     "eps0": p.eps0, "delta0": delta0})

    near = np.broadcast_to(z <= delta0, grid.shape)
    far = np.broadcast_to(r > p.N, grid.shape)
    # Wall and top rows use one-sided second differences; keep them out of
    # the quantitative scans.
    zlayers = np.ones(grid.shape, dtype=bool)
    zlayers[..., 0] = False
    zlayers[..., -1] = False

    phi10 = eval_phi1(grid, p, 0.0)
    phi1a = eval_phi1(grid, p, p.alpha)
    phi2b = _phi2_eval(grid, p, psi, u, 0.5)
    phi20 = _phi2_eval(grid, p, psi, u, 0.0)
    phi21 = eval_phi2_ridge(grid, p, psi, u)

    p1_phi1a = apply_P1(ctx, state_n, phi1a.values)
    p1_phi10 = apply_P1(ctx, state_n, phi10.values)
    p2_phi2b = apply_P2(ctx, state_n, phi2b.values)
    p2_phi20 = apply_P2(ctx, state_n, phi20.values)
    p2_phi21 = apply_P2(ctx, state_n, phi21.values)
    p2_phi10 = apply_P2(ctx, state_n, phi10.values)

    base = _interior_scan_mask(grid) & zlayers

    sing1 = (p.alpha * (1.0 - p.alpha) / (u * (z + p.eps0) ** 2) + p.A) * phi1a.values
    _zone_entry(report, "P1-phi1-alpha-near", "near", grid, p1_phi1a, sing1,
                base & near & ~_dilate_z(phi1a.ridge_mask))

    beta = 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        singpsi = np.where(psi > 0.0, psi ** (-1.5), np.inf)
        w2 = (beta * (1.0 - beta) * singpsi + p.A) * phi2b.values
    _zone_entry(report, "P2-phi2-beta-near", "near", grid, p2_phi2b, w2,
                base & near & ~_dilate_z(phi2b.ridge_mask) & np.isfinite(w2))

    with np.errstate(divide="ignore", invalid="ignore"):
        singa = np.where(psi > 0.0, psi ** (p.alpha - 1.5), np.inf)
        w21 = (p.alpha * singa + p.A) * phi21.values
    _zone_entry(report, "P2-phi2-1-near", "near", grid, p2_phi21, w21,
                base & near & ~_dilate_z(phi21.ridge_mask) & np.isfinite(w21)
                & (w21 > 0.0))

    glob = base
    wglob = p.A * phi10.values
    _zone_entry(report, "P1-phi1-alpha-global", "global", grid, p1_phi1a, wglob,
                glob & ~_dilate_z(phi1a.ridge_mask))
    _zone_entry(report, "P1-phi1-0-global", "global", grid, p1_phi10, wglob,
                glob & ~_dilate_z(phi10.ridge_mask))
    _zone_entry(report, "P2-phi2-beta-global", "global", grid, p2_phi2b, wglob,
                glob & ~_dilate_z(phi2b.ridge_mask))
    _zone_entry(report, "P2-phi2-0-global", "global", grid, p2_phi20, wglob,
                glob & ~_dilate_z(phi20.ridge_mask))
    _zone_entry(report, "P2-phi2-1-global", "global", grid, p2_phi21, wglob,
                glob & ~_dilate_z(phi21.ridge_mask))

    far_keep = base & far & ~_dilate_z(phi10.ridge_mask)
    gapf = p2_phi10 - p.A * phi10.values
    if np.any(far_keep):
        masked = np.where(far_keep, gapf, np.inf)
        flat = np.argmin(masked)
        i, j, k = np.unravel_index(flat, grid.shape)
        report.add("P2-phi1-0-far", "far", float(masked[i, j, k]),
                   (grid.x_nodes[i], grid.y_nodes[j], grid.z_nodes[k]))
        ratio = np.where(far_keep, p2_phi10 / (p.A * phi10.values), np.inf)
        report.meta.setdefault("c2_est", {})["P2-phi1-0-far"] = float(np.min(ratio))
    else:
        report.add("P2-phi1-0-far", "far", np.inf, passed=True)

    for name, ev in (("phi1-alpha", phi1a), ("phi2-1", phi21),
                     ("phi2-beta", phi2b), ("phi1-0", phi10)):
        if np.any(ev.ridge_mask):
            gap = ev.left_dz[ev.ridge_mask] - ev.right_dz[ev.ridge_mask]
            report.add(f"ridge-gap-{name}", "ridges", float(np.min(gap)))
        else:
            report.add(f"ridge-gap-{name}", "ridges", np.inf, passed=True)
    return report


def _dilate_z(mask):
    """Widen a mask by one layer in z (composed stencils smear one node)."""
    out = mask.copy()
    out[..., :-1] |= mask[..., 1:]
    out[..., 1:] |= mask[..., :-1]
    return out


@dataclass
class MaxPrincipleVerdict:
    """Outcome of a discrete maximum-principle check."""

    status: str
    interior_margin: float
    boundary_margin: float
    conclusion_margin: float
    tilt_B: float
    tilt_gap: float

    VERIFIED = "VERIFIED"
    HYPOTHESIS_FAILED = "HYPOTHESIS_FAILED"
    CONCLUSION_FAILED = "CONCLUSION_FAILED"


def discrete_max_principle(ctx, state_n, f, b=0.0, c=0.0, exclude=None,
                           interior_tol=1e-8, boundary_tol=1e-12,
                           conclusion_tol=1e-12):
    """Check L f <= 0 inside, f <= 0 on inflow/wall/top faces, then f <= 0.

    L is the P2-type operator plus b (psi-direction drift) and zeroth
    order c.  The margins are signed maxima, so negative means satisfied
    with room.  The exponential tilt used in the proof of the principle
    is evaluated as an internal certificate: tilting by e^{-Bx} with
    B above the c-bound must reproduce L up to the stencil error.
    """
    grid = ctx.grid
    u, un = ctx.state.u, state_n.u
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)

    def L(field):
        wz = d_z(grid, field)
        return (_tangential(ctx, field)
                - (ctx.G + (1.0 + ctx.qtilde) * ctx.F) * wz
                - (un / u**2) * laplacian_z(grid, field)
                + (un * d_z(grid, u) / u**3) * wz
                + b * wz / u + c * field)

    lf = L(f)
    interior = np.ones(grid.shape, dtype=bool)
    interior[0, :, :] = False
    interior[..., 0] = False
    interior[..., -1] = False
    if exclude is not None:
        interior &= ~exclude

    interior_margin = float(np.max(lf[interior])) if np.any(interior) else -np.inf
    faces = [f[0, :, :], f[:, 0, :], f[..., 0], f[..., -1]]
    boundary_margin = float(max(np.max(face) for face in faces))
    conclusion_margin = float(np.max(f))

    B = float(np.max(np.abs(c))) + 1.0
    x = grid.meshgrid()[0]
    tilt = np.exp(-B * x) * np.ones_like(f)
    g_t = f * tilt
    lg = L(g_t)
    tilt_gap = float(np.max(np.abs(lg - (tilt * lf - B * g_t))[interior])) \
        if np.any(interior) else 0.0

    if interior_margin > interior_tol or boundary_margin > boundary_tol:
        status = MaxPrincipleVerdict.HYPOTHESIS_FAILED
    elif conclusion_margin > conclusion_tol:
        status = MaxPrincipleVerdict.CONCLUSION_FAILED
    else:
        status = MaxPrincipleVerdict.VERIFIED
    return MaxPrincipleVerdict(status, interior_margin, boundary_margin,
                               conclusion_margin, B, tilt_gap)
