"""Intrinsic vector fields, their brackets, the commutator K, and transforms.

The three fields absorb the non-local integral terms of the tangential
advection: along-xi is d/dx corrected by the accumulated x-dilation of u,
along-eta the same in y built on v, and the psi direction is the von Mises
normal (1/u) d/dz.  The commutator of the two tangential fields is vertical
with scalar coefficient K, which vanishes for symmetric flows and measures
how far a state is from an effectively two dimensional one.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityLost, DegenerateU
from .grid import cumulative_z, d_x, d_y, d_z


@dataclass
class VFContext:
    """Frozen coefficients of the intrinsic derivatives for one iterate."""

    state: object
    background: object
    G: np.ndarray
    F: np.ndarray
    qtilde: np.ndarray
    floor: float
    min_u: float = field(init=False)

    def __post_init__(self):
        self.min_u = float(np.min(self.state.u))

    @property
    def grid(self):
        return self.state.grid


def make_context(state, background=None, eps0=None, check_admissibility=True):
    """Build the vector-field context from an iterate.

    The admissibility floor is 1e-3 of the lift; states that dip below it
    are rejected because every operator here divides by u.  G and F are
    exactly zero on the wall since their numerators are cumulative
    z-integrals starting at 0.
    """
    if eps0 is None and background is not None:
        eps0 = background.eps0
    floor = 0.0 if eps0 is None else 1e-3 * eps0
    u, v = state.u, state.v
    if np.min(u) <= floor or np.min(v) <= 0.0:
        raise DegenerateU(
            f"min u = {np.min(u):.3e} at floor {floor:.3e}, min v = {np.min(v):.3e}"
        )
    qtilde = state.q / u
    if check_admissibility and np.max(np.abs(qtilde)) >= 0.5:
        raise AdmissibilityLost(
            f"max |qtilde| = {np.max(np.abs(qtilde)):.3e} >= 1/2"
        )
    return VFContext(
        state=state,
        background=background,
        G=state.int_dx_u / u,
        F=state.int_dy_v / v,
        qtilde=qtilde,
        floor=floor,
    )


def _require_admissible(ctx):
    if ctx.min_u <= ctx.floor:
        raise DegenerateU(f"min u = {ctx.min_u:.3e} at floor {ctx.floor:.3e}")


def apply_xi(ctx, f):
    """Along-xi derivative d/dx - G d/dz."""
    _require_admissible(ctx)
    g = ctx.grid
    return d_x(g, f) - ctx.G * d_z(g, f)


def apply_eta(ctx, f):
    """Along-eta derivative d/dy - F d/dz."""
    _require_admissible(ctx)
    g = ctx.grid
    return d_y(g, f) - ctx.F * d_z(g, f)


def apply_psi(ctx, f):
    """Normal derivative (1/u) d/dz."""
    _require_admissible(ctx)
    return d_z(ctx.grid, f) / ctx.state.u


_APPLY = {"xi": apply_xi, "eta": apply_eta, "psi": apply_psi}


def commutator_bracket(ctx, a, b, f):
    """[grad_a, grad_b] f by composing the discrete operators."""
    fa, fb = _APPLY[a], _APPLY[b]
    return fa(ctx, fb(ctx, f)) - fb(ctx, fa(ctx, f))


def commutator_K_direct(ctx):
    """K from its defining formula in the coefficient functions G and F."""
    g = ctx.grid
    return (d_y(g, ctx.G) - d_x(g, ctx.F)
            + ctx.G * d_z(g, ctx.F) - ctx.F * d_z(g, ctx.G))


def commutator_K_integral(ctx):
    """K from the integral representation: K u = -int_0^z u xi(eta q/(1+q))."""
    _require_admissible(ctx)
    u = ctx.state.u
    inner = apply_eta(ctx, ctx.qtilde) / (1.0 + ctx.qtilde)
    return cumulative_z(ctx.grid, -u * apply_xi(ctx, inner)) / u


def dz_K(ctx, K):
    """Closed-form z-derivative of K; avoids differencing K itself."""
    _require_admissible(ctx)
    u = ctx.state.u
    inner = apply_eta(ctx, ctx.qtilde) / (1.0 + ctx.qtilde)
    return -apply_xi(ctx, inner) - K * d_z(ctx.grid, u) / u


def to_euclidean(ctx, vf_derivs):
    """First-order intrinsic derivatives -> (d/dx, d/dy, d/dz)."""
    _require_admissible(ctx)
    u = ctx.state.u
    f_z = u * vf_derivs["psi"]
    return {
        "x": vf_derivs["xi"] + ctx.G * f_z,
        "y": vf_derivs["eta"] + ctx.F * f_z,
        "z": f_z,
    }


def from_euclidean(ctx, eu_derivs):
    """Inverse of to_euclidean; the pair is affine and exact at each node."""
    _require_admissible(ctx)
    f_z = eu_derivs["z"]
    return {
        "xi": eu_derivs["x"] - ctx.G * f_z,
        "eta": eu_derivs["y"] - ctx.F * f_z,
        "psi": f_z / ctx.state.u,
    }


def dzdx_via_vf(ctx, f):
    """Mixed derivative d/dz d/dx f assembled from intrinsic pieces."""
    g = ctx.grid
    fz = d_z(g, f)
    return (d_z(g, apply_xi(ctx, f)) + d_z(g, ctx.G) * fz
            + ctx.G * d_z(g, fz))


def d2x_via_vf(ctx, f):
    """Second x-derivative through the intrinsic expansion.

    d_x^2 = xi^2 + xi(G) d_z + G d_z d_x + G ((xi u)/u d_z + d_z xi);
    used as a cross-check of the transform identities, one order below
    the plain stencil.
    """
    g = ctx.grid
    u = ctx.state.u
    fz = d_z(g, f)
    xi_f = apply_xi(ctx, f)
    return (apply_xi(ctx, xi_f)
            + apply_xi(ctx, ctx.G) * fz
            + ctx.G * d_z(g, d_x(g, f))
            + ctx.G * ((apply_xi(ctx, u) / u) * fz + d_z(g, xi_f)))
