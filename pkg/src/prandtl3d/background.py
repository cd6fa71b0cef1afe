"""Rotated self-similar shear background with analytic derivative tables.

The 2D profile is evaluated at the rotated argument m = (x+y)/2 and
shifted off the wall by eps0, so every stored field is a closed-form
expression in the Blasius functions at zeta = (z+eps0)/sqrt(2(m+x0)).
Finite differences appear only in cross-checks; the solver consumes the
analytic tables directly because it divides by them.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .report import DiagnosticsReport

X_LIMIT = 0.2


@dataclass
class BackgroundProfile:
    """Lifted background velocity and its derivative tables."""

    grid: object
    eps0: float
    mu: float
    x0: float
    blasius: object
    ubar: np.ndarray
    one_minus_ubar: np.ndarray
    d_z_ubar: np.ndarray
    d_x_ubar: np.ndarray
    d_zz_ubar: np.ndarray
    wbar: np.ndarray
    int_dx_ubar: np.ndarray
    d_xz_ubar: np.ndarray = None
    d_xx_ubar: np.ndarray = None
    d_zzz_ubar: np.ndarray = None
    constants: dict = field(default_factory=dict)

    @property
    def vbar(self):
        """The second tangential component equals the first by rotation."""
        return self.ubar


def _similarity(profile, grid, eps0, x0):
    x, y, z = grid.meshgrid()
    m = 0.5 * (x + y)
    S = np.sqrt(2.0 * (m + x0))
    zeta = (z + eps0) / S
    return m, S, zeta


def mu_window(profile, grid, eps0, x0=None, candidates=None):
    """Admissible decay-rate interval measured on this grid.

    Three clamps: the tail envelope must not outrun 1-ubar or its
    derivatives (upper), the wall-shear floor with its 3/2-rate must stay
    under d_z ubar up to a factor-2 sag (lower), and the plain top-plane
    envelope with unit constant must hold (upper).  Each candidate is
    tested on the four domain-corner columns.
    """
    if x0 is None:
        x0 = profile.x0
    if candidates is None:
        candidates = np.geomspace(0.02, 0.6, 97)
    X, Y, Zmax = grid.X, grid.Y, grid.Zmax
    z = grid.z_nodes
    ok_lo = []
    ok_hi = []
    for mu in candidates:
        hi_pass = True
        lo_pass = True
        for xc in (0.0, X):
            for yc in (0.0, Y):
                S = np.sqrt(2.0 * (0.5 * (xc + yc) + x0))
                zeta = (z + eps0) / S
                fld_hi = profile.one_minus_fp_at(zeta)
                env_hi = np.exp(-mu * (z + eps0) ** 2 / (xc + 1.0))
                near = env_hi >= np.exp(-1.0)
                if near.sum() < 2 or near.all():
                    hi_pass = False
                else:
                    C = 2.0 * np.max(fld_hi[near] / env_hi[near])
                    if np.min(C * env_hi[~near] - fld_hi[~near]) <= 0.0:
                        hi_pass = False
                if fld_hi[-1] > np.exp(-mu * Zmax**2 / (X + 1.0)):
                    hi_pass = False

                fld_lo = profile.fpp_at(zeta) / S
                env_lo = np.exp(-1.5 * mu * (z + eps0) ** 2 / (1.0 + X))
                near = env_lo >= np.exp(-1.0)
                if near.sum() < 2 or near.all():
                    lo_pass = False
                else:
                    c = 0.5 * np.min(fld_lo[near] / env_lo[near])
                    if c <= 0.0 or np.min(fld_lo[~near] - c * env_lo[~near]) <= 0.0:
                        lo_pass = False
        ok_hi.append(hi_pass)
        ok_lo.append(lo_pass)
    ok_hi = np.array(ok_hi)
    ok_lo = np.array(ok_lo)
    both = ok_hi & ok_lo
    if not both.any():
        raise DomainError(
            "no decay rate satisfies both tail clamps on this grid; "
            "deepen the z-range or reduce eps0"
        )
    lo = float(candidates[both.argmax()])
    hi = float(candidates[len(both) - 1 - both[::-1].argmax()])
    return lo, hi


def build_background(b, g, eps0, mu=None, detail="full"):
    """Populate the background tables on grid g with wall lift eps0."""
    if eps0 <= 0.0:
        raise DomainError("eps0 must be positive")
    if g.X >= X_LIMIT or g.Y >= X_LIMIT:
        raise DomainError(
            f"tangential extent must stay below {X_LIMIT}; got X={g.X}, Y={g.Y}"
        )
    x0 = b.x0
    if mu is None:
        lo, hi = mu_window(b, g, eps0, x0)
        mu = float(np.sqrt(lo * hi))
    m, S, zeta = _similarity(b, g, eps0, x0)
    f = b.f_at(zeta)
    fp = b.fp_at(zeta)
    fpp = b.fpp_at(zeta)

    ubar = fp * np.ones(g.shape)
    one_minus = b.one_minus_fp_at(zeta) * np.ones(g.shape)
    d_z = fpp / S
    d_x = -fpp * zeta / (2.0 * S**2)
    d_zz = -f * fpp / S**2
    wbar = (zeta * fp - f) / S

    zeta0 = np.full(g.shape[:2] + (1,), eps0) / S
    f0 = b.f_at(zeta0)
    fp0 = b.fp_at(zeta0)
    int_dx = -((zeta * fp - f) - (zeta0 * fp0 - f0)) / (2.0 * S)

    prof = BackgroundProfile(
        grid=g, eps0=eps0, mu=mu, x0=x0, blasius=b,
        ubar=ubar, one_minus_ubar=one_minus, d_z_ubar=d_z * np.ones(g.shape),
        d_x_ubar=d_x * np.ones(g.shape), d_zz_ubar=d_zz * np.ones(g.shape),
        wbar=wbar * np.ones(g.shape), int_dx_ubar=int_dx * np.ones(g.shape),
    )
    if detail == "full":
        fppp = -f * fpp
        prof.d_xz_ubar = (-(fppp * zeta + fpp) / (2.0 * S**3)) * np.ones(g.shape)
        prof.d_xx_ubar = (zeta * (fppp * zeta + 3.0 * fpp) / (4.0 * S**4)) \
            * np.ones(g.shape)
        prof.d_zzz_ubar = (fpp * (f * f - fp) / S**3) * np.ones(g.shape)
    return prof


_TAIL_FIELDS = ("one_minus_ubar", "d_z_ubar", "d_x_ubar", "d_zz_ubar",
                "d_xz_ubar", "d_xx_ubar", "d_zzz_ubar")

CHECK_IDS = (
    "wall-positivity", "wall-shear-positivity", "u-equals-v", "symmetry",
    "momentum-residual", "continuity-residual", "shear-band-z1",
    "shear-band-wall", "floor-rate-dzu", "top-envelope",
    *(f"tail-rate-{name}" for name in _TAIL_FIELDS),
    "appendix-tau-ubar", "appendix-tau2-ubar", "appendix-dzz-ubar",
    "appendix-dzzz-ubar", "appendix-n2-ubar",
)


def _tail_entry(report, p, name, fld, consts):
    """Far-zone log margin of |field| under C * exp(-mu (z+eps0)^2/(x+1)).

    The constant is measured over the lower three quarters of the depth;
    the Blasius tail carries a subexponential growth factor against the
    pure Gaussian, so the field-to-envelope ratio peaks mid-depth and a
    thinner calibration zone would miss it.
    """
    grid = p.grid
    x, _, z = grid.meshgrid()
    env = np.exp(-p.mu * (z + p.eps0) ** 2 / (x + 1.0)) * np.ones(grid.shape)
    near = np.broadcast_to(z + p.eps0 <= 0.75 * (grid.Zmax + p.eps0), grid.shape)
    absf = np.abs(fld)
    key = f"C_{name}"
    if key not in consts:
        consts[key] = 2.0 * float(np.max(absf[near] / env[near]))
    C = consts[key]
    far = ~near
    if not far.any():
        report.add(f"tail-rate-{name}", "far", np.inf, passed=True)
        return
    with np.errstate(divide="ignore"):
        logm = np.log(C * env[far]) - np.log(np.maximum(absf[far], 1e-300))
    worst = float(np.min(logm))
    flat = np.argmin(np.where(far, np.log(C * env)
                              - np.log(np.maximum(absf, 1e-300)), np.inf))
    i, j, k = np.unravel_index(flat, grid.shape)
    report.add(f"tail-rate-{name}", "far", worst,
               (grid.x_nodes[i], grid.y_nodes[j], grid.z_nodes[k]))


def check_assumptions(p):
    """Evaluate positivity, symmetry, decay, and the growth-rate ledger.

    Constants left abstract by the theory are measured on the first call
    and persisted in p.constants, so a repeat check (or one on a finer
    grid) reuses them instead of re-fitting.
    """
    grid = p.grid
    consts = p.constants
    report = DiagnosticsReport(meta={"mu": p.mu, "eps0": p.eps0, "x0": p.x0})
    x, y, z = grid.meshgrid()

    report.add("wall-positivity", "wall", float(np.min(p.ubar[..., 0])))
    report.add("wall-shear-positivity", "wall", float(np.min(p.d_z_ubar[..., 0])))
    report.add("u-equals-v", "global", 1e-15 - float(np.max(np.abs(p.ubar - p.vbar))))

    sums = np.round(x + y, 12) * np.ones(grid.shape[:2] + (1,))
    spread = 0.0
    for s in np.unique(sums):
        cols = p.ubar[np.broadcast_to(sums == s, grid.shape)].reshape(-1, grid.shape[2])
        if len(cols) > 1:
            spread = max(spread, float(np.max(cols.max(axis=0) - cols.min(axis=0))))
    report.add("symmetry", "global", 1e-12 - spread)

    mom = (2.0 * p.ubar * p.d_x_ubar + p.wbar * p.d_z_ubar - p.d_zz_ubar)
    report.add("momentum-residual", "global", 1e-12 - float(np.max(np.abs(mom))))
    _, S, zeta = _similarity(p.blasius, grid, p.eps0, p.x0)
    dz_wbar = zeta * p.blasius.fpp_at(zeta) / S**2
    cont = 2.0 * p.d_x_ubar + dz_wbar
    report.add("continuity-residual", "global", 1e-12 - float(np.max(np.abs(cont))))

    shear = p.d_z_ubar
    band1 = z[0, 0] <= 1.0
    if "c0" not in consts:
        consts["c0"] = 0.5 * float(np.min(shear[..., band1]))
        consts["C0"] = 2.0 * float(np.max(shear[..., band1]))
        consts["delta_bar"] = 0.25
    c0, C0 = consts["c0"], consts["C0"]
    report.add("shear-band-z1", "z<=1", float(min(
        np.min(shear[..., band1]) - c0, C0 - np.max(shear[..., band1]))))
    bandw = z[0, 0] <= consts["delta_bar"]
    report.add("shear-band-wall", "wall-layer", float(min(
        np.min(shear[..., bandw]) - c0, 2.0 * C0 - np.max(shear[..., bandw]))))

    env_lo = np.exp(-1.5 * p.mu * (z + p.eps0) ** 2 / (1.0 + grid.X)) \
        * np.ones(grid.shape)
    near = env_lo >= np.exp(-1.0)
    if "c_floor" not in consts:
        consts["c_floor"] = 0.5 * float(np.min(shear[near] / env_lo[near]))
    cf = consts["c_floor"]
    far = ~near
    floor_margin = float(np.min(np.log(np.maximum(shear[far], 1e-300))
                                - np.log(cf * env_lo[far]))) if far.any() else np.inf
    report.add("floor-rate-dzu", "far", floor_margin)

    top_env = np.exp(-p.mu * grid.Zmax**2 / (grid.X + 1.0))
    report.add("top-envelope", "top",
               float(top_env - np.max(p.one_minus_ubar[..., -1])))

    for name in _TAIL_FIELDS:
        fld = getattr(p, name)
        if fld is None:
            report.add(f"tail-rate-{name}", "far", -np.inf, passed=False)
            continue
        _tail_entry(report, p, name, fld, consts)

    _appendix_entries(report, p, consts)
    return report


def _appendix_entries(report, p, consts):
    """Growth-rate ledger of the background under the intrinsic fields."""
    from .barriers import BarrierParams, eval_phi1
    from .grid import d_x as fd_x, d_z as fd_z

    grid = p.grid
    bp = BarrierParams(A=1.0, delta=0.25, N=4.0, mu=p.mu, alpha=0.5, eps0=p.eps0)
    phi10 = eval_phi1(grid, bp, 0.0).values
    phi11 = eval_phi1(grid, bp, 1.0).values

    tau_u = p.d_x_ubar - (p.int_dx_ubar / p.ubar) * p.d_z_ubar
    tau2_u = fd_x(grid, tau_u) - (p.int_dx_ubar / p.ubar) * fd_z(grid, tau_u)
    n2_u = (p.ubar * p.d_zz_ubar - p.d_z_ubar**2) / p.ubar**3

    checks = [
        ("appendix-tau-ubar", np.abs(tau_u), p.ubar * phi10),
        ("appendix-tau2-ubar", np.abs(tau2_u), p.ubar * phi10),
        ("appendix-dzz-ubar", np.abs(p.d_zz_ubar), p.ubar**2 * phi10),
        ("appendix-n2-ubar", np.abs(n2_u), phi10 / p.ubar**3),
    ]
    if p.d_zzz_ubar is not None:
        checks.insert(3, ("appendix-dzzz-ubar", np.abs(p.d_zzz_ubar), phi11))
    else:
        report.add("appendix-dzzz-ubar", "global", -np.inf, passed=False)
    for cid, lhs, rhs in checks:
        key = f"C_{cid}"
        if key not in consts:
            consts[key] = 2.0 * float(np.max(lhs / rhs))
        gap = consts[key] * rhs - lhs
        flat = np.argmin(gap)
        i, j, k = np.unravel_index(flat, grid.shape)
        report.add(cid, "global", float(gap[i, j, k]),
                   (grid.x_nodes[i], grid.y_nodes[j], grid.z_nodes[k]))
