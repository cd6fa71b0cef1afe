"""Structured grid, field storage, z-integrals, and the stream function.

Everything downstream (background tables, vector fields, the marching
solver, the verifiers) shares this substrate.  Fields live on a tensor
grid with x varying slowest and z fastest; all cumulative integrals run
along z with the trapezoid rule so they stay exact on piecewise-linear
integrands and preserve monotonicity for positive data.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonPositiveField


def _check_axis(name, nodes):
    if nodes.ndim != 1:
        raise DomainError(f"{name} nodes must be one dimensional")
    if nodes.size < 8:
        raise DomainError(f"{name} axis needs at least 8 nodes, got {nodes.size}")
    if nodes[0] != 0.0:
        raise DomainError(f"{name} axis must start at 0, got {nodes[0]}")
    if np.any(np.diff(nodes) <= 0.0):
        raise DomainError(f"{name} nodes must increase strictly")


@dataclass
class Grid3:
    """Tensor grid on [0,X] x [0,Y] x [0,Zmax]; x and y uniform, z optionally stretched."""

    x_nodes: np.ndarray
    y_nodes: np.ndarray
    z_nodes: np.ndarray
    X: float = field(init=False)
    Y: float = field(init=False)
    Zmax: float = field(init=False)

    def __post_init__(self):
        self.x_nodes = np.ascontiguousarray(self.x_nodes, dtype=float)
        self.y_nodes = np.ascontiguousarray(self.y_nodes, dtype=float)
        self.z_nodes = np.ascontiguousarray(self.z_nodes, dtype=float)
        for name, nodes in (("x", self.x_nodes), ("y", self.y_nodes),
                            ("z", self.z_nodes)):
            _check_axis(name, nodes)
        for name, nodes in (("x", self.x_nodes), ("y", self.y_nodes)):
            steps = np.diff(nodes)
            if np.max(steps) - np.min(steps) > 1e-12 * np.max(steps):
                raise DomainError(f"{name} axis must be uniform")
        self.X = float(self.x_nodes[-1])
        self.Y = float(self.y_nodes[-1])
        self.Zmax = float(self.z_nodes[-1])

    @property
    def shape(self):
        return (self.x_nodes.size, self.y_nodes.size, self.z_nodes.size)

    @property
    def dx(self):
        return float(self.x_nodes[1] - self.x_nodes[0])

    @property
    def dy(self):
        return float(self.y_nodes[1] - self.y_nodes[0])

    @property
    def dz(self):
        """z spacings as a 1D array (non-constant when stretched)."""
        return np.diff(self.z_nodes)

    def same_nodes(self, other):
        return (self.shape == other.shape
                and np.array_equal(self.x_nodes, other.x_nodes)
                and np.array_equal(self.y_nodes, other.y_nodes)
                and np.array_equal(self.z_nodes, other.z_nodes))

    def meshgrid(self):
        """Broadcastable (x, y, z) coordinate arrays."""
        return np.meshgrid(self.x_nodes, self.y_nodes, self.z_nodes,
                           indexing="ij", sparse=True)


def make_grid(nx, ny, nz, X, Y, Zmax, stretch=0.0):
    """Build a grid with uniform x, y and optionally tanh-clustered z.

    stretch = 0 gives a uniform z axis.  Positive values concentrate nodes
    near the wall: z_k = Zmax (1 - tanh(s (1 - t_k)) / tanh(s)).
    """
    if X <= 0.0 or Y <= 0.0 or Zmax <= 0.0:
        raise DomainError("domain extents must be positive")
    if stretch < 0.0:
        raise DomainError("stretch must be nonnegative")
    x = np.linspace(0.0, X, nx)
    y = np.linspace(0.0, Y, ny)
    if stretch == 0.0:
        z = np.linspace(0.0, Zmax, nz)
    else:
        t = np.linspace(0.0, 1.0, nz)
        z = Zmax * (1.0 - np.tanh(stretch * (1.0 - t)) / np.tanh(stretch))
        z[0] = 0.0
        z[-1] = Zmax
    return Grid3(x, y, z)


def cumulative_z(grid, f):
    """Trapezoid cumulative integral of f along z; zero at the wall."""
    f = np.asarray(f, dtype=float)
    seg = 0.5 * (f[..., 1:] + f[..., :-1]) * grid.dz
    out = np.empty_like(f)
    out[..., 0] = 0.0
    np.cumsum(seg, axis=-1, out=out[..., 1:])
    return out


def stream_function(grid, u):
    """psi = cumulative z-integral of u; requires u > 0 above the wall."""
    u = np.asarray(u, dtype=float)
    if np.any(u[..., 1:] <= 0.0):
        bad = np.argwhere(u[..., 1:] <= 0.0)[0]
        raise NonPositiveField(
            f"u <= 0 at index ({bad[0]}, {bad[1]}, {bad[2] + 1})"
        )
    return cumulative_z(grid, u)


def d_x(grid, f):
    """Second-order x-derivative (centered interior, one-sided edges)."""
    return np.gradient(f, grid.x_nodes, axis=0, edge_order=2)


def d_y(grid, f):
    return np.gradient(f, grid.y_nodes, axis=1, edge_order=2)


def d_z(grid, f):
    return np.gradient(f, grid.z_nodes, axis=2, edge_order=2)


def d_zz(grid, f):
    """Second z-derivative via two first-derivative passes (second order)."""
    return d_z(grid, d_z(grid, f))


@dataclass
class FieldState:
    """One velocity iterate with its derived storage.

    q, the cumulative integrals, and psi are computed once at construction
    and treated as read-only afterwards.
    """

    grid: Grid3
    u: np.ndarray
    v: np.ndarray
    q: np.ndarray
    int_dx_u: np.ndarray
    int_dy_v: np.ndarray
    psi: np.ndarray
    iterate_index: int = 0


def make_state(grid, u, v, iterate_index=0):
    """Assemble a FieldState, deriving q, the z-integrals, and psi."""
    u = np.ascontiguousarray(u, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    if u.shape != grid.shape or v.shape != grid.shape:
        raise DomainError(
            f"field shape {u.shape} does not match grid {grid.shape}"
        )
    if np.any(u[..., 0] <= 0.0):
        raise NonPositiveField("u must be positive at the wall (lifted formulation)")
    return FieldState(
        grid=grid,
        u=u,
        v=v,
        q=v - u,
        int_dx_u=cumulative_z(grid, d_x(grid, u)),
        int_dy_v=cumulative_z(grid, d_y(grid, v)),
        psi=stream_function(grid, u),
        iterate_index=iterate_index,
    )
