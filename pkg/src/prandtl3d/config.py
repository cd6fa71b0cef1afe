"""Run configuration: a line-oriented ``section.key = value`` format.

Sections and keys:

  grid     nx, ny, nz, X, Y, Zmax, stretch
  physics  eps, eps0_schedule, mu, x0, pert_mu, pert_amp, pert_kx,
           pert_ky, pert_phase_v
  barrier  A, delta, N, alpha, c0, C, C2, d0
  solver   picard_tol, picard_max, inner_tol, inner_max, upwind_order,
           u_floor, cfl_target, threads
  io       out_dir, snapshot_every

Blank lines and ``#`` comments are ignored.  Unknown keys are rejected
with the offending line number; only the six grid geometry keys are
required, everything else defaults.  ``eps0_schedule`` is a comma or
space separated list.  ``barrier.A = 0`` means "use 1/X", and zero
ledger constants mean "use the calibrated defaults".  The config hash
is the sha256 of the canonical sorted key=value listing, so formatting
and comments do not perturb it.
"""

import hashlib
import re
from dataclasses import dataclass, field

from .errors import DomainError, ParseError

_LINE_RE = re.compile(r"^([A-Za-z_]\w*)\.([A-Za-z_]\w*)\s*=\s*(.*\S)\s*$")


def _parse_schedule(text):
    parts = text.replace(",", " ").split()
    if not parts:
        raise ValueError("empty schedule")
    return tuple(float(p) for p in parts)


@dataclass
class GridBlock:
    nx: int
    ny: int
    nz: int
    X: float
    Y: float
    Zmax: float
    stretch: float = 0.0


@dataclass
class PhysicsBlock:
    eps: float = 1e-3
    eps0_schedule: tuple = (0.1, 0.05, 0.025)
    mu: float = 0.15
    x0: float = 1.0
    pert_mu: float = 0.05
    pert_amp: float = 1.0
    pert_kx: float = 3.0
    pert_ky: float = 2.0
    pert_phase_v: float = 1.0


@dataclass
class BarrierBlock:
    A: float = 0.0
    delta: float = 0.25
    N: float = 4.0
    alpha: float = 0.1
    c0: float = 0.0
    C: float = 0.0
    C2: float = 0.0
    d0: float = 0.0


@dataclass
class SolverBlock:
    picard_tol: float = 1e-10
    picard_max: int = 30
    inner_tol: float = 1e-11
    inner_max: int = 8
    upwind_order: int = 2
    u_floor: float = 1e-3
    cfl_target: float = 0.95
    threads: int = 0


@dataclass
class IoBlock:
    out_dir: str = "."
    snapshot_every: int = 0


_BLOCKS = {"grid": GridBlock, "physics": PhysicsBlock, "barrier": BarrierBlock,
           "solver": SolverBlock, "io": IoBlock}

_CONVERTERS = {
    ("grid", "nx"): int, ("grid", "ny"): int, ("grid", "nz"): int,
    ("grid", "X"): float, ("grid", "Y"): float, ("grid", "Zmax"): float,
    ("grid", "stretch"): float,
    ("physics", "eps"): float,
    ("physics", "eps0_schedule"): _parse_schedule,
    ("physics", "mu"): float, ("physics", "x0"): float,
    ("physics", "pert_mu"): float, ("physics", "pert_amp"): float,
    ("physics", "pert_kx"): float, ("physics", "pert_ky"): float,
    ("physics", "pert_phase_v"): float,
    ("barrier", "A"): float, ("barrier", "delta"): float,
    ("barrier", "N"): float, ("barrier", "alpha"): float,
    ("barrier", "c0"): float, ("barrier", "C"): float,
    ("barrier", "C2"): float, ("barrier", "d0"): float,
    ("solver", "picard_tol"): float, ("solver", "picard_max"): int,
    ("solver", "inner_tol"): float, ("solver", "inner_max"): int,
    ("solver", "upwind_order"): int, ("solver", "u_floor"): float,
    ("solver", "cfl_target"): float, ("solver", "threads"): int,
    ("io", "out_dir"): str, ("io", "snapshot_every"): int,
}

_REQUIRED = (("grid", "nx"), ("grid", "ny"), ("grid", "nz"),
             ("grid", "X"), ("grid", "Y"), ("grid", "Zmax"))


@dataclass
class RunConfig:
    grid: GridBlock
    physics: PhysicsBlock = field(default_factory=PhysicsBlock)
    barrier: BarrierBlock = field(default_factory=BarrierBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    io: IoBlock = field(default_factory=IoBlock)
    config_hash: str = ""

    def __post_init__(self):
        g, p = self.grid, self.physics
        if g.X > 0.2:
            raise DomainError(f"grid.X = {g.X} exceeds the 1/5 bound")
        if min(g.nx, g.ny, g.nz) < 8:
            raise DomainError("grid axes need at least 8 nodes")
        if min(g.X, g.Y, g.Zmax) <= 0.0 or g.stretch < 0.0:
            raise DomainError("grid extents must be positive")
        sched = tuple(float(e) for e in p.eps0_schedule)
        if not sched or min(sched) <= 0.0:
            raise DomainError("eps0 schedule must be positive")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise DomainError("eps0 schedule must decrease strictly")
        p.eps0_schedule = sched
        if p.eps < 0.0 or p.pert_mu <= 0.0:
            raise DomainError("physics amplitudes and rates out of range")
        if not self.config_hash:
            self.config_hash = hash_text(self.canonical())

    def canonical(self):
        """Sorted key=value listing used for hashing and reproduction."""
        lines = []
        for section, cls in sorted(_BLOCKS.items()):
            block = getattr(self, section)
            for key in sorted(vars(block)):
                val = getattr(block, key)
                if isinstance(val, tuple):
                    text = ",".join(repr(float(e)) for e in val)
                elif isinstance(val, float):
                    text = repr(val)
                else:
                    text = str(val)
                lines.append(f"{section}.{key}={text}")
        return "\n".join(lines) + "\n"

    def effective_A(self):
        return self.barrier.A if self.barrier.A > 0.0 else 1.0 / self.grid.X


def hash_text(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def parse_config(text):
    """Parse config text into a RunConfig; reject malformed or unknown keys."""
    seen = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if m is None:
            raise ParseError(f"expected section.key = value, got {raw!r}",
                             line_no)
        section, key, value = m.groups()
        conv = _CONVERTERS.get((section, key))
        if conv is None:
            raise ParseError(f"unknown key {section}.{key}", line_no)
        if (section, key) in seen:
            raise ParseError(f"duplicate key {section}.{key}", line_no)
        try:
            seen[(section, key)] = conv(value)
        except ValueError:
            raise ParseError(
                f"bad value {value!r} for {section}.{key}", line_no
            ) from None
    for section, key in _REQUIRED:
        if (section, key) not in seen:
            raise ParseError(f"missing required key {section}.{key}")
    blocks = {}
    for section, cls in _BLOCKS.items():
        kwargs = {k: v for (s, k), v in seen.items() if s == section}
        blocks[section] = cls(**kwargs)
    return RunConfig(**blocks)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def build_grid(cfg):
    from .grid import make_grid
    g = cfg.grid
    return make_grid(g.nx, g.ny, g.nz, g.X, g.Y, g.Zmax, g.stretch)


def build_pert(cfg):
    from .boundary import PerturbationSpec
    p, b = cfg.physics, cfg.barrier
    return PerturbationSpec(eps=p.eps, A=cfg.effective_A(), delta=b.delta,
                            N=b.N, mu=p.pert_mu, amp=p.pert_amp,
                            kx=p.pert_kx, ky=p.pert_ky,
                            phase_v=p.pert_phase_v)


def solver_config(cfg):
    from .solver import SolverConfig
    s, p = cfg.solver, cfg.physics
    return SolverConfig(eps=p.eps, eps0_schedule=p.eps0_schedule,
                        picard_tol=s.picard_tol, picard_max=s.picard_max,
                        inner_tol=s.inner_tol, inner_max=s.inner_max,
                        upwind_order=s.upwind_order,
                        u_floor_factor=s.u_floor,
                        cfl_target=s.cfl_target)


def barrier_params(cfg, eps0):
    from .barriers import BarrierParams
    b, p = cfg.barrier, cfg.physics
    return BarrierParams(A=cfg.effective_A(), delta=b.delta, N=b.N,
                         mu=p.pert_mu, alpha=b.alpha, eps0=eps0)
