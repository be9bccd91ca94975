"""Discretized field of independent two-sided Brownian motions.

Level streams are generated by the counter-based Philox generator keyed on
(seed, level), so any level can be materialized independently of the others
and identically across runs.  Gaussian variates come from numpy's
``Generator.standard_normal`` (ziggurat transform of the Philox counter
stream), which is deterministic for a fixed numpy version.

Times live on a uniform grid and the public API rejects off-grid queries
instead of interpolating.  Increments are served from per-level cumulative
arrays anchored at the grid's left edge, so additivity and antisymmetry of
``B_i(s, t)`` hold exactly in floating point.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import GridAlignmentError, MemoryBudgetError

DEFAULT_MEMORY_BUDGET = 1 << 27  # floats; 1 GiB of increments


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid [t_min, t_max] with step dt; may include negative times."""

    t_min: float
    t_max: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise GridAlignmentError(f"dt must be positive, got {self.dt}")
        if not self.t_min < self.t_max:
            raise GridAlignmentError(f"need t_min < t_max, got [{self.t_min}, {self.t_max}]")
        n = round((self.t_max - self.t_min) / self.dt)
        if n < 1 or abs(self.t_min + n * self.dt - self.t_max) > 1e-9 * self.dt:
            raise GridAlignmentError(
                f"t_max - t_min = {self.t_max - self.t_min} is not a multiple of dt = {self.dt}"
            )

    @property
    def n_points(self) -> int:
        return round((self.t_max - self.t_min) / self.dt) + 1

    def index_of(self, t: float) -> int:
        """Exact grid index of time t; raises on off-grid times."""
        k = round((t - self.t_min) / self.dt)
        if k < 0 or k >= self.n_points or abs(self.t_min + k * self.dt - t) > 1e-9 * self.dt:
            raise GridAlignmentError(f"time {t} is not on the grid [{self.t_min}, {self.t_max}] step {self.dt}")
        return k

    def time_of(self, k: int) -> float:
        return self.t_min + k * self.dt

    def times(self) -> np.ndarray:
        return self.t_min + self.dt * np.arange(self.n_points)

    def coarsened(self, factor: int) -> "TimeGrid":
        if factor < 1 or (self.n_points - 1) % factor != 0:
            raise GridAlignmentError(f"grid with {self.n_points} points cannot coarsen by {factor}")
        return TimeGrid(self.t_min, self.t_max, self.dt * factor)

    @classmethod
    def spanning(cls, t_lo: float, t_hi: float, dt: float, snap_to: float | None = None) -> "TimeGrid":
        """Smallest grid with step dt covering [t_lo, t_hi], ends snapped to
        multiples of snap_to (default dt; pass a coarser step when the grid
        must support coarsening)."""
        unit = dt if snap_to is None else snap_to
        import math as _math
        lo = _math.floor(t_lo / unit) * unit
        hi = _math.ceil(t_hi / unit) * unit
        if hi <= lo:
            hi = lo + unit
        return cls(lo, hi, dt)


class BrownianField:
    """Common read surface for environments and derived views.

    ``level_values(i)`` returns the cumulative array ``B_i(t_min, t_j)`` over
    the whole grid, which is what the dynamic-programming engines consume.
    """

    grid: TimeGrid
    level_lo: int
    level_hi: int

    def level_values(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def _check_level(self, i: int):
        if i < self.level_lo or i > self.level_hi:
            raise GridAlignmentError(f"level {i} outside [{self.level_lo}, {self.level_hi}]")

    def increment(self, i: int, s: float, t: float) -> float:
        """B_i(s, t) = B_i(t) - B_i(s); antisymmetric and additive exactly."""
        self._check_level(i)
        vals = self.level_values(i)
        return float(vals[self.grid.index_of(t)] - vals[self.grid.index_of(s)])

    def scaled(self, beta: float) -> "ScaledField":
        return ScaledField(self, beta)

    def shifted(self, c: float) -> "ShiftedField":
        return ShiftedField(self, c)


class Environment(BrownianField):
    """Materialized Gaussian increments for a contiguous range of levels."""

    def __init__(self, seed: int, grid: TimeGrid, level_range: tuple[int, int],
                 increments: np.ndarray):
        lo, hi = level_range
        self.seed = seed
        self.grid = grid
        self.level_lo = lo
        self.level_hi = hi
        self.increments = increments
        zeros = np.zeros((increments.shape[0], 1))
        self._cum = np.concatenate([zeros, np.cumsum(increments, axis=1)], axis=1)

    @classmethod
    def generate(cls, seed: int, grid: TimeGrid, level_range: tuple[int, int],
                 memory_budget: int = DEFAULT_MEMORY_BUDGET) -> "Environment":
        lo, hi = level_range
        if hi < lo:
            raise GridAlignmentError(f"empty level range [{lo}, {hi}]")
        n_inc = grid.n_points - 1
        n_levels = hi - lo + 1
        if n_levels * n_inc > memory_budget:
            raise MemoryBudgetError(
                f"{n_levels} levels x {n_inc} increments exceeds budget {memory_budget}"
            )
        sigma = np.sqrt(grid.dt)
        inc = np.empty((n_levels, n_inc))
        for row, level in enumerate(range(lo, hi + 1)):
            inc[row] = _level_generator(seed, level).standard_normal(n_inc) * sigma
        return cls(seed, grid, level_range, inc)

    def level_values(self, i: int) -> np.ndarray:
        self._check_level(i)
        return self._cum[i - self.level_lo]

    def level_increments(self, i: int) -> np.ndarray:
        self._check_level(i)
        return self.increments[i - self.level_lo]

    def coarsened(self, factor: int) -> "ArrayField":
        """Same Brownian paths on a grid coarsened by an integer factor."""
        grid = self.grid.coarsened(factor)
        cum = self._cum[:, ::factor].copy()
        return ArrayField(grid, (self.level_lo, self.level_hi), cum)

    def dump(self, path) -> None:
        """Binary dump: header (seed, grid, levels) + little-endian increments."""
        header = struct.pack(
            "<8sqdddii", b"OYENV\x00\x00\x01", self.seed,
            self.grid.t_min, self.grid.t_max, self.grid.dt,
            self.level_lo, self.level_hi,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.increments.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Environment":
        with open(path, "rb") as fh:
            header = fh.read(struct.calcsize("<8sqdddii"))
            magic, seed, t_min, t_max, dt, lo, hi = struct.unpack("<8sqdddii", header)
            if magic != b"OYENV\x00\x00\x01":
                raise ValueError(f"not an environment dump: magic {magic!r}")
            grid = TimeGrid(t_min, t_max, dt)
            n_inc = grid.n_points - 1
            payload = fh.read(8 * (hi - lo + 1) * n_inc)
        inc = np.frombuffer(payload, dtype="<f8").reshape(hi - lo + 1, n_inc).copy()
        return cls(seed, grid, (lo, hi), inc)


def _level_generator(seed: int, level: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, level & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(master: int, *indices: int) -> int:
    """Hierarchical seed splitting (experiment seed -> replicate -> stream):
    stable across runs and platforms, and adding replicates never perturbs
    existing ones."""
    ss = np.random.SeedSequence([master, *indices])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class ArrayField(BrownianField):
    """Field backed by explicit cumulative rows (e.g. transformed weights)."""

    def __init__(self, grid: TimeGrid, level_range: tuple[int, int], cum_rows: np.ndarray):
        lo, hi = level_range
        if cum_rows.shape != (hi - lo + 1, grid.n_points):
            raise GridAlignmentError(
                f"cumulative rows shape {cum_rows.shape} does not match "
                f"{hi - lo + 1} levels x {grid.n_points} grid points"
            )
        self.grid = grid
        self.level_lo = lo
        self.level_hi = hi
        self._cum = cum_rows

    def level_values(self, i: int) -> np.ndarray:
        self._check_level(i)
        return self._cum[i - self.level_lo]


class ZeroField(BrownianField):
    """Identically zero environment; handy as a deterministic test fixture."""

    def __init__(self, grid: TimeGrid, level_range: tuple[int, int]):
        self.grid = grid
        self.level_lo, self.level_hi = level_range
        self._zeros = np.zeros(grid.n_points)

    def level_values(self, i: int) -> np.ndarray:
        self._check_level(i)
        return self._zeros


def zero_environment(grid: TimeGrid, level_range: tuple[int, int]) -> ZeroField:
    return ZeroField(grid, level_range)


class ScaledField(BrownianField):
    """View with increments multiplied by a positive inverse temperature."""

    def __init__(self, base: BrownianField, beta: float):
        if not beta > 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.base = base
        self.beta = beta
        self.grid = base.grid
        self.level_lo = base.level_lo
        self.level_hi = base.level_hi

    def level_values(self, i: int) -> np.ndarray:
        return self.beta * self.base.level_values(i)


class ShiftedField(BrownianField):
    """View with all times translated by a grid-aligned constant."""

    def __init__(self, base: BrownianField, c: float):
        k = round(c / base.grid.dt)
        if abs(k * base.grid.dt - c) > 1e-9 * base.grid.dt:
            raise GridAlignmentError(f"shift {c} is not a multiple of dt {base.grid.dt}")
        self.base = base
        self.shift = k * base.grid.dt
        self.grid = TimeGrid(base.grid.t_min + self.shift, base.grid.t_max + self.shift, base.grid.dt)
        self.level_lo = base.level_lo
        self.level_hi = base.level_hi

    def level_values(self, i: int) -> np.ndarray:
        return self.base.level_values(i)
