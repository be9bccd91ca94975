"""Log-domain evaluation of point-to-point and point-to-line partition functions.

Discrete model: a path from (m, s) to (n, t) is a tuple of jump times on the
grid, strictly increasing and strictly inside (s, t); each tuple carries
weight exp(sum of level increments) * dt^(n-m).  This "strict simplex" rule
is left-endpoint quadrature of the nested integrals except that the single
node at the base point is excluded, which makes the model exactly
supermultiplicative, makes forward and backward recursions agree to machine
precision, and makes conditional densities exact ratios of partition values.

The level recursion for all grid endpoints at once is

    log Z_n(t) = B_n(t) + log dt + LSE_{u < t} ( log Z_{n-1}(u) - B_n(u) ),

a running log-sum-exp accumulation, O(grid) per level.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .environment import BrownianField, TimeGrid
from .errors import GridAlignmentError, TruncationError
from .numerics import NEG_INF, trigamma

DEFAULT_KAPPA = 6.0
DEFAULT_TAIL_FRACTION_MAX = 1e-3


def exponential_tail_horizon(lam: float) -> float:
    """Distance over which an exp(-lam x) weight beats Brownian wander.

    30/lam of pure exponential decay plus a 10*sqrt(30/lam) fluctuation
    allowance; also used as the default stationary-recursion horizon.
    """
    return 30.0 / lam + 10.0 * math.sqrt(30.0 / lam)


def polymer_endpoint_cut(lam: float, k_levels: int, kappa: float = DEFAULT_KAPPA) -> float:
    """Forward cutoff (relative to the base time) for point-to-line sums.

    kappa characteristic slopes per level, floored at the exponential-tail
    horizon so that few-level sums are not cut inside the fluctuation zone.
    """
    return max(kappa * k_levels * trigamma(lam), exponential_tail_horizon(lam))


def lpp_endpoint_cut(lam: float, k_levels: int, kappa: float = DEFAULT_KAPPA) -> float:
    """Same as polymer_endpoint_cut with the last-passage slope 1/lam^2."""
    return max(kappa * k_levels / (lam * lam), exponential_tail_horizon(lam))


@dataclass
class PartitionSlices:
    """Rows of log Z_{(m,s),(k,x)} over grid endpoints x, one row per level k."""

    grid: TimeGrid
    base_level: int
    base_time: float
    logz: np.ndarray  # shape (n_max - m + 1, n_points)

    @property
    def top_level(self) -> int:
        return self.base_level + self.logz.shape[0] - 1

    def row(self, level: int) -> np.ndarray:
        if level < self.base_level or level > self.top_level:
            raise GridAlignmentError(f"level {level} outside [{self.base_level}, {self.top_level}]")
        return self.logz[level - self.base_level]

    def value(self, level: int, t: float) -> float:
        return float(self.row(level)[self.grid.index_of(t)])


@dataclass
class BackwardSlices:
    """Rows of log Z_{(k,x),(n,t)} over grid start points x, one row per level k."""

    grid: TimeGrid
    terminal_level: int
    terminal_time: float
    logv: np.ndarray  # shape (n - m_min + 1, n_points), row 0 = level m_min
    level_lo: int

    def row(self, level: int) -> np.ndarray:
        if level < self.level_lo or level > self.terminal_level:
            raise GridAlignmentError(f"level {level} outside [{self.level_lo}, {self.terminal_level}]")
        return self.logv[level - self.level_lo]

    def value(self, level: int, x: float) -> float:
        return float(self.row(level)[self.grid.index_of(x)])


def forward_slices(field_: BrownianField, base: tuple[int, float], n_max: int) -> PartitionSlices:
    """Forward DP from base=(m, s) up to level n_max over the whole grid."""
    m, s = base
    grid = field_.grid
    j0 = grid.index_of(s)
    if n_max < m:
        raise GridAlignmentError(f"n_max {n_max} below base level {m}")
    J = grid.n_points
    logdt = math.log(grid.dt)
    rows = np.full((n_max - m + 1, J), NEG_INF)
    base_cum = field_.level_values(m)
    rows[0, j0:] = base_cum[j0:] - base_cum[j0]
    for lev in range(m + 1, n_max + 1):
        cum = field_.level_values(lev)
        c = rows[lev - m - 1] - cum
        c[:j0 + 1] = NEG_INF
        acc = np.logaddexp.accumulate(c)
        rows[lev - m, j0 + 1:] = cum[j0 + 1:] + logdt + acc[j0:-1]
    return PartitionSlices(grid, m, grid.time_of(j0), rows)


def backward_slices(field_: BrownianField, terminal: tuple[int, float], level_lo: int) -> BackwardSlices:
    """Backward DP from terminal=(n, t) down to level_lo over the whole grid."""
    n, t = terminal
    grid = field_.grid
    j1 = grid.index_of(t)
    if level_lo > n:
        raise GridAlignmentError(f"level_lo {level_lo} above terminal level {n}")
    J = grid.n_points
    logdt = math.log(grid.dt)
    rows = np.full((n - level_lo + 1, J), NEG_INF)
    cum = field_.level_values(n)
    rows[n - level_lo, :j1 + 1] = cum[j1] - cum[:j1 + 1]
    for lev in range(n - 1, level_lo - 1, -1):
        cum = field_.level_values(lev)
        d = rows[lev - level_lo + 1] + cum
        d[j1:] = NEG_INF
        racc = np.logaddexp.accumulate(d[::-1])[::-1]
        rows[lev - level_lo, :j1] = -cum[:j1] + logdt + racc[1:j1 + 1]
    return BackwardSlices(grid, n, grid.time_of(j1), rows, level_lo)


def point_to_point_log_z(field_: BrownianField, x: tuple[int, float], y: tuple[int, float]) -> float:
    """log Z between ordered space-time points; B_m(s,t) itself when m == n."""
    (m, s), (n, t) = x, y
    if n < m or t < s - 1e-9 * field_.grid.dt:
        raise GridAlignmentError(f"points {x} and {y} are not ordered")
    if m == n:
        return field_.increment(m, s, t)
    return forward_slices(field_, x, n).value(n, t)


@dataclass(frozen=True)
class Restriction:
    """Half-open restriction lo <= tau_n < hi on the free endpoint.

    ``below(T)`` is the event {tau_n < T}; ``above(T)`` is {tau_n > T},
    realized as nodes >= T so the two recompose the unrestricted value
    exactly; ``interval(S, T)`` is {S <= tau_n <= T} realized as [S, T).
    """

    lo: float = NEG_INF
    hi: float = math.inf

    @classmethod
    def none(cls) -> "Restriction":
        return cls()

    @classmethod
    def below(cls, t: float) -> "Restriction":
        return cls(hi=t)

    @classmethod
    def above(cls, t: float) -> "Restriction":
        return cls(lo=t)

    @classmethod
    def interval(cls, s: float, t: float) -> "Restriction":
        return cls(lo=s, hi=t)


@dataclass
class BoundaryWeight:
    """Terminal-line weight exp(-bar_B(x) - lam*x) for point-to-line sums.

    ``values`` holds bar_B on the working grid (anchored like the field's
    cumulative rows); None means the zero field.
    """

    lam: float
    values: np.ndarray | None = None
    grid: TimeGrid | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    @classmethod
    def zero(cls, lam: float) -> "BoundaryWeight":
        return cls(lam, None, None)

    @classmethod
    def env_level(cls, field_: BrownianField, level: int, lam: float) -> "BoundaryWeight":
        return cls(lam, field_.level_values(level), field_.grid)

    @classmethod
    def from_values(cls, grid: TimeGrid, values: np.ndarray, lam: float) -> "BoundaryWeight":
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n_points,):
            raise GridAlignmentError("boundary values must cover the whole grid")
        return cls(lam, values, grid)

    def row_for(self, grid: TimeGrid) -> np.ndarray:
        if self.values is None:
            return np.zeros(grid.n_points)
        if self.grid is not None and self.grid != grid:
            raise GridAlignmentError("boundary weight grid does not match the working grid")
        return self.values


@dataclass
class PointToLineValue:
    """Result of a truncated point-to-line sum, with its tail diagnostic.

    ``tail_log_fraction`` is the log of the mass fraction carried by the last
    tenth of the summation range before the cutoff; ``truncated`` says whether
    the upper limit came from the kappa-cutoff rather than the restriction.
    """

    value: float
    tail_log_fraction: float
    x_cut: float
    n_nodes: int
    truncated: bool


def point_to_line_log_zbar(
    field_: BrownianField,
    boundary: BoundaryWeight,
    base: tuple[int, float],
    n: int,
    restriction: Restriction = Restriction(),
    kappa: float = DEFAULT_KAPPA,
    tail_fraction_max: float = DEFAULT_TAIL_FRACTION_MAX,
    slices: PartitionSlices | None = None,
    check_tail: bool = True,
    min_cut: float | None = None,
) -> PointToLineValue:
    """log of sum_x exp(-bar_B(x) - lam*x) * Z_{(m,s),(n,x)} * dt over the
    restricted endpoint range.

    The infinite upper limit is cut at x_cut = s + kappa*(n-m+1)*trigamma(lam)
    (the dominant endpoint slope is trigamma(lam) per level), floored at the
    exponential-tail horizon; the last-decade mass fraction before the cut is
    reported and enforced as a diagnostic.  Pass min_cut=0 to disable the
    floor and exercise the bare kappa rule.
    """
    m, s = base
    grid = field_.grid
    j0 = grid.index_of(s)
    if slices is None:
        slices = forward_slices(field_, base, n)
    row = slices.row(n)
    floor = exponential_tail_horizon(boundary.lam) if min_cut is None else min_cut
    x_cut = s + max(kappa * (n - m + 1) * trigamma(boundary.lam), floor)
    lo_idx = j0 + 1
    if restriction.lo != NEG_INF:
        lo_idx = max(lo_idx, grid.index_of(restriction.lo))
    truncated = not math.isfinite(restriction.hi)
    if truncated:
        hi_idx = min(grid.n_points, int(math.floor((x_cut - grid.t_min) / grid.dt)) + 1)
    else:
        hi_idx = grid.index_of(restriction.hi)
    if hi_idx <= lo_idx:
        return PointToLineValue(NEG_INF, NEG_INF, x_cut, 0, truncated)
    bvals = boundary.row_for(grid)
    times = grid.times()
    w = (row[lo_idx:hi_idx] - bvals[lo_idx:hi_idx]
         - boundary.lam * times[lo_idx:hi_idx] + math.log(grid.dt))
    value = _lse(w)
    n_nodes = hi_idx - lo_idx
    tail_start = max(0, n_nodes - max(1, n_nodes // 10))
    tail = _lse(w[tail_start:]) - value if value != NEG_INF else NEG_INF
    result = PointToLineValue(value, tail, x_cut, n_nodes, truncated)
    if check_tail and truncated and value != NEG_INF and tail > math.log(tail_fraction_max):
        raise TruncationError(
            f"tail mass fraction exp({tail:.3f}) at x_cut={x_cut:.3f} exceeds "
            f"{tail_fraction_max}; extend the grid or raise kappa"
        )
    return result


def _lse(w: np.ndarray) -> float:
    if w.size == 0:
        return NEG_INF
    m = float(np.max(w))
    if m == NEG_INF or not math.isfinite(m):
        return m if w.size else NEG_INF
    return m + math.log(float(np.sum(np.exp(w - m))))


@dataclass
class SdeSlices:
    """Exponential Euler-Maruyama solution rows, same layout as PartitionSlices."""

    grid: TimeGrid
    base_level: int
    base_time: float
    logz: np.ndarray

    def row(self, level: int) -> np.ndarray:
        return self.logz[level - self.base_level]

    def value(self, level: int, t: float) -> float:
        return float(self.row(level)[self.grid.index_of(t)])


def evolve_sde(field_: BrownianField, m: int, s: float, n_max: int,
               t_max: float | None = None) -> SdeSlices:
    """Integrate the coupled level system dZ_n = Z_{n-1} dt + Z_n dB_n in log
    coordinates with an exponential Euler step.

    Per step the standing mass is multiplied by exp(dB_n) while the incoming
    dt-term mass enters without the noise factor; this differs from the exact
    level recursion at O(dt) per step, which is the point of the cross-check.
    The m-row stays the pure exponential of B_m.
    """
    grid = field_.grid
    j0 = grid.index_of(s)
    j1 = grid.n_points - 1 if t_max is None else grid.index_of(t_max)
    levels = n_max - m + 1
    logdt = math.log(grid.dt)
    cums = np.stack([field_.level_values(lev) for lev in range(m, n_max + 1)])
    db = np.diff(cums, axis=1)
    out = np.full((levels, grid.n_points), NEG_INF)
    state = np.full(levels, NEG_INF)
    state[0] = 0.0
    out[0, j0] = 0.0
    for j in range(j0, j1):
        grown = state + db[:, j]
        incoming = np.concatenate(([NEG_INF], state[:-1] + logdt))
        state = np.logaddexp(grown, incoming)
        out[:, j + 1] = state
    return SdeSlices(grid, m, grid.time_of(j0), out)


def slices_to_csv(slices: PartitionSlices, path) -> None:
    """CSV export with columns (level, time, logZ)."""
    times = slices.grid.times()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "time", "logZ"])
        for k in range(slices.logz.shape[0]):
            level = slices.base_level + k
            for j, t in enumerate(times):
                v = slices.logz[k, j]
                if v != NEG_INF:
                    writer.writerow([level, f"{t:.12g}", f"{v:.12g}"])
