"""Brownian last-passage percolation: max-plus analogue of the polymer.

Same strict-simplex path convention as the partition module, with sums
replaced by suprema, so the DP equals exhaustive enumeration over grid jump
tuples exactly and path concatenation gives exact superadditivity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .environment import ArrayField, BrownianField, TimeGrid
from .errors import GridAlignmentError, TruncationError
from .numerics import NEG_INF
from .partition import BoundaryWeight, Restriction, exponential_tail_horizon

DEFAULT_KAPPA = 6.0


@dataclass
class LPPSlices:
    """Rows of L_{(m,s),(k,x)} over grid endpoints x, one row per level k."""

    grid: TimeGrid
    base_level: int
    base_time: float
    values: np.ndarray

    @property
    def top_level(self) -> int:
        return self.base_level + self.values.shape[0] - 1

    def row(self, level: int) -> np.ndarray:
        if level < self.base_level or level > self.top_level:
            raise GridAlignmentError(f"level {level} outside [{self.base_level}, {self.top_level}]")
        return self.values[level - self.base_level]

    def value(self, level: int, t: float) -> float:
        return float(self.row(level)[self.grid.index_of(t)])


def lpp_forward_slices(field_: BrownianField, base: tuple[int, float], n_max: int) -> LPPSlices:
    """Max-plus DP with a running prefix maximum, O(grid) per level."""
    m, s = base
    grid = field_.grid
    j0 = grid.index_of(s)
    J = grid.n_points
    rows = np.full((n_max - m + 1, J), NEG_INF)
    base_cum = field_.level_values(m)
    rows[0, j0:] = base_cum[j0:] - base_cum[j0]
    for lev in range(m + 1, n_max + 1):
        cum = field_.level_values(lev)
        c = rows[lev - m - 1] - cum
        c[:j0 + 1] = NEG_INF
        acc = np.maximum.accumulate(c)
        rows[lev - m, j0 + 1:] = cum[j0 + 1:] + acc[j0:-1]
    return LPPSlices(grid, m, grid.time_of(j0), rows)


def last_passage(field_: BrownianField, x: tuple[int, float], y: tuple[int, float]) -> float:
    """Longest path weight between ordered points; B_m(s,t) when m == n."""
    (m, s), (n, t) = x, y
    if n < m or t < s - 1e-9 * field_.grid.dt:
        raise GridAlignmentError(f"points {x} and {y} are not ordered")
    if m == n:
        return field_.increment(m, s, t)
    return lpp_forward_slices(field_, x, n).value(n, t)


def last_passage_enumerated(field_: BrownianField, x: tuple[int, float], y: tuple[int, float]) -> float:
    """Exhaustive max over all grid jump tuples; the small-instance oracle
    behind the O(grid) prefix formulation (kept behind this separate entry
    point, cost is binomial in the grid size)."""
    import itertools

    (m, s), (n, t) = x, y
    grid = field_.grid
    j0, j1 = grid.index_of(s), grid.index_of(t)
    if m == n:
        return field_.increment(m, s, t)
    cums = {k: field_.level_values(k) for k in range(m, n + 1)}
    best = NEG_INF
    for tup in itertools.combinations(range(j0 + 1, j1), n - m):
        nodes = (j0,) + tup + (j1,)
        energy = sum(cums[m + i][nodes[i + 1]] - cums[m + i][nodes[i]] for i in range(n - m + 1))
        best = max(best, energy)
    return best


@dataclass
class PointToLineMax:
    """Result of a truncated point-to-line maximum, with its diagnostics."""

    value: float
    argmax_time: float
    x_cut: float
    truncated: bool


def point_to_line_max(
    field_: BrownianField,
    boundary: BoundaryWeight,
    base: tuple[int, float],
    n: int,
    restriction: Restriction = Restriction(),
    kappa: float = DEFAULT_KAPPA,
    slices: LPPSlices | None = None,
    check_tail: bool = True,
    min_cut: float | None = None,
) -> PointToLineMax:
    """max over the restricted endpoint range of L_{(m,s),(n,x)} - bar_B(x) - lam*x.

    The forward cutoff uses the last-passage endpoint slope 1/lam^2 with the
    same kappa policy as the polymer; if the maximizer lands in the last
    decade of a truncated range the cutoff is suspect and an error is raised.
    """
    m, s = base
    grid = field_.grid
    j0 = grid.index_of(s)
    if slices is None:
        slices = lpp_forward_slices(field_, base, n)
    row = slices.row(n)
    floor = exponential_tail_horizon(boundary.lam) if min_cut is None else min_cut
    x_cut = s + max(kappa * (n - m + 1) / boundary.lam ** 2, floor)
    lo_idx = j0 + 1
    if restriction.lo != NEG_INF:
        lo_idx = max(lo_idx, grid.index_of(restriction.lo))
    truncated = not math.isfinite(restriction.hi)
    if truncated:
        hi_idx = min(grid.n_points, int(math.floor((x_cut - grid.t_min) / grid.dt)) + 1)
    else:
        hi_idx = grid.index_of(restriction.hi)
    if hi_idx <= lo_idx:
        return PointToLineMax(NEG_INF, math.nan, x_cut, truncated)
    times = grid.times()
    bvals = boundary.row_for(grid)
    w = row[lo_idx:hi_idx] - bvals[lo_idx:hi_idx] - boundary.lam * times[lo_idx:hi_idx]
    arg = int(np.argmax(w))
    value = float(w[arg])
    n_nodes = hi_idx - lo_idx
    if check_tail and truncated and arg >= n_nodes - max(1, n_nodes // 10):
        raise TruncationError(
            f"point-to-line maximizer at {times[lo_idx + arg]:.3f} sits in the last "
            f"decade before the cutoff {x_cut:.3f}; extend the grid or raise kappa"
        )
    return PointToLineMax(value, float(times[lo_idx + arg]), x_cut, truncated)


@dataclass
class LPPStationaryFields:
    """Stationary last-passage fields over the environment's grid.

    f_N(T) = f_{N-1}(T) + q_N(0) - q_N(T) and the transformed increments
    Btilde_{N-1} = B_N - q_N hold exactly as stored; entries left of
    ``valid_from`` carry truncation bias.
    """

    lam: float
    grid: TimeGrid
    n_max: int
    horizon: float
    q: np.ndarray       # (n_max, J); row N-1 holds q_N
    f: np.ndarray       # (n_max+1, J)
    btilde: np.ndarray  # (n_max, J)
    valid_from: float

    def q_row(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.n_max:
            raise GridAlignmentError(f"q defined for levels 1..{self.n_max}, got {n}")
        return self.q[n - 1]

    def q_at(self, n: int, t: float) -> float:
        return float(self.q_row(n)[self.grid.index_of(t)])

    def f_row(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.n_max:
            raise GridAlignmentError(f"f defined for levels 0..{self.n_max}, got {n}")
        return self.f[n]

    def btilde_row(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.n_max - 1:
            raise GridAlignmentError(f"Btilde defined for levels 0..{self.n_max - 1}, got {n}")
        return self.btilde[n]

    def btilde_increment(self, n: int, s: float, t: float) -> float:
        row = self.btilde_row(n)
        return float(row[self.grid.index_of(t)] - row[self.grid.index_of(s)])

    def tilde_field(self) -> ArrayField:
        return ArrayField(self.grid, (0, self.n_max - 1), self.btilde)

    def f_boundary(self, level: int) -> BoundaryWeight:
        return BoundaryWeight.from_values(self.grid, -self.f_row(level), self.lam)


def build_lpp_stationary_fields(field_: BrownianField, lam: float, n_max: int,
                                horizon: float | None = None) -> LPPStationaryFields:
    """Build q, f, and transformed-increment rows level by level.

    q_N(T) = sup_{s <= T} { B_N(s,T) + f_{N-1}(s,T) - lam (T-s) }, realized as
    a running prefix maximum from the grid's left edge (callers keep the edge
    at least one horizon below the evaluation window, and time 0 on the grid
    for the f recursion's anchor).
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    H = exponential_tail_horizon(lam) if horizon is None else horizon
    if lam * H < 30.0 - 1e-9:
        raise ValueError(f"horizon too short: lam*H = {lam * H:.1f} < 30")
    grid = field_.grid
    if grid.t_min + H >= grid.t_max:
        raise GridAlignmentError(
            f"grid [{grid.t_min}, {grid.t_max}] leaves no evaluation window above horizon {H}"
        )
    j_zero = grid.index_of(0.0)
    J = grid.n_points
    times = grid.times()
    q = np.empty((n_max, J))
    f = np.empty((n_max + 1, J))
    btilde = np.empty((n_max, J))
    f[0] = field_.level_values(0)
    for n in range(1, n_max + 1):
        cum = field_.level_values(n)
        c = -cum - f[n - 1] + lam * times
        acc = np.maximum.accumulate(c)
        q[n - 1] = (cum + f[n - 1] - lam * times) + acc
        f[n] = f[n - 1] + q[n - 1][j_zero] - q[n - 1]
        btilde[n - 1] = cum - q[n - 1]
    return LPPStationaryFields(lam, grid, n_max, H, q, f, btilde,
                               valid_from=grid.t_min + H)


def lpp_q_identity(fields: LPPStationaryFields, n: int, t: float,
                   forward_horizon: float | None = None) -> tuple[float, float]:
    """Forward reconstruction q_n(t) = sup_{s >= t} { Btilde_{n-1}(t,s) +
    f_n(t,s) + lam (t-s) }; returns (stored, reconstructed)."""
    grid = fields.grid
    H = exponential_tail_horizon(fields.lam) if forward_horizon is None else forward_horizon
    jt = grid.index_of(t)
    j_hi = min(grid.n_points - 1, jt + int(round(H / grid.dt)))
    bt = fields.btilde_row(n - 1)
    fr = fields.f_row(n)
    times = grid.times()
    s = slice(jt, j_hi + 1)
    w = (bt[s] - bt[jt]) + (fr[s] - fr[jt]) + fields.lam * (times[jt] - times[s])
    return fields.q_at(n, t), float(np.max(w))


@dataclass
class LPPStationaryRatioResult:
    lam: float
    s: float
    t: float
    n_list: list
    horizontal_residuals: dict
    vertical_residuals: dict
    horizontal_spread: float
    vertical_spread: float


def check_lpp_stationary_identities(field_: BrownianField, fields: LPPStationaryFields,
                                    n_list, s: float, t: float,
                                    kappa: float = DEFAULT_KAPPA) -> LPPStationaryRatioResult:
    """Differences of stationary point-to-line maxima: horizontally
    B_0(s,t) - lam (t-s), vertically q_1(t), independent of the level count."""
    n_list = sorted(n_list)
    if max(n_list) + 1 > fields.n_max:
        raise GridAlignmentError(f"need fields built to level {max(n_list) + 1}, have {fields.n_max}")
    tilde = fields.tilde_field()
    lam = fields.lam
    target_h = field_.increment(0, s, t) - lam * (t - s)
    target_v = fields.q_at(1, t)
    horiz, vert, h_raw, v_raw = {}, {}, [], []
    for n in n_list:
        lb_t = point_to_line_max(tilde, fields.f_boundary(n), (0, t), n - 1, kappa=kappa)
        lb_s = point_to_line_max(tilde, fields.f_boundary(n), (0, s), n - 1, kappa=kappa)
        diff_h = lb_t.value - lb_s.value
        lb_v0 = point_to_line_max(tilde, fields.f_boundary(n + 1), (0, t), n, kappa=kappa)
        lb_v1 = point_to_line_max(tilde, fields.f_boundary(n + 1), (1, t), n, kappa=kappa)
        diff_v = lb_v0.value - lb_v1.value
        h_raw.append(diff_h)
        v_raw.append(diff_v)
        horiz[n] = diff_h - target_h
        vert[n] = diff_v - target_v
    return LPPStationaryRatioResult(
        lam, s, t, list(n_list), horiz, vert,
        horizontal_spread=max(h_raw) - min(h_raw),
        vertical_spread=max(v_raw) - min(v_raw),
    )


@dataclass
class ComparisonGaps:
    """Signed slack of a crossing-comparison sandwich; both should be >= 0
    up to float rounding."""

    left_gap: float
    right_gap: float
    left: float
    middle: float
    right: float


def check_lpp_comparison(field_: BrownianField, boundary: BoundaryWeight, n: int, t: float,
                         pair: str = "vertical", s: float | None = None,
                         t_mid: float | None = None, base_time: float = 0.0,
                         kappa: float = DEFAULT_KAPPA) -> ComparisonGaps:
    """Crossing sandwich for last-passage differences.

    vertical (t is the common terminal time):
        Jbar(tau_n < t) <= L_{(0,b),(n,t)} - L_{(1,b),(n,t)} <= Jbar(tau_n > t)
    horizontal (bases (0, t_mid) and (0, s) with s < t_mid < t):
        Ibar(tau_n < t) <= L_{(0,t_mid),(n,t)} - L_{(0,s),(n,t)} <= Ibar(tau_n > t)
    """
    if pair == "vertical":
        base_a, base_b = (0, base_time), (1, base_time)
    elif pair == "horizontal":
        if s is None or t_mid is None or not s < t_mid < t:
            raise ValueError("horizontal pair needs s < t_mid < t")
        base_a, base_b = (0, t_mid), (0, s)
    else:
        raise ValueError(f"pair must be vertical or horizontal, got {pair!r}")
    return _comparison_core(field_, boundary, n, t, base_a, base_b, kappa)


def _comparison_core(field_, boundary, n, t_mid, base_a, base_b, kappa):
    sl_a = lpp_forward_slices(field_, base_a, n)
    sl_b = lpp_forward_slices(field_, base_b, n)
    middle = sl_a.value(n, t_mid) - sl_b.value(n, t_mid)
    grid = field_.grid
    # the upper event uses a common finite cutoff window, for which the
    # crossing inequality is exact; no unbounded-tail value is asserted
    cut = base_b[1] + max(kappa * (n + 1) / boundary.lam ** 2,
                          exponential_tail_horizon(boundary.lam))
    cut = min(grid.t_max, math.floor(cut / grid.dt) * grid.dt)
    below = Restriction.below(t_mid)
    above = Restriction.interval(t_mid, cut)
    la = point_to_line_max(field_, boundary, base_a, n, below, kappa, slices=sl_a)
    lb = point_to_line_max(field_, boundary, base_b, n, below, kappa, slices=sl_b)
    ra = point_to_line_max(field_, boundary, base_a, n, above, kappa, slices=sl_a)
    rb = point_to_line_max(field_, boundary, base_b, n, above, kappa, slices=sl_b)
    left = la.value - lb.value
    right = ra.value - rb.value
    return ComparisonGaps(middle - left, right - middle, left, middle, right)


def lpp_difference_sequence(field_: BrownianField, x: tuple[int, float], y: tuple[int, float],
                            theta: float, n_list, rule: str = "linear"):
    """Passage-time differences L_{x,(n,t_n)} - L_{y,(n,t_n)} along t_n/n ->
    theta, packaged with the same Cauchy diagnostics as the positive-
    temperature ratio sequences."""
    from .busemann import BusemannEstimate, endpoint_times, snap_theta

    n_list = sorted(n_list)
    theta = snap_theta(theta, field_.grid.dt)
    times = endpoint_times(theta, n_list, field_.grid.dt, rule)
    n_top = max(n_list)
    sx = lpp_forward_slices(field_, x, n_top)
    sy = lpp_forward_slices(field_, y, n_top)
    entries = [(n, times[n], sx.value(n, times[n]) - sy.value(n, times[n])) for n in n_list]
    return BusemannEstimate(x, y, theta, rule, entries)


@dataclass
class ZeroTemperatureGap:
    beta: float
    gap: float                 # (1/beta) log Z(beta B) - L
    corrected_gap: float       # gap minus the zero-environment entropy
    entropy_floor: float       # n log dt / beta; gap >= floor exactly


def zero_temperature_check(field_: BrownianField, x: tuple[int, float], y: tuple[int, float],
                           beta_list) -> list:
    """Gaps between the scaled positive-temperature free energy and the
    passage time at increasing inverse temperature.

    The gap sits between n log dt / beta (single maximal tuple) and the
    simplex-volume entropy over beta, both reported; its magnitude shrinks
    toward zero as beta grows.
    """
    from .free_energy import zero_env_log_volume
    from .partition import forward_slices

    (m, s), (n, t) = x, y
    grid = field_.grid
    lval = last_passage(field_, x, y)
    k = n - m
    k_steps = grid.index_of(t) - grid.index_of(s)
    entropy = zero_env_log_volume(grid.dt, k_steps, k)
    out = []
    for beta in sorted(beta_list):
        logz = forward_slices(field_.scaled(beta), x, n).value(n, t)
        gap = logz / beta - lval
        out.append(ZeroTemperatureGap(beta, gap, gap - entropy / beta,
                                      k * math.log(grid.dt) / beta))
    return out


def lpp_to_csv(slices: LPPSlices, path) -> None:
    """CSV export with columns (level, time, L)."""
    times = slices.grid.times()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "time", "L"])
        for k in range(slices.values.shape[0]):
            level = slices.base_level + k
            for j, t in enumerate(times):
                v = slices.values[k, j]
                if v != NEG_INF:
                    writer.writerow([level, f"{t:.12g}", f"{v:.12g}"])
