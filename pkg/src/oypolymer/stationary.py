"""Stationary boundary model for the positive-temperature polymer.

The driven field is built level by level from the recursion

    Ztil_N(T) = int_{-inf}^T exp(B_N(u,T)) Ztil_{N-1}(u) exp(-lam (T-u)) du,
    Ztil_0(T) = exp(-B_0(T)),

with the lower limit truncated at the grid's left edge, which callers must
keep at least one horizon H below the evaluation window.  Note the weight
carries no lam prefactor: that normalization is what makes exp(-r_1(0))
Gamma(lam, 1)-distributed and the involution identity hold; a prefactor
would rescale every ratio by lam.

Derived fields (log-ratios r, negated log field g, transformed increments
B-check) satisfy their defining recursions exactly as stored, and the
transformed increments can be fed back into any environment-consuming
operation via an ArrayField.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .environment import ArrayField, BrownianField, Environment, TimeGrid, derive_seed
from .errors import GridAlignmentError, TruncationError
from .numerics import NEG_INF, DistributionSpec, KSResult, ks_statistic
from .partition import (
    BoundaryWeight,
    PointToLineValue,
    Restriction,
    exponential_tail_horizon,
    forward_slices,
    point_to_line_log_zbar,
)


def default_horizon(lam: float) -> float:
    """Truncation horizon for the (-inf, T] integral: exponential tail mass
    plus a Brownian-fluctuation allowance."""
    return exponential_tail_horizon(lam)


@dataclass
class StationaryFields:
    """Jointly built stationary arrays over the environment's grid.

    Rows are anchored value functions over grid times; levels run 0..n_max
    for the log field and 1..n_max for the ratio field.  Entries left of
    ``valid_from`` (one horizon above the grid's left edge) carry visible
    truncation error and should not be read.
    """

    lam: float
    grid: TimeGrid
    n_max: int
    horizon: float
    log_ztil: np.ndarray        # (n_max+1, J)
    r: np.ndarray               # (n_max, J); row N-1 holds r_N
    bcheck: np.ndarray          # (n_max, J); row N-1 holds cumulative B-check_{N-1}
    valid_from: float

    def r_row(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.n_max:
            raise GridAlignmentError(f"r defined for levels 1..{self.n_max}, got {n}")
        return self.r[n - 1]

    def r_at(self, n: int, t: float) -> float:
        return float(self.r_row(n)[self.grid.index_of(t)])

    def g_row(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.n_max:
            raise GridAlignmentError(f"g defined for levels 0..{self.n_max}, got {n}")
        return -self.log_ztil[n]

    def g_increment(self, n: int, s: float, t: float) -> float:
        row = self.g_row(n)
        return float(row[self.grid.index_of(t)] - row[self.grid.index_of(s)])

    def bcheck_row(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.n_max - 1:
            raise GridAlignmentError(f"B-check defined for levels 0..{self.n_max - 1}, got {n}")
        return self.bcheck[n]

    def bcheck_increment(self, n: int, s: float, t: float) -> float:
        row = self.bcheck_row(n)
        return float(row[self.grid.index_of(t)] - row[self.grid.index_of(s)])

    def check_field(self) -> ArrayField:
        """Transformed increments as an environment view (levels 0..n_max-1)."""
        return ArrayField(self.grid, (0, self.n_max - 1), self.bcheck)

    def g_boundary(self, level: int) -> BoundaryWeight:
        """Boundary weight carrying the negated log field at the given level."""
        return BoundaryWeight.from_values(self.grid, -self.g_row(level), self.lam)


def build_stationary_fields(field_: BrownianField, lam: float, n_max: int,
                            horizon: float | None = None) -> StationaryFields:
    """Build log Ztil, r, and B-check rows for levels up to n_max."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    H = default_horizon(lam) if horizon is None else horizon
    if lam * H < 30.0 - 1e-9:
        raise ValueError(f"horizon too short: lam*H = {lam * H:.1f} < 30")
    grid = field_.grid
    if grid.t_min + H >= grid.t_max:
        raise GridAlignmentError(
            f"grid [{grid.t_min}, {grid.t_max}] leaves no evaluation window above horizon {H}"
        )
    J = grid.n_points
    times = grid.times()
    logdt = math.log(grid.dt)
    log_ztil = np.empty((n_max + 1, J))
    log_ztil[0] = -field_.level_values(0)
    for n in range(1, n_max + 1):
        cum = field_.level_values(n)
        c = log_ztil[n - 1] - cum + lam * times
        acc = np.logaddexp.accumulate(c)
        row = np.empty(J)
        row[1:] = cum[1:] - lam * times[1:] + logdt + acc[:-1]
        # the left edge has an empty node set; copy the neighbor so that the
        # derived rows stay finite (everything left of valid_from is
        # truncation-biased and must not be read anyway)
        row[0] = row[1]
        log_ztil[n] = row
    r = log_ztil[1:] - log_ztil[:-1]
    bcheck = np.empty((n_max, J))
    for n in range(1, n_max + 1):
        cum = field_.level_values(n)
        bcheck[n - 1] = (cum - cum[0]) - (r[n - 1] - r[n - 1][0])
    return StationaryFields(lam, grid, n_max, H, log_ztil, r, bcheck,
                            valid_from=grid.t_min + H)


def r_from_g(field_: BrownianField, fields: StationaryFields, n: int, t: float) -> float:
    """Recompute r_n(t) from the level-n increments and the level-(n-1) log
    field over the same quadrature nodes; algebraically identical to the
    stored ratio."""
    grid = fields.grid
    jt = grid.index_of(t)
    cum = field_.level_values(n)
    g_prev = fields.g_row(n - 1)
    times = grid.times()
    u = slice(0, jt)
    expo = ((cum[jt] - cum[u]) + (g_prev[jt] - g_prev[u])
            - fields.lam * (times[jt] - times[u]))
    m = float(np.max(expo))
    return m + math.log(float(np.sum(np.exp(expo - m)))) + math.log(grid.dt)


@dataclass
class InvolutionResult:
    lhs: float
    rhs: float
    residual: float
    tail_log_fraction: float


def check_involution(fields: StationaryFields, n: int, t: float,
                     forward_horizon: float | None = None,
                     tail_fraction_max: float = 1e-3) -> InvolutionResult:
    """Forward reconstruction of r_n(t) from the transformed increments and
    the level-n log field:

        r_n(t) = log int_t^inf exp(Bcheck_{n-1}(t,s) + g_n(t,s) + lam (t-s)) ds,

    truncated one horizon ahead of t.  Returns both sides and the truncation
    diagnostic (last-decade log mass fraction).
    """
    grid = fields.grid
    H = default_horizon(fields.lam) if forward_horizon is None else forward_horizon
    jt = grid.index_of(t)
    j_hi = min(grid.n_points - 1, jt + int(round(H / grid.dt)))
    if j_hi <= jt + 1:
        raise GridAlignmentError(f"grid does not extend beyond t={t} for the forward horizon")
    bc = fields.bcheck_row(n - 1)
    g = fields.g_row(n)
    times = grid.times()
    s = slice(jt + 1, j_hi + 1)
    expo = ((bc[s] - bc[jt]) + (g[s] - g[jt]) + fields.lam * (times[jt] - times[s])
            + math.log(grid.dt))
    m = float(np.max(expo))
    rhs = m + math.log(float(np.sum(np.exp(expo - m))))
    n_nodes = expo.size
    tail_slice = expo[-max(1, n_nodes // 10):]
    mt = float(np.max(tail_slice))
    tail_frac = mt + math.log(float(np.sum(np.exp(tail_slice - mt)))) - rhs
    lhs = fields.r_at(n, t)
    if tail_frac > math.log(tail_fraction_max):
        raise TruncationError(
            f"involution tail fraction exp({tail_frac:.2f}) not negligible: the "
            f"forward integral was cut at {grid.time_of(j_hi):.2f} (grid end "
            f"{grid.t_max:.2f}, requested horizon {H:.2f} past t={t:.2f})"
        )
    return InvolutionResult(lhs, rhs, abs(lhs - rhs), tail_frac)


@dataclass
class StationaryRatioResult:
    """Residuals of the stationary point-to-line ratio identities."""

    lam: float
    s: float
    t: float
    n_list: list
    horizontal_residuals: dict      # N -> deviation from B_0(s,t) - lam (t-s)
    vertical_residuals: dict        # N -> deviation from r_1(t)
    horizontal_spread: float
    vertical_spread: float


def check_stationary_ratio(field_: BrownianField, fields: StationaryFields,
                           n_list, s: float, t: float,
                           kappa: float = 6.0) -> StationaryRatioResult:
    """Evaluate the boundary-model ratio identities on the transformed field.

    With transformed increments as the environment and the negated log field
    as the terminal weight, the horizontal ratio equals
    exp(B_0(s,t) - lam (t-s)) and the vertical ratio equals exp(r_1(t)),
    independently of the level count N.
    """
    n_list = sorted(n_list)
    if max(n_list) + 1 > fields.n_max:
        raise GridAlignmentError(
            f"need fields built to level {max(n_list) + 1}, have {fields.n_max}"
        )
    check = fields.check_field()
    lam = fields.lam
    target_h = field_.increment(0, s, t) - lam * (t - s)
    target_v = fields.r_at(1, t)
    horiz = {}
    vert = {}
    h_raw = []
    v_raw = []
    for n in n_list:
        zb_t = point_to_line_log_zbar(check, fields.g_boundary(n), (0, t), n - 1, kappa=kappa)
        zb_s = point_to_line_log_zbar(check, fields.g_boundary(n), (0, s), n - 1, kappa=kappa)
        ratio_h = zb_t.value - zb_s.value
        zb_v0 = point_to_line_log_zbar(check, fields.g_boundary(n + 1), (0, t), n, kappa=kappa)
        zb_v1 = point_to_line_log_zbar(check, fields.g_boundary(n + 1), (1, t), n, kappa=kappa)
        ratio_v = zb_v0.value - zb_v1.value
        h_raw.append(ratio_h)
        v_raw.append(ratio_v)
        horiz[n] = ratio_h - target_h
        vert[n] = ratio_v - target_v
    return StationaryRatioResult(
        lam, s, t, list(n_list), horiz, vert,
        horizontal_spread=max(h_raw) - min(h_raw),
        vertical_spread=max(v_raw) - min(v_raw),
    )


@dataclass
class BurkeReport:
    """Monte Carlo evidence for the boundary model's independence structure."""

    lam: float
    n_env: int
    ks_gamma: KSResult
    mean_exp_neg_r: float
    mean_target: float
    mean_band: float
    ks_bcheck: KSResult
    correlations: dict
    correlation_band: float
    samples: dict = dc_field(default_factory=dict)


def burke_tests(lam: float, n_env: int, seed: int, dt: float,
                t_pair: tuple[float, float] = (0.0, -0.5),
                increment_steps: int = 64,
                horizon: float | None = None,
                keep_samples: bool = False) -> BurkeReport:
    """Sample the boundary model across independent environments and test:

    (a) exp(-r_1(t_1)) against Gamma(lam, 1), plus its mean against lam;
    (b) a transformed increment against Normal(0, k*dt);
    (c) pairwise correlations across a two-step staircase configuration
        (t_2 <= t_1): r_1(t_1), r_2(t_2), and one trailing transformed
        increment per level, all mutually independent in the limit law.
    """
    if n_env < 500:
        raise ValueError(f"need at least 500 environments, got {n_env}")
    t1, t2 = t_pair
    if t2 > t1:
        raise ValueError("staircase requires t_2 <= t_1")
    H = default_horizon(lam) if horizon is None else horizon
    dt_span = increment_steps * dt
    lo = t2 - dt_span - dt
    grid = _snapped_grid(lo - H, t1, dt)
    r1 = np.empty(n_env)
    r2 = np.empty(n_env)
    binc0 = np.empty(n_env)
    binc1 = np.empty(n_env)
    for i in range(n_env):
        env = Environment.generate(_env_seed(seed, i), grid, (0, 2))
        fields = build_stationary_fields(env, lam, 2, H)
        r1[i] = fields.r_at(1, t1)
        r2[i] = fields.r_at(2, t2)
        binc0[i] = fields.bcheck_increment(0, t1 - dt_span, t1)
        binc1[i] = fields.bcheck_increment(1, t2 - dt_span, t2)
    ks_gamma = ks_statistic(np.exp(-r1), DistributionSpec.gamma(lam))
    mean = float(np.mean(np.exp(-r1)))
    band = 3.0 * float(np.std(np.exp(-r1), ddof=1)) / math.sqrt(n_env)
    ks_b = ks_statistic(binc0, DistributionSpec.normal(0.0, dt_span))
    variables = {"r1": r1, "r2": r2, "bcheck0_inc": binc0, "bcheck1_inc": binc1}
    names = list(variables)
    corr = {}
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            c = float(np.corrcoef(variables[names[a]], variables[names[b]])[0, 1])
            corr[f"{names[a]}~{names[b]}"] = c
    report = BurkeReport(
        lam, n_env, ks_gamma, mean, lam, band, ks_b, corr,
        correlation_band=3.0 / math.sqrt(n_env),
    )
    if keep_samples:
        report.samples = variables
    return report


def _env_seed(seed: int, index: int) -> int:
    return derive_seed(seed, index)


def _snapped_grid(t_lo: float, t_hi: float, dt: float) -> TimeGrid:
    return TimeGrid.spanning(t_lo, t_hi, dt)
