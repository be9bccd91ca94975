"""Busemann-style limits: log-ratios of partition functions to a receding
endpoint, their cocycle structure, deterministic comparison sandwiches, and
the limiting laws at the characteristic parameter.

A velocity theta is snapped to a grid multiple so that every endpoint n*theta
is itself a grid time; estimates report the last computed log-ratio together
with a Cauchy-style error bar (largest of the last two successive
differences) rather than asserting convergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .environment import BrownianField
from .errors import GridAlignmentError
from .numerics import inverse_trigamma, trigamma
from .partition import (
    BoundaryWeight,
    PartitionSlices,
    Restriction,
    forward_slices,
    point_to_line_log_zbar,
    polymer_endpoint_cut,
)


def snap_theta(theta: float, dt: float) -> float:
    """Snap a velocity to the grid so that n*theta lies on the grid for all n."""
    k = round(theta / dt)
    if k < 1:
        raise GridAlignmentError(f"theta {theta} below grid resolution {dt}")
    return k * dt


def endpoint_times(theta: float, n_list, dt: float, rule: str = "linear") -> dict:
    """Endpoint sequence t_n with t_n/n -> theta.

    "linear" is t_n = n*theta; "sqrt_shift" is t_n = n*theta + sqrt(n), both
    snapped to the grid.
    """
    theta = snap_theta(theta, dt)
    out = {}
    for n in n_list:
        if rule == "linear":
            t = n * theta
        elif rule == "sqrt_shift":
            t = n * theta + round(math.sqrt(n) / dt) * dt
        else:
            raise ValueError(f"unknown endpoint rule {rule!r}")
        out[n] = t
    return out


@dataclass
class BusemannEstimate:
    """Log-ratio sequence between two base points at a fixed velocity."""

    x: tuple[int, float]
    y: tuple[int, float]
    theta: float
    rule: str
    entries: list  # (n, t_n, log_ratio)

    @property
    def n_list(self):
        return [n for n, _, _ in self.entries]

    def log_ratio(self, n: int) -> float:
        for m, _, v in self.entries:
            if m == n:
                return v
        raise KeyError(f"no entry at n={n}")

    @property
    def value(self) -> float:
        return self.entries[-1][2]

    def successive_differences(self) -> list:
        vals = [v for _, _, v in self.entries]
        return [vals[i + 1] - vals[i] for i in range(len(vals) - 1)]

    @property
    def error_bar(self) -> float:
        diffs = self.successive_differences()
        if not diffs:
            return math.inf
        return max(abs(d) for d in diffs[-2:])


def ratio_sequence(field_: BrownianField, x: tuple[int, float], y: tuple[int, float],
                   theta: float, n_list, rule: str = "linear") -> BusemannEstimate:
    """log Z_{x,(n,t_n)} - log Z_{y,(n,t_n)} for each n, from one forward DP
    per base point."""
    n_list = sorted(n_list)
    theta = snap_theta(theta, field_.grid.dt)
    times = endpoint_times(theta, n_list, field_.grid.dt, rule)
    n_top = max(n_list)
    sx = forward_slices(field_, x, n_top)
    sy = forward_slices(field_, y, n_top)
    entries = []
    for n in n_list:
        t = times[n]
        entries.append((n, t, sx.value(n, t) - sy.value(n, t)))
    return BusemannEstimate(x, y, theta, rule, entries)


def check_cocycle(est_xy: BusemannEstimate, est_yz: BusemannEstimate,
                  est_xz: BusemannEstimate) -> float:
    """Max over common n of the additivity residual of the three log-ratios,
    |ratio_xy - (ratio_xz - ratio_yz)|; telescopes to float rounding at every
    finite n."""
    for a, b in ((est_xy, est_yz), (est_xy, est_xz)):
        if a.theta != b.theta or a.rule != b.rule:
            raise ValueError("estimates do not share theta/endpoint configuration")
    common = sorted(set(est_xy.n_list) & set(est_yz.n_list) & set(est_xz.n_list))
    if not common:
        raise ValueError("no common n between the estimates")
    worst = 0.0
    for n in common:
        resid = abs(est_xy.log_ratio(n) - (est_xz.log_ratio(n) - est_yz.log_ratio(n)))
        worst = max(worst, resid)
    return worst


@dataclass
class ComparisonGaps:
    """Signed log-domain slack of the ratio sandwich; >= 0 means satisfied."""

    left_gap: float
    right_gap: float
    left: float
    middle: float
    right: float


def check_comparison(field_: BrownianField, boundary: BoundaryWeight, n: int, t: float,
                     pair: str = "vertical", s: float | None = None,
                     t_mid: float | None = None, base_time: float = 0.0,
                     kappa: float = 6.0) -> ComparisonGaps:
    """Deterministic sandwich around a point-to-point log-ratio.

    vertical (bases (0,b) and (1,b), terminal (n,t)):
        Zbar(tau_n < t) ratio <= Z ratio <= Zbar(tau_n > t) ratio,
    horizontal (bases (0,t_mid) and (0,s), s < t_mid < t, terminal (n,t)):
        the same sandwich for the horizontal ratio.

    All four outer terms share one quadrature and, for the upper event, one
    finite cutoff window [t, cut), so the inequalities are exact
    integral-domination statements of the shared discretization (they hold
    for the restricted sums with any common cutoff; no unbounded-tail value
    is asserted).
    """
    if pair == "vertical":
        base_a, base_b = (0, base_time), (1, base_time)
    elif pair == "horizontal":
        if s is None or t_mid is None or not s < t_mid < t:
            raise ValueError("horizontal pair needs s < t_mid < t")
        base_a, base_b = (0, t_mid), (0, s)
    else:
        raise ValueError(f"pair must be vertical or horizontal, got {pair!r}")
    sl_a = forward_slices(field_, base_a, n)
    sl_b = forward_slices(field_, base_b, n)
    middle = sl_a.value(n, t) - sl_b.value(n, t)
    grid = field_.grid
    cut = base_b[1] + polymer_endpoint_cut(boundary.lam, n + 1, kappa)
    cut = min(grid.t_max, math.floor(cut / grid.dt) * grid.dt)
    below, above = Restriction.below(t), Restriction.interval(t, cut)
    la = point_to_line_log_zbar(field_, boundary, base_a, n, below, kappa, slices=sl_a)
    lb = point_to_line_log_zbar(field_, boundary, base_b, n, below, kappa, slices=sl_b)
    ra = point_to_line_log_zbar(field_, boundary, base_a, n, above, kappa, slices=sl_a)
    rb = point_to_line_log_zbar(field_, boundary, base_b, n, above, kappa, slices=sl_b)
    left = la.value - lb.value
    right = ra.value - rb.value
    return ComparisonGaps(middle - left, right - middle, left, middle, right)


@dataclass
class DominantSlopeResult:
    """Restricted-to-total mass ratios of the free-endpoint partition sum."""

    lam: float
    theta: float
    side: str                  # which restriction carries the dominant mass
    ratios: dict               # n -> exp(log restricted - log total)


def dominant_slope_check(field_: BrownianField, boundary: BoundaryWeight, theta: float,
                         n_list, kappa: float = 6.0,
                         base: tuple[int, float] = (0, 0.0)) -> DominantSlopeResult:
    """Mass fraction of {tau_n > n theta} (for theta below the characteristic
    slope) or {tau_n < n theta} (above it); should approach 1 as n grows."""
    lam = boundary.lam
    char = trigamma(lam)
    if theta == char:
        raise ValueError("theta must differ from the characteristic slope")
    side = "above" if theta < char else "below"
    n_list = sorted(n_list)
    slices = forward_slices(field_, base, max(n_list))
    ratios = {}
    for n in n_list:
        t = snap_theta(theta, field_.grid.dt) * n
        restr = Restriction.above(t) if side == "above" else Restriction.below(t)
        num = point_to_line_log_zbar(field_, boundary, base, n, restr, kappa, slices=slices)
        den = point_to_line_log_zbar(field_, boundary, base, n, Restriction.none(), kappa,
                                     slices=slices)
        ratios[n] = math.exp(num.value - den.value)
    return DominantSlopeResult(lam, theta, side, ratios)


@dataclass
class LimitingDistributionSample:
    """Per-environment vertical and horizontal log-ratios at a fixed n."""

    vertical: float
    horizontal: float


def limiting_ratio_pair(field_: BrownianField, theta: float, n_star: int,
                        t_horizontal: float) -> LimitingDistributionSample:
    """One environment's vertical ((0,0) vs (1,0)) and horizontal ((0,t) vs
    (0,0)) log-ratios at endpoint (n_star, n_star*theta)."""
    theta = snap_theta(theta, field_.grid.dt)
    t_n = n_star * theta
    s0 = forward_slices(field_, (0, 0.0), n_star)
    s1 = forward_slices(field_, (1, 0.0), n_star)
    st = forward_slices(field_, (0, t_horizontal), n_star)
    v = s0.value(n_star, t_n) - s1.value(n_star, t_n)
    h = st.value(n_star, t_n) - s0.value(n_star, t_n)
    return LimitingDistributionSample(v, h)


def characteristic_lambda(theta: float) -> float:
    """Boundary parameter whose characteristic slope equals theta."""
    return inverse_trigamma(theta)
