"""Quenched polymer path sampling via the Markov structure of the jump times.

Sampling is exact for the discrete grid measure: each conditional density of
the next jump time given the previous one is a ratio of partition values
computed from shared forward/backward slices, normalized on the grid, and
sampled by inverse CDF.  Sampler-versus-density tests therefore isolate pure
sampling error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .environment import BrownianField
from .errors import GridAlignmentError
from .numerics import NEG_INF
from .partition import BackwardSlices, backward_slices, forward_slices


@dataclass
class PolymerPath:
    """Strictly increasing jump times of one sampled path."""

    base: tuple[int, float]
    terminal: tuple[int, float]
    jump_times: np.ndarray
    stream_id: int = 0

    def __post_init__(self):
        m, s = self.base
        n, t = self.terminal
        jt = np.asarray(self.jump_times, dtype=float)
        if jt.size != n - m:
            raise GridAlignmentError(f"expected {n - m} jump times, got {jt.size}")
        if jt.size and not (s < jt[0] and jt[-1] < t and np.all(np.diff(jt) > 0)):
            raise GridAlignmentError("jump times must be strictly ordered inside (s, t)")
        self.jump_times = jt

    def min_gap(self, horizon: float | None = None) -> float:
        """Smallest gap between consecutive jumps whose left member falls
        before the horizon; inf when fewer than two qualify."""
        jt = self.jump_times
        if jt.size < 2:
            return math.inf
        gaps = np.diff(jt)
        if horizon is not None:
            gaps = gaps[jt[:-1] < horizon]
        return float(np.min(gaps)) if gaps.size else math.inf


def transition_log_density(field_: BrownianField, bslices: BackwardSlices,
                           k_prev: int, s_prev: float, k: int) -> tuple[np.ndarray, int]:
    """Normalized log-density of jump k at grid nodes, given jump k_prev at
    s_prev (k_prev = m-1, s_prev = s seeds the first jump).

    Density over s_k is proportional to
        Z_{(k_prev+1, s_prev), (k, s_k)} * Z_{(k+1, s_k), (n, t)},
    realized on the support (s_prev, t) from the shared backward slices plus
    (for non-consecutive k) a fresh forward pass.  Returns (log-density over
    the whole grid, support start index); the density sums to one.
    """
    grid = field_.grid
    n, t = bslices.terminal_level, bslices.terminal_time
    if not k_prev < k < n:
        raise GridAlignmentError(f"need k_prev < k < n, got {k_prev} < {k} < {n}")
    j_prev = grid.index_of(s_prev)
    j_end = grid.index_of(t)
    if j_end - j_prev < 2:
        raise GridAlignmentError(f"no interior support between {s_prev} and {t}")
    if k == k_prev + 1:
        cum = field_.level_values(k)
        left = cum - cum[j_prev]
    else:
        left = forward_slices(field_, (k_prev + 1, s_prev), k).row(k)
    logw = np.full(grid.n_points, NEG_INF)
    sup = slice(j_prev + 1, j_end)
    logw[sup] = left[sup] + bslices.row(k + 1)[sup]
    m = float(np.max(logw))
    norm = m + math.log(float(np.sum(np.exp(logw - m))))
    return logw - norm, j_prev + 1


def marginal_log_density(field_: BrownianField, bslices: BackwardSlices,
                         base: tuple[int, float], k: int) -> np.ndarray:
    """Normalized log-density of the single jump time tau_k under the quenched
    measure from base to the slices' terminal, via forward times backward
    partition values (a code path independent of the sequential sampler)."""
    m, s = base
    grid = field_.grid
    n, t = bslices.terminal_level, bslices.terminal_time
    if not m <= k < n:
        raise GridAlignmentError(f"need {m} <= k < {n}")
    fw = forward_slices(field_, base, k)
    j0, j1 = grid.index_of(s), grid.index_of(t)
    logw = np.full(grid.n_points, NEG_INF)
    sup = slice(j0 + 1, j1)
    logw[sup] = fw.row(k)[sup] + bslices.row(k + 1)[sup]
    mm = float(np.max(logw))
    norm = mm + math.log(float(np.sum(np.exp(logw - mm))))
    return logw - norm


def sample_path(field_: BrownianField, base: tuple[int, float], terminal: tuple[int, float],
                rng: np.random.Generator, bslices: BackwardSlices | None = None,
                stream_id: int = 0) -> PolymerPath:
    """Draw the jump times sequentially by inverse CDF on the grid."""
    m, s = base
    n, t = terminal
    grid = field_.grid
    if bslices is None:
        bslices = backward_slices(field_, terminal, m + 1)
    jumps = np.empty(n - m)
    prev_level, prev_time = m - 1, s
    for k in range(m, n):
        logd, _ = transition_log_density(field_, bslices, prev_level, prev_time, k)
        cdf = np.cumsum(np.exp(logd))
        u = rng.random() * cdf[-1]
        j = min(int(np.searchsorted(cdf, u, side="right")), grid.n_points - 1)
        jumps[k - m] = grid.time_of(j)
        prev_level, prev_time = k, jumps[k - m]
    return PolymerPath(base, terminal, jumps, stream_id)


def jump_rate(field_: BrownianField, bslices: BackwardSlices, point: tuple[int, float]) -> float:
    """Instantaneous level-up rate Z_{(k+1,u),(n,t)} / Z_{(k,u),(n,t)} of the
    quenched chain at (k, u)."""
    k, u = point
    return math.exp(bslices.value(k + 1, u) - bslices.value(k, u))


@dataclass
class SemiInfiniteRate:
    """Finite-n surrogate for the semi-infinite jump rate.

    The limiting rate is exp of the negated vertical log-ratio limit; only
    the largest-n value is available, so the result is explicitly flagged as
    an approximation with its Cauchy error bar.
    """

    value: float
    n_star: int
    error_bar: float
    approximation: str = "finite-n-busemann"


def semi_infinite_jump_rate(estimate) -> SemiInfiniteRate:
    """Rate surrogate exp(-log-ratio at the largest computed n)."""
    return SemiInfiniteRate(
        value=math.exp(-estimate.value),
        n_star=estimate.n_list[-1],
        error_bar=estimate.error_bar,
    )


@dataclass
class MinGapReport:
    """Per-group empirical law of the smallest jump gap before a horizon."""

    horizon: float
    by_n: dict = dc_field(default_factory=dict)   # n -> sorted min gaps (may be inf)

    def prob_below(self, n: int, delta: float) -> float:
        gaps = self.by_n[n]
        return float(np.mean(gaps < delta))

    def uniform_bound(self, delta: float) -> float:
        return max(self.prob_below(n, delta) for n in self.by_n)


def min_gap_statistics(paths_by_n: dict, horizon: float) -> MinGapReport:
    """Empirical CDFs of min jump gaps (before the horizon) per path length."""
    report = MinGapReport(horizon)
    for n, paths in paths_by_n.items():
        gaps = np.array([p.min_gap(horizon) for p in paths])
        report.by_n[n] = np.sort(gaps)
    return report


def paths_to_csv(paths, path_out) -> None:
    """CSV rows (path_id, k, tau_k); the rng stream id is recorded per path."""
    with open(path_out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "stream_id", "k", "tau_k"])
        for pid, p in enumerate(paths):
            m = p.base[0]
            for off, tau in enumerate(p.jump_times):
                writer.writerow([pid, p.stream_id, m + off, f"{tau:.12g}"])
