"""Paired statistics over episode records.

Conventions, fixed here because the source material leaves them open:
two-sided sign test = doubled smaller exact binomial tail, capped at 1;
bootstrap CIs are percentile intervals over resampled paired units;
quantile bin edges break distance ties by (seed, episode_id) so bins keep
stable, near-equal sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ValidationError
from .planner import EpisodeRecord


@dataclass
class PairedComparison:
    name_a: str
    name_b: str
    budget: str
    n_pairs: int
    delta: float
    ci_low: float
    ci_high: float
    p_sign: float
    n_nontied: int


@dataclass
class MatchupCounts:
    a_only_wins: int
    b_only_wins: int
    both_win: int
    both_fail: int

    @property
    def n_pairs(self) -> int:
        return self.a_only_wins + self.b_only_wins + self.both_win + self.both_fail


@dataclass
class ParetoPoint:
    variant_name: str
    success: float
    size_bytes: int
    non_dominated: bool


def paired_delta_ci(
    pairs: list[tuple[float, float]],
    n_resamples: int = 4000,
    level: float = 0.95,
    gen: np.random.Generator | None = None,
):
    """Mean paired difference with a percentile bootstrap CI.

    Resampling draws whole (a, b) pairs with replacement, never the two
    sides independently.  Returns (delta, ci_low, ci_high).
    """
    if not pairs:
        raise ValidationError("paired_delta_ci needs at least one pair")
    if gen is None:
        gen = np.random.default_rng(0)
    arr = np.asarray(pairs, dtype=np.float64)
    diffs = arr[:, 0] - arr[:, 1]
    delta = float(diffs.mean())
    n = len(diffs)
    idx = gen.integers(0, n, size=(n_resamples, n))
    boot = diffs[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    ci_low = float(np.quantile(boot, alpha))
    ci_high = float(np.quantile(boot, 1.0 - alpha))
    return delta, ci_low, ci_high


def sign_test(pairs: list[tuple[float, float]]) -> tuple[float, int]:
    """Exact two-sided sign test on non-tied pairs; returns (p, n_nontied)."""
    wins = sum(1 for a, b in pairs if a > b)
    losses = sum(1 for a, b in pairs if a < b)
    m = wins + losses
    if m == 0:
        return 1.0, 0
    k = wins
    denom = 2.0**m
    lower = sum(comb(m, i) for i in range(0, k + 1)) / denom
    upper = sum(comb(m, i) for i in range(k, m + 1)) / denom
    return min(1.0, 2.0 * min(lower, upper)), m


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 3:
        raise ValidationError("spearman needs two equal-length vectors of length >= 3")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValidationError("spearman undefined for a constant vector")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def _paired_units(records: list[EpisodeRecord]) -> dict[tuple[int, int], EpisodeRecord]:
    out = {}
    for r in records:
        key = (r.seed, r.episode_id)
        if key in out:
            raise ValidationError(f"duplicate paired unit {key}")
        out[key] = r
    return out


def align_pairs(
    records_a: list[EpisodeRecord], records_b: list[EpisodeRecord]
) -> list[tuple[EpisodeRecord, EpisodeRecord]]:
    ua, ub = _paired_units(records_a), _paired_units(records_b)
    if set(ua) != set(ub):
        raise ValidationError("paired unit key sets differ between the two record lists")
    return [(ua[k], ub[k]) for k in sorted(ua)]


def compare_records(
    records_a: list[EpisodeRecord],
    records_b: list[EpisodeRecord],
    name_a: str,
    name_b: str,
    budget: str,
    n_resamples: int = 4000,
    gen: np.random.Generator | None = None,
) -> PairedComparison:
    aligned = align_pairs(records_a, records_b)
    pairs = [(float(ra.success), float(rb.success)) for ra, rb in aligned]
    delta, lo, hi = paired_delta_ci(pairs, n_resamples=n_resamples, gen=gen)
    p, m = sign_test(pairs)
    return PairedComparison(name_a, name_b, budget, len(pairs), delta, lo, hi, p, m)


def matchup_counts(
    records_a: list[EpisodeRecord], records_b: list[EpisodeRecord]
) -> MatchupCounts:
    aligned = align_pairs(records_a, records_b)
    a_only = sum(1 for ra, rb in aligned if ra.success and not rb.success)
    b_only = sum(1 for ra, rb in aligned if rb.success and not ra.success)
    both = sum(1 for ra, rb in aligned if ra.success and rb.success)
    neither = sum(1 for ra, rb in aligned if not ra.success and not rb.success)
    return MatchupCounts(a_only, b_only, both, neither)


def difficulty_bins(
    records: list[EpisodeRecord], budget: str, variant: str, n_bins: int
) -> list[tuple[str, int, float]]:
    """Success means in quantile bins of initial goal distance.

    Bin edges come from the paired episode pool, which is identical across
    variants, so bins line up for paired reading.
    """
    if n_bins not in (2, 3):
        raise ValidationError("n_bins must be 2 or 3")
    recs = [r for r in records if r.budget_name == budget and r.variant_name == variant]
    if len(recs) < n_bins:
        raise ValidationError("fewer records than bins")
    recs.sort(key=lambda r: (r.initial_goal_distance, r.seed, r.episode_id))
    labels = ["lower", "upper"] if n_bins == 2 else ["low", "mid", "high"]
    out = []
    n = len(recs)
    for i in range(n_bins):
        lo, hi = (i * n) // n_bins, ((i + 1) * n) // n_bins
        chunk = recs[lo:hi]
        out.append((labels[i], len(chunk), float(np.mean([r.success for r in chunk]))))
    return out


def pareto_frontier(points: list[tuple[str, float, int]]) -> list[ParetoPoint]:
    """Non-dominated set under (maximize success, minimize size).

    p dominates q iff success_p >= success_q and size_p <= size_q with at
    least one strict; exact duplicates never dominate each other.
    """
    if not points:
        raise ValidationError("pareto_frontier needs at least one point")
    out = []
    for name, suc, size in points:
        dominated = any(
            s2 >= suc and z2 <= size and (s2 > suc or z2 < size)
            for _, s2, z2 in points
        )
        out.append(ParetoPoint(name, float(suc), int(size), not dominated))
    return out
