"""
Rank correlation between metric scores and trained performance.

Kendall's tau-b is computed with Knight's O(n log n) algorithm; pair counts
are exact integers, so the fast and brute-force routes agree bit for bit.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError


class UndefinedCorrelation(ValueError):
    """A coefficient is undefined because one input has no variation."""


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ContractError("rank correlation needs two 1-D sequences of equal length")
    if len(x) < 2:
        raise ContractError("rank correlation needs at least 2 observations")
    return x, y


def _tie_pairs(sorted_values):
    """Number of tied pairs within runs of equal values in a sorted array."""
    _, counts = np.unique(sorted_values, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def _count_swaps(values):
    """Inversions in ``values`` via merge sort (strictly greater pairs only)."""
    values = list(values)
    swaps = 0
    width = 1
    n = len(values)
    buf = values[:]
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if values[j] < values[i]:
                    buf[k] = values[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = values[i]
                    i += 1
                k += 1
            buf[k:hi] = values[i:mid] + values[j:hi] if i < mid else values[j:hi]
        values, buf = buf, values
        width *= 2
    return swaps


def _tau_b(concordant_minus_discordant, n0, n1, n2):
    # one rounding on the exact integer product keeps tau = 1 and 2/3 exact
    denom = math.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0:
        raise UndefinedCorrelation("all values tied in at least one input")
    return max(-1.0, min(1.0, concordant_minus_discordant / denom))


def kendall_tau(x, y):
    """Tie-corrected Kendall tau-b in O(n log n)."""
    x, y = _check_pair(x, y)
    n = len(x)
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)
    # pairs tied in both x and y
    both = 0
    start = 0
    for i in range(1, n + 1):
        if i == n or xs[i] != xs[start]:
            both += _tie_pairs(ys[start:i])
            start = i
    swaps = _count_swaps(ys.tolist())
    n2 = _tie_pairs(np.sort(ys))
    # concordant - discordant = n0 - n1 - n2 + n3 - 2 * swaps
    s = n0 - n1 - n2 + both - 2 * swaps
    return _tau_b(s, n0, n1, n2)


def kendall_tau_bruteforce(x, y):
    """Tau-b by explicit enumeration of all pairs."""
    x, y = _check_pair(x, y)
    n = len(x)
    s = n1 = n2 = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = np.sign(x[i] - x[j])
            dy = np.sign(y[i] - y[j])
            s += int(dx * dy)
            n1 += dx == 0
            n2 += dy == 0
    return _tau_b(s, n * (n - 1) // 2, int(n1), int(n2))


def spearman_rho(x, y):
    """Pearson correlation of average-tie ranks."""
    x, y = _check_pair(x, y)
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(np.dot(rx, rx)) * float(np.dot(ry, ry)))
    if denom == 0:
        raise UndefinedCorrelation("zero rank variance in at least one input")
    return max(-1.0, min(1.0, float(np.dot(rx, ry)) / denom))


@dataclass
class CorrelationReport:
    metric_id: str
    normalized: bool
    n_evaluated: int
    n_discarded: int
    kendall_tau: float
    spearman_rho: float
    pairs: list = field(default_factory=list)
    flag: str = None

    def as_dict(self):
        return {
            "metric_id": self.metric_id,
            "normalized": self.normalized,
            "n_evaluated": self.n_evaluated,
            "n_discarded": self.n_discarded,
            "kendall_tau": self.kendall_tau,
            "spearman_rho": self.spearman_rho,
            "flag": self.flag,
        }


def build_report(metric_scores, benchmark_records, performance_sign=1, metric_id=None, normalized=None):
    """
    Correlate one metric's scores with trained performance.

    Parameters
    ----------
    metric_scores : mapping
        Genome key -> :class:`~tfnas.metrics.MetricScore` (or a float).
    benchmark_records : mapping
        Genome key -> trained score.
    performance_sign : {+1, -1}
        Multiplies trained scores so that larger always means better
        (-1 for losses).
    """
    if performance_sign not in (1, -1):
        raise ContractError("performance_sign must be +1 or -1")
    keys = [k for k in metric_scores if k in benchmark_records]
    if not keys:
        raise ContractError("no genome appears in both the scores and the benchmark table")
    pairs, discarded = [], 0
    for key in sorted(keys):
        score = metric_scores[key]
        value = getattr(score, "value", score)
        if getattr(score, "degenerate", False) or not math.isfinite(value):
            discarded += 1
            continue
        pairs.append((float(value), performance_sign * float(benchmark_records[key])))
        if metric_id is None:
            metric_id = getattr(score, "metric_id", None)
        if normalized is None:
            normalized = getattr(score, "normalized", None)
    tau = rho = float("nan")
    flag = None
    if len(pairs) < 2:
        flag = "too_few_pairs"
    else:
        xs, ys = zip(*pairs)
        try:
            tau = kendall_tau(xs, ys)
            rho = spearman_rho(xs, ys)
        except UndefinedCorrelation:
            flag = "all_tied"
    return CorrelationReport(metric_id, normalized, len(pairs), discarded, tau, rho, pairs, flag)
