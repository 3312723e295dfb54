import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfnas.errors import ContractError
from tfnas.metrics import MetricScore
from tfnas.stats import (UndefinedCorrelation, build_report, kendall_tau, kendall_tau_bruteforce, spearman_rho)


def test_tau_identity_and_reversal():
    x = [3.0, 1.0, 4.0, 1.5, 9.0]
    assert kendall_tau(x, x) == 1.0
    assert kendall_tau(x, [-v for v in x]) == -1.0


def test_tau_worked_example():
    assert kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) == 2 / 3
    assert kendall_tau_bruteforce([1, 2, 3, 4], [1, 3, 2, 4]) == 2 / 3


def test_rho_worked_example():
    assert spearman_rho([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)
    assert spearman_rho([1, 2, 3], [1, 2, 3]) == 1.0


def test_rho_monotone_invariance(rng):
    x, y = rng.normal(size=30), rng.normal(size=30)
    assert spearman_rho(np.exp(x), y) == spearman_rho(x, y)


def test_fast_equals_bruteforce_with_and_without_ties():
    rng = np.random.default_rng(0)
    for i in range(1000):
        n = int(rng.integers(2, 40))
        hi = 5 if i % 2 else 10_000  # odd rounds are tie-heavy
        x, y = rng.integers(0, hi, size=n), rng.integers(0, hi, size=n)
        try:
            slow = kendall_tau_bruteforce(x, y)
        except UndefinedCorrelation:
            with pytest.raises(UndefinedCorrelation):
                kendall_tau(x, y)
            continue
        assert kendall_tau(x, y) == slow


def test_all_tied_undefined():
    with pytest.raises(UndefinedCorrelation):
        kendall_tau([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelation):
        spearman_rho([1, 2, 3], [5, 5, 5])


def test_length_contract():
    with pytest.raises(ContractError):
        kendall_tau([1], [1])
    with pytest.raises(ContractError):
        spearman_rho([1, 2], [1, 2, 3])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=2, max_size=30))
def test_bounds_and_antisymmetry(pairs):
    x, y = map(np.array, zip(*pairs))
    try:
        tau, rho = kendall_tau(x, y), spearman_rho(x, y)
    except UndefinedCorrelation:
        return
    assert -1.0 <= tau <= 1.0 and -1.0 <= rho <= 1.0
    assert kendall_tau(x, -y) == -tau
    assert spearman_rho(x, -y) == pytest.approx(-rho, abs=1e-12)
    assert kendall_tau(x ** 3, y) == tau


# -- reports -----------------------------------------------------------------------------
def test_report_self_correlation():
    trained = {f"g{i}": float(i) ** 0.5 for i in range(12)}
    rep = build_report(dict(trained), trained, performance_sign=1, metric_id="self")
    assert rep.kendall_tau == 1.0 and rep.spearman_rho == 1.0


def test_report_loss_sign():
    loss = {f"g{i}": 5.0 - i for i in range(8)}
    metric = {f"g{i}": float(i) for i in range(8)}
    assert build_report(metric, loss, performance_sign=-1).kendall_tau == 1.0


def test_report_constant_metric_flagged():
    trained = {f"g{i}": float(i) for i in range(5)}
    rep = build_report({k: 3.0 for k in trained}, trained)
    assert rep.flag == "all_tied" and np.isnan(rep.kendall_tau)


def test_report_discard_counting():
    trained = {f"g{i}": float(i) for i in range(10)}
    scores = {}
    for i, key in enumerate(trained):
        reason = "zero_variance_row" if i in (1, 4, 7) else None
        scores[key] = MetricScore("m", float("nan") if reason else float(i), True, reason=reason)
    rep = build_report(scores, trained)
    assert (rep.n_evaluated, rep.n_discarded) == (7, 3)
    assert rep.n_evaluated == len(rep.pairs)
    assert rep.kendall_tau == 1.0


def test_report_empty_join():
    with pytest.raises(ContractError):
        build_report({"a": 1.0}, {"b": 2.0})
