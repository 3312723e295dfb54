import math

import numpy as np
import pytest

from helpers import VOCAB, fd_head_check, masked_batch, rnn_batch, tgenome
from tfnas import autodiff as ad
from tfnas import metrics as M
from tfnas.errors import ContractError
from tfnas.genome import TransformerGenome, layer_grid, param_count, sample_rnn, vanilla_rnn
from tfnas.netbuild import Minibatch, build, build_rnn, build_transformer
from tfnas.stats import kendall_tau

K = 1e-5


def direct_divergence(eigs):
    # straight-line oracle, independent of kernel_divergence
    return -sum(math.log(l + K) + 1.0 / (l + K) for l in eigs)


def close(a, b, rel=1e-8):
    return abs(a - b) <= rel * abs(b)


# -- kernel divergence (jacobian covariance / hidden covariance) ---------------------------
def test_duplicated_input_kernel():
    x = np.random.default_rng(0).normal(size=10)
    rows = np.stack([x, x])
    np.testing.assert_allclose(M.row_correlation(rows), np.ones((2, 2)), atol=1e-15)
    score = M.correlation_kernel_score(rows)
    assert close(score, direct_divergence([2.0, 0.0]))
    assert round(score / 1e4, 5) == pytest.approx(-9.99897, abs=1e-5)


def test_decorrelated_rows_kernel():
    rows = np.array([[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]])
    np.testing.assert_allclose(M.row_correlation(rows), np.eye(2), atol=1e-15)
    score = M.correlation_kernel_score(rows)
    assert close(score, direct_divergence([1.0, 1.0]))
    assert score == pytest.approx(-2.00001, abs=1e-5)


def test_hidden_covariance_hand_example():
    h = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(M.row_correlation(h), [[1.0, -1.0], [-1.0, 1.0]], atol=1e-15)
    assert close(M.correlation_kernel_score(h), direct_divergence([2.0, 0.0]))


def test_hidden_covariance_invariances(rng):
    h = rng.normal(size=(6, 9))
    base = M.correlation_kernel_score(h)
    scale = rng.uniform(0.1, 10.0, size=(6, 1))
    assert close(M.correlation_kernel_score(h * scale), base, 1e-10)
    perm = rng.permutation(6)
    assert close(M.correlation_kernel_score(h[perm]), base, 1e-10)


def test_zero_variance_row_flagged():
    with pytest.raises(M.Degenerate, match="zero_variance_row"):
        M.row_correlation(np.array([[1.0, 1.0, 1.0], [0.0, 1.0, 2.0]]))


def test_jacobian_covariance_needs_two():
    with pytest.raises(ContractError):
        Minibatch(np.zeros((1, 3)), np.zeros((1, 3)))


# -- jacobian cosine ----------------------------------------------------------------------
def test_cosine_orthogonal_rows():
    assert M.jacobian_cosine_score(np.eye(4) * 3.0) == 1.0


def test_cosine_identical_rows():
    j = np.tile(np.array([1.0, 2.0, -1.0]), (4, 1))
    assert M.jacobian_cosine_score(j) == pytest.approx(0.0, abs=1e-12)


def test_cosine_random_vs_oracle(rng):
    j = rng.normal(size=(4, 6))
    total = 0.0
    for a in range(4):
        for b in range(4):
            if a != b:
                cos = sum(j[a, i] * j[b, i] for i in range(6)) / math.sqrt(
                    sum(v * v for v in j[a]) * sum(v * v for v in j[b]))
                total += abs(cos) ** (1 / 20)
    assert close(M.jacobian_cosine_score(j), 1 - total / 12)


def test_cosine_zero_row():
    with pytest.raises(M.Degenerate, match="zero_norm_row"):
        M.jacobian_cosine_score(np.array([[1.0, 0.0], [0.0, 0.0]]))


# -- noised jacobian -------------------------------------------------------------------------
@pytest.fixture(scope="module")
def small_rnn():
    net = build_rnn(vanilla_rnn(), vocab=VOCAB, hidden_dim=12, rng=np.random.default_rng(0))
    return net, rnn_batch(n=5, t=4)


def test_noise_limit_recovers_cosine(small_rnn):
    net, batch = small_rnn
    clean = M.jacobian_cosine(net, batch).value
    tiny = M.jacobian_noised(net, batch, noise_level=1e-12, variant="more").value
    assert abs(tiny - clean) < 1e-6


def test_noised_deterministic_and_moves(small_rnn):
    net, batch = small_rnn
    a = M.jacobian_noised(net, batch, variant="large", seed=3).value
    b = M.jacobian_noised(net, batch, variant="large", seed=3).value
    assert a == b
    assert a != M.jacobian_cosine(net, batch).value


def test_noise_level_must_be_positive(small_rnn):
    with pytest.raises(ContractError):
        M.jacobian_noised(*small_rnn, noise_level=0.0)


# -- synaptic saliency -------------------------------------------------------------------------
def test_saliency_scalar_case():
    w = ad.Tensor(2.0, requires_grad=True)
    loss = (w * 1.0 - 1.0) ** 2
    ad.backward(loss)
    assert w.grad == 2.0
    assert M.synaptic_saliency_score([w.data], [w.grad]) == 4.0


def test_saliency_zero_parameters(small_rnn):
    net = build_rnn(vanilla_rnn(), vocab=VOCAB, hidden_dim=6, rng=np.random.default_rng(0))
    for p in net.params.values():
        p.data[...] = 0.0
    assert M.synaptic_saliency(net, rnn_batch()).value == 0.0


def test_saliency_constant_shift_invariant(rng):
    w, x = rng.normal(size=(3, 2)), rng.normal(size=(4, 3))
    grads = []
    for shift in (0.0, 5.0):
        wt = ad.Tensor(w.copy(), requires_grad=True)
        ad.backward(ad.tsum(ad.tanh(ad.matmul(ad.Tensor(x), wt))) + shift)
        grads.append(M.synaptic_saliency_score([w], [wt.grad]))
    assert grads[0] == grads[1]


def test_saliency_signed_toggle():
    assert M.synaptic_saliency_score([np.array([1.0, 1.0])], [np.array([1.0, -3.0])], absolute=False) == -2.0
    assert M.synaptic_saliency_score([np.array([1.0, 1.0])], [np.array([1.0, -3.0])]) == 4.0


# -- activation distance ------------------------------------------------------------------------
def test_activation_distance_opposite_codes():
    n_a = 16
    codes = np.array([[True] * n_a, [False] * n_a])
    assert close(M.activation_distance_score(codes), 2 * math.log(n_a))


def test_activation_distance_identical_codes():
    codes = np.array([[True, False, True], [True, False, True], [False, False, True]])
    with pytest.raises(M.Degenerate, match="singular_kernel"):
        M.activation_distance_score(codes)


def test_activation_distance_permutation_invariant(rng):
    codes = rng.random((6, 40)) > 0.5
    base = M.activation_distance_score(codes)
    assert close(M.activation_distance_score(codes[rng.permutation(6)]), base, 1e-10)


def test_activation_distance_normalized_is_scaled_kernel(rng):
    codes = rng.random((5, 30)) > 0.5
    raw = M.activation_distance_score(codes)
    assert close(M.activation_distance_score(codes, normalized=True), raw - 5 * math.log(30), 1e-10)


# -- synaptic diversity ------------------------------------------------------------------------
def test_diversity_hand_case():
    assert M.synaptic_diversity_score([(np.diag([3.0, 4.0]), np.eye(2))]) == pytest.approx(14.0, rel=1e-12)


def test_diversity_zero_gradient_and_additivity(rng):
    w = rng.normal(size=(4, 3))
    assert M.synaptic_diversity_score([(w, np.zeros((4, 3)))]) == 0.0
    pair = (w, rng.normal(size=(4, 3)))
    one = M.synaptic_diversity_score([pair])
    assert M.synaptic_diversity_score([pair, pair]) == pytest.approx(2 * one, rel=1e-14)


def test_diversity_linear_transform_heads_contribute_zero():
    net = build_transformer(tgenome("lt_dft", "lt_dct"), vocab=VOCAB, rng=np.random.default_rng(0), max_len=8)
    assert M.synaptic_diversity(net, masked_batch()).value == 0.0


# -- attention metrics -----------------------------------------------------------------------
def test_confidence_constant_cases():
    assert M.head_confidence(np.zeros((3, 4, 2))) == 0.0
    out = np.full((5, 4, 2), 0.1)
    out[:, 1, 0] = 0.9
    assert M.head_confidence(out) == pytest.approx(0.9)


def test_softmax_confidence_uniform_and_one_hot():
    t = 32
    assert M.head_confidence(np.full((4, t, t), 1.0 / t)) == pytest.approx(1 / 32)
    assert M.head_confidence(np.tile(np.eye(t), (4, 1, 1))) == 1.0


def test_softmax_confidence_bounds_random_nets():
    rng = np.random.default_rng(11)
    t = 6
    for i in range(100):
        op = ("sa_sdp", "sa_mul")[i % 2]
        g = tgenome(op, "lt_dft", heads=int(rng.choice([2, 4])))
        net = build_transformer(g, vocab=VOCAB, rng=np.random.default_rng(i), max_len=t)
        probe = M.run_probe(net, masked_batch(n=2, t=t, seed=i))
        for m in probe.softmax_maps:
            v = M.head_confidence(m)
            assert 1 / t - 1e-12 <= v <= 1.0


def test_softmax_confidence_inapplicable():
    net = build_transformer(tgenome("conv_5", "lt_dct"), vocab=VOCAB, max_len=8)
    s = M.softmax_confidence(net, masked_batch())
    assert s.degenerate and s.reason == "no_softmax_heads"


def test_importance_zero_gradient():
    assert M.head_importance(np.ones((2, 3)), np.zeros((2, 3))) == 0.0


def test_importance_matches_scaling_fd():
    net = build_transformer(tgenome("sa_sdp", "conv_9"), vocab=VOCAB, rng=np.random.default_rng(5), max_len=8)
    batch = masked_batch(n=3, t=6)
    err, analytic, numeric = fd_head_check(net, batch, eps=1e-5)
    assert err < 1e-3
    probe = M.run_probe(net, batch)
    scores = [M.head_importance(o, g) for o, g in zip(probe.head_outputs, probe.head_grads)]
    np.testing.assert_allclose(scores, np.abs(numeric), rtol=1e-3)


def test_importance_zero_at_stationary_head():
    # a head whose output is ignored downstream has zero gradient and scores 0
    out = np.random.default_rng(0).normal(size=(2, 3, 4))
    assert M.head_importance(out, np.zeros_like(out)) == 0.0


# -- parameter count -----------------------------------------------------------------------
def test_parameter_count_metric():
    g = tgenome("sa_sdp", "conv_5")
    s = M.parameter_count_metric(g, vocab=VOCAB, seq_len=8)
    assert s.value == param_count(g, vocab=VOCAB, seq_len=8) and not s.normalized
    assert s.value == build(g, vocab=VOCAB, seq_len=8).param_size()
    bigger = tgenome("sa_sdp", "conv_5", ff=1024)
    assert M.parameter_count_metric(bigger, vocab=VOCAB, seq_len=8).value > s.value


# -- registry, normalization, degeneracy --------------------------------------------------------------
MEAN_AGGREGATED = ["jacobian_covariance", "jacobian_cosine", "jacobian_large_noise", "jacobian_more_noise",
                   "synaptic_saliency", "synaptic_diversity", "hidden_covariance_0", "hidden_covariance_1",
                   "hidden_covariance_2", "attention_confidence", "softmax_confidence", "attention_importance"]


def _nets():
    rng = np.random.default_rng(21)
    for _ in range(3):
        g = sample_rnn(rng, max_nodes=6)
        yield build(g, vocab=VOCAB, hidden_dim=16, rng=np.random.default_rng(0)), rnn_batch(n=6, t=4)
    for ops in (("sa_sdp", "conv_5"), ("sa_mul", "lt_dft", "conv_9", "lt_dct")):
        g = tgenome(*ops, heads=4)
        yield build(g, vocab=VOCAB, seq_len=8, rng=np.random.default_rng(0)), masked_batch(n=4, t=6)


def test_normalization_identity_exact():
    checked = 0
    for net, batch in _nets():
        probe = M.run_probe(net, batch)
        for metric_id in M.metrics_for(net.genome.kind):
            if metric_id not in MEAN_AGGREGATED:
                continue
            norm = M.evaluate_metric(metric_id, net, batch, normalized=True, probe=probe)
            raw = M.evaluate_metric(metric_id, net, batch, normalized=False, probe=probe)
            if norm.degenerate:
                assert raw.degenerate
                continue
            assert raw.value == norm.value * norm.feature_count
            checked += 1
    assert checked > 20


def test_every_metric_finite_or_flagged():
    for net, batch in _nets():
        probe = M.run_probe(net, batch)
        for metric_id in M.metrics_for(net.genome.kind):
            for normalized in (True, False):
                s = M.evaluate_metric(metric_id, net, batch, normalized=normalized, probe=probe)
                assert math.isfinite(s.value) or (s.degenerate and s.reason)


def test_registry_covers_all_metrics():
    assert set(MEAN_AGGREGATED) | {"activation_distance", "parameter_count"} == set(M.REGISTRY)
    assert "hidden_covariance_0" not in M.metrics_for("transformer")
    assert "attention_confidence" not in M.metrics_for("rnn")


def test_inapplicable_metric_rejected(small_rnn):
    with pytest.raises(ContractError):
        M.evaluate_metric("attention_confidence", *small_rnn)


def size_varying_population(seed=0, per_cell=5):
    """Transformer genomes stratified over hidden size and depth, so parameter counts span a wide range."""
    rng = np.random.default_rng(seed)
    grid = layer_grid()
    for hidden in (128, 256):
        for depth in (2, 4):
            for _ in range(per_cell):
                yield TransformerGenome(hidden, tuple(grid[i] for i in rng.integers(len(grid), size=depth)))


def test_raw_attention_confidence_tracks_size_more():
    """Directional check: summing over heads correlates with parameter count at least as well as averaging."""
    sizes, raw, norm = [], [], []
    batch = masked_batch(n=4, t=6)
    for g in size_varying_population():
        net = build(g, vocab=VOCAB, seq_len=8, rng=np.random.default_rng(0))
        probe = M.run_probe(net, batch)
        sizes.append(net.param_size())
        raw.append(M.attention_confidence(net, batch, normalized=False, probe=probe).value)
        norm.append(M.attention_confidence(net, batch, normalized=True, probe=probe).value)
    assert kendall_tau(raw, sizes) >= kendall_tau(norm, sizes)
