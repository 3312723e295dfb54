"""
Training-free scores for untrained networks.

Each network-level metric has the signature
``metric(net, batch, *, normalized=True, seed=0, probe=None) -> MetricScore``.
A :class:`Probe` (one forward and backward pass) can be shared between
metrics to avoid recomputation. The formula-level helpers (``*_score``)
operate on plain arrays and are what the network metrics delegate to.

Normalization divides an aggregated score by a feature count: parameters
for synaptic saliency, heads for the attention metrics and synaptic
diversity, minibatch size for the Jacobian and hidden-state metrics. For
these, the non-normalized value is exactly ``normalized * feature_count``.
Activation distance instead normalizes its kernel by the code length.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, NumericError
from .genome import param_count
from .netbuild import RnnNetwork, TransformerNetwork, forward

KERNEL_OFFSET = 1e-5
COSINE_EXPONENT = 1.0 / 20.0


@dataclass(frozen=True)
class MetricScore:
    """One metric evaluation; ``reason`` is set when the score is degenerate or inapplicable."""

    metric_id: str
    value: float
    normalized: bool
    seed: int = 0
    minibatch_id: int = 0
    layer_index: int = None
    feature_count: float = None
    reason: str = None

    @property
    def degenerate(self):
        return self.reason is not None


class Degenerate(Exception):
    """Raised inside score helpers when the defining quantity is singular."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


# -- probes ------------------------------------------------------------------------
@dataclass
class Probe:
    """Arrays captured from one forward+backward pass of a network on a minibatch."""

    loss: float
    input_embeddings: np.ndarray
    input_grads: np.ndarray
    hidden_states: list
    activation_codes: np.ndarray
    param_values: dict
    param_grads: dict
    head_keys: list = field(default_factory=list)
    head_outputs: list = field(default_factory=list)
    head_grads: list = field(default_factory=list)
    softmax_maps: list = field(default_factory=list)
    # per-probe memo for work shared by the normalized and raw variants
    cache: dict = field(default_factory=dict)


def run_probe(net, batch, embed_noise=None):
    """Zero gradients, run forward and backward, and keep the arrays metrics read."""
    net.zero_grad()
    res = forward(net, batch, embed_noise=embed_noise)
    ad.backward(res.loss)
    for name, p in net.params.items():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        elif not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient for parameter {name}")
    return Probe(
        loss=res.loss.item(),
        input_embeddings=res.inputs.data,
        input_grads=res.inputs.grad if res.inputs.grad is not None else np.zeros_like(res.inputs.data),
        hidden_states=res.hidden_states,
        activation_codes=res.activation_codes,
        param_values={k: p.data for k, p in net.params.items()},
        param_grads={k: p.grad for k, p in net.params.items()},
        head_keys=list(res.head_keys),
        head_outputs=[t.data for t in res.attn_outputs],
        head_grads=[t.grad if t.grad is not None else np.zeros_like(t.data) for t in res.attn_outputs],
        softmax_maps=list(res.softmax_maps),
    )


# -- formula-level helpers --------------------------------------------------------------
def kernel_divergence(eigenvalues, k=KERNEL_OFFSET):
    """``-sum(log(lam + k) + 1 / (lam + k))`` over the spectrum of a correlation kernel."""
    lam = np.asarray(eigenvalues, dtype=np.float64) + k
    if np.any(lam <= 0):
        raise Degenerate("negative_eigenvalue")
    return float(-np.sum(np.log(lam) + 1.0 / lam))


def row_correlation(rows):
    """Pearson correlation between rows, each centered on its own mean."""
    x = np.asarray(rows, dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    xc = x - x.mean(axis=1, keepdims=True)
    c = xc @ xc.T
    var = np.diag(c).copy()
    if np.any(var <= 0) or np.any(var <= 1e-300):
        raise Degenerate("zero_variance_row")
    d = np.sqrt(var)
    r = c / d[:, None] / d[None, :]
    return 0.5 * (r + r.T)


def correlation_kernel_score(rows, k=KERNEL_OFFSET):
    """Kernel divergence of the row-correlation matrix of ``rows`` (N rows)."""
    return kernel_divergence(ad.spectrum(row_correlation(rows)), k)


def jacobian_cosine_score(jacobian):
    """``1 - mean over off-diagonal entries of |Jn Jn^T - I| ** (1/20)`` with unit-norm rows."""
    j = np.asarray(jacobian, dtype=np.float64)
    j = j.reshape(j.shape[0], -1)
    n = j.shape[0]
    if n < 2:
        raise ContractError("jacobian cosine needs at least 2 rows")
    norms = np.linalg.norm(j, axis=1)
    if np.any(norms == 0):
        raise Degenerate("zero_norm_row")
    jn = j / norms[:, None]
    dev = np.abs(jn @ jn.T - np.eye(n)) ** COSINE_EXPONENT
    off = dev.sum() - np.trace(dev)
    return float(1.0 - off / (n * n - n))


def activation_distance_score(codes, normalized=False):
    """
    Log-determinant of the code-agreement kernel ``K_ij = N_A - hamming(c_i, c_j)``.

    The normalized variant uses ``K / N_A`` (per-unit agreement fractions).
    """
    codes = np.asarray(codes, dtype=bool)
    n, n_units = codes.shape
    if n < 2:
        raise ContractError("activation distance needs at least 2 inputs")
    if n_units == 0:
        raise Degenerate("no_activations")
    if len(np.unique(codes, axis=0)) < n:
        raise Degenerate("singular_kernel")
    s = np.where(codes, 1.0, -1.0)
    kernel = 0.5 * (n_units + s @ s.T)
    if normalized:
        kernel = kernel / n_units
    sign, logdet = np.linalg.slogdet(kernel)
    if sign <= 0 or not math.isfinite(logdet):
        raise Degenerate("singular_kernel")
    return float(logdet)


def synaptic_saliency_score(values, grads, absolute=True):
    """Sum over parameters of ``grad * value`` (absolute per entry by default)."""
    total = 0.0
    for v, g in zip(values, grads):
        prod = np.asarray(g) * np.asarray(v)
        total += float(np.sum(np.abs(prod)) if absolute else np.sum(prod))
    return total


def synaptic_diversity_score(pairs):
    """Sum of ``||grad||_nuc * ||W||_nuc`` over ``(W, grad)`` pairs."""
    total = 0.0
    for w, g in pairs:
        g = np.asarray(g)
        if not np.any(g):
            continue
        total += ad.nuclear_norm(g) * ad.nuclear_norm(w)
    return total


def head_confidence(outputs):
    """Mean over inputs of ``|max(output_n)|``; ``outputs`` has the input on axis 0."""
    o = np.asarray(outputs, dtype=np.float64)
    return float(np.mean(np.abs(o.reshape(o.shape[0], -1).max(axis=1))))


def head_importance(output, grad):
    """``|<output, dL/d output>|`` summed over every entry."""
    return float(abs(np.sum(np.asarray(output) * np.asarray(grad))))


def aggregate(values, normalized):
    """Mean (normalized) or sum of per-feature scores."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    return mean if normalized else mean * len(values)


# -- network-level metrics --------------------------------------------------------------
def _finish(metric_id, normalized, seed, batch, mean_value, count, layer_index=None):
    value = mean_value if normalized else mean_value * count
    if not math.isfinite(value):
        return MetricScore(metric_id, float("nan"), normalized, seed, batch.minibatch_id, layer_index,
                           count, reason="nonfinite")
    return MetricScore(metric_id, float(value), normalized, seed, batch.minibatch_id, layer_index, count)


def _flagged(metric_id, normalized, seed, batch, reason, layer_index=None):
    return MetricScore(metric_id, float("nan"), normalized, seed, batch.minibatch_id, layer_index, reason=reason)


def _need_two(batch):
    if batch.size < 2:
        raise ContractError("metric needs a minibatch of at least 2 inputs")


def _transformer_only(net, name):
    if not isinstance(net, TransformerNetwork):
        raise ContractError(f"{name} applies to transformer networks only")


def jacobian_covariance(net, batch, *, normalized=True, seed=0, probe=None):
    _need_two(batch)
    probe = probe or run_probe(net, batch)
    try:
        s = correlation_kernel_score(probe.input_grads)
    except Degenerate as exc:
        return _flagged("jacobian_covariance", normalized, seed, batch, exc.reason)
    n = batch.size
    return _finish("jacobian_covariance", normalized, seed, batch, s / n, n)


def jacobian_cosine(net, batch, *, normalized=True, seed=0, probe=None, metric_id="jacobian_cosine"):
    _need_two(batch)
    probe = probe or run_probe(net, batch)
    try:
        s = jacobian_cosine_score(probe.input_grads)
    except Degenerate as exc:
        return _flagged(metric_id, normalized, seed, batch, exc.reason)
    return _finish(metric_id, normalized, seed, batch, s, batch.size)


NOISE_DRAWS = {"large": 1, "more": 3}
NOISE_DEFAULTS = {"large": 1.0, "more": 0.5}


def jacobian_noised(net, batch, noise_level=None, variant="large", *, normalized=True, seed=0, probe=None):
    """
    Jacobian cosine after adding Gaussian noise to the input embeddings.

    The noise standard deviation is ``noise_level`` times the standard
    deviation of the clean embeddings; ``more`` averages three draws.
    """
    if variant not in NOISE_DRAWS:
        raise ValueError(f"unknown noise variant {variant!r}")
    noise_level = NOISE_DEFAULTS[variant] if noise_level is None else noise_level
    if noise_level <= 0:
        raise ContractError("noise_level must be positive")
    _need_two(batch)
    metric_id = f"jacobian_{variant}_noise"
    probe = probe or run_probe(net, batch)
    key = ("noised", variant, noise_level, seed)
    if key not in probe.cache:
        probe.cache[key] = _noised_scores(net, batch, probe, noise_level, NOISE_DRAWS[variant], seed)
    scores = probe.cache[key]
    if isinstance(scores, str):
        return _flagged(metric_id, normalized, seed, batch, scores)
    return _finish(metric_id, normalized, seed, batch, float(np.mean(scores)), batch.size)


def _noised_scores(net, batch, probe, noise_level, draws, seed):
    std = float(np.std(probe.input_embeddings))
    rng = np.random.default_rng([seed, batch.minibatch_id, 0x6E6F6973])
    scores = []
    for _ in range(draws):
        noise = rng.normal(0.0, noise_level * std, size=probe.input_embeddings.shape)
        noisy = run_probe(net, batch, embed_noise=noise)
        try:
            scores.append(jacobian_cosine_score(noisy.input_grads))
        except Degenerate as exc:
            return exc.reason
    return scores


def synaptic_saliency(net, batch, *, normalized=True, seed=0, probe=None, absolute=True):
    probe = probe or run_probe(net, batch)
    names = list(probe.param_values)
    total = synaptic_saliency_score([probe.param_values[k] for k in names], [probe.param_grads[k] for k in names],
                                    absolute=absolute)
    count = net.param_size()
    return _finish("synaptic_saliency", normalized, seed, batch, total / count, count)


def activation_distance(net, batch, *, normalized=True, seed=0, probe=None):
    _need_two(batch)
    probe = probe or run_probe(net, batch)
    try:
        value = activation_distance_score(probe.activation_codes, normalized=normalized)
    except Degenerate as exc:
        return _flagged("activation_distance", normalized, seed, batch, exc.reason)
    return MetricScore("activation_distance", value, normalized, seed, batch.minibatch_id,
                       feature_count=probe.activation_codes.shape[1])


def synaptic_diversity(net, batch, *, normalized=True, seed=0, probe=None):
    _transformer_only(net, "synaptic_diversity")
    probe = probe or run_probe(net, batch)
    if "synaptic_diversity" not in probe.cache:
        per_head = []
        for _, _, mats in net.head_weights():
            pairs = [(probe.param_values[name][idx], probe.param_grads[name][idx]) for name, idx in mats]
            per_head.append(synaptic_diversity_score(pairs))
        probe.cache["synaptic_diversity"] = per_head
    per_head = probe.cache["synaptic_diversity"]
    return _finish("synaptic_diversity", normalized, seed, batch, float(np.mean(per_head)), len(per_head))


def hidden_covariance(net, batch, layer_index=0, *, normalized=True, seed=0, probe=None):
    """Kernel divergence of the correlation between inputs' final hidden states at one layer."""
    if not isinstance(net, RnnNetwork):
        raise ContractError("hidden_covariance applies to rnn networks only")
    if layer_index not in (0, 1, 2):
        raise ContractError("layer_index must be 0, 1 or 2")
    _need_two(batch)
    metric_id = f"hidden_covariance_{layer_index}"
    probe = probe or run_probe(net, batch)
    try:
        s = correlation_kernel_score(probe.hidden_states[layer_index])
    except Degenerate as exc:
        return _flagged(metric_id, normalized, seed, batch, exc.reason, layer_index)
    n = batch.size
    return _finish(metric_id, normalized, seed, batch, s / n, n, layer_index)


def attention_confidence(net, batch, *, normalized=True, seed=0, probe=None):
    _transformer_only(net, "attention_confidence")
    probe = probe or run_probe(net, batch)
    scores = [head_confidence(o) for o in probe.head_outputs]
    return _finish("attention_confidence", normalized, seed, batch, float(np.mean(scores)), len(scores))


def softmax_confidence(net, batch, *, normalized=True, seed=0, probe=None):
    _transformer_only(net, "softmax_confidence")
    probe = probe or run_probe(net, batch)
    if not probe.softmax_maps:
        return _flagged("softmax_confidence", normalized, seed, batch, "no_softmax_heads")
    scores = [head_confidence(m) for m in probe.softmax_maps]
    return _finish("softmax_confidence", normalized, seed, batch, float(np.mean(scores)), len(scores))


def attention_importance(net, batch, *, normalized=True, seed=0, probe=None):
    _transformer_only(net, "attention_importance")
    probe = probe or run_probe(net, batch)
    scores = [head_importance(o, g) for o, g in zip(probe.head_outputs, probe.head_grads)]
    return _finish("attention_importance", normalized, seed, batch, float(np.mean(scores)), len(scores))


def parameter_count_metric(genome, *, seed=0, minibatch_id=0, **dims):
    """Trainable-parameter count of the network built from ``genome``; never normalized."""
    return MetricScore("parameter_count", float(param_count(genome, **dims)), False, seed, minibatch_id)


# -- registry -----------------------------------------------------------------------
@dataclass(frozen=True)
class MetricDescriptor:
    metric_id: str
    applicable_to: str  # "rnn", "transformer" or "both"
    needs_gradients: bool
    normalizer: str
    fn: object

    def applies(self, kind):
        return self.applicable_to in ("both", kind)


def _hidden(layer):
    def fn(net, batch, **kw):
        return hidden_covariance(net, batch, layer, **kw)

    return fn


def _noised(variant):
    def fn(net, batch, **kw):
        return jacobian_noised(net, batch, variant=variant, **kw)

    return fn


REGISTRY = {
    d.metric_id: d
    for d in (
        MetricDescriptor("jacobian_covariance", "both", True, "minibatch size", jacobian_covariance),
        MetricDescriptor("jacobian_cosine", "both", True, "minibatch size", jacobian_cosine),
        MetricDescriptor("jacobian_large_noise", "both", True, "minibatch size", _noised("large")),
        MetricDescriptor("jacobian_more_noise", "both", True, "minibatch size", _noised("more")),
        MetricDescriptor("synaptic_saliency", "both", True, "parameter count", synaptic_saliency),
        MetricDescriptor("activation_distance", "both", False, "activation units", activation_distance),
        MetricDescriptor("synaptic_diversity", "transformer", True, "head count", synaptic_diversity),
        MetricDescriptor("hidden_covariance_0", "rnn", False, "minibatch size", _hidden(0)),
        MetricDescriptor("hidden_covariance_1", "rnn", False, "minibatch size", _hidden(1)),
        MetricDescriptor("hidden_covariance_2", "rnn", False, "minibatch size", _hidden(2)),
        MetricDescriptor("attention_confidence", "transformer", False, "head count", attention_confidence),
        MetricDescriptor("softmax_confidence", "transformer", False, "head count", softmax_confidence),
        MetricDescriptor("attention_importance", "transformer", True, "head count", attention_importance),
        MetricDescriptor("parameter_count", "both", False, "none", None),
    )
}


def metrics_for(kind):
    return [m for m, d in REGISTRY.items() if d.applies(kind)]


def evaluate_metric(metric_id, net, batch, *, normalized=True, seed=0, probe=None):
    """Evaluate a registered metric; numeric failures come back as flagged scores."""
    desc = REGISTRY.get(metric_id)
    if desc is None:
        raise KeyError(f"unknown metric {metric_id!r}")
    kind = net.genome.kind
    if not desc.applies(kind):
        raise ContractError(f"{metric_id} does not apply to {kind} networks")
    if metric_id == "parameter_count":
        return MetricScore(metric_id, float(net.param_size()), False, seed, batch.minibatch_id)
    try:
        score = desc.fn(net, batch, normalized=normalized, seed=seed, probe=probe)
    except NumericError as exc:
        return _flagged(metric_id, normalized, seed, batch, f"numeric:{exc}")
    # registry ids win over the function's own label
    if score.metric_id != metric_id:
        score = MetricScore(metric_id, score.value, score.normalized, score.seed, score.minibatch_id,
                            score.layer_index, score.feature_count, score.reason)
    return score
