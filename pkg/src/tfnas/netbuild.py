"""
Instantiate genomes as randomly initialized, differentiable networks.

Forward passes return a :class:`ForwardResult` carrying the loss plus every
intermediate the scoring functions read: input embeddings, per-layer hidden
states, per-head outputs and softmax maps, and binarized activation codes.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from . import autodiff as ad
from .errors import ContractError, NumericError
from .genome import DEFAULT_RNN_HIDDEN, DEFAULT_SEQ_LEN, DEFAULT_VOCAB

NUM_RNN_LAYERS = 3


@dataclass
class Minibatch:
    """Token ids ``(N, T)`` and targets ``(N, T)``; a target of -1 is ignored."""

    tokens: np.ndarray
    targets: np.ndarray
    mode: str = "next_token"
    minibatch_id: int = 0

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.tokens.ndim != 2 or self.tokens.shape != self.targets.shape:
            raise ContractError("tokens and targets must both be (N, T)")
        if self.tokens.shape[0] < 2:
            raise ContractError("a minibatch needs at least 2 inputs")

    @property
    def size(self):
        return self.tokens.shape[0]

    @property
    def seq_len(self):
        return self.tokens.shape[1]

    def check_vocab(self, vocab):
        if self.tokens.min() < 0 or self.tokens.max() >= vocab or self.targets.max() >= vocab:
            raise ContractError(f"minibatch ids outside vocabulary of size {vocab}")


@dataclass
class ForwardResult:
    loss: ad.Tensor
    inputs: ad.Tensor  # token embeddings (N, T, E); their gradient is the input Jacobian
    hidden_states: list  # per layer, (N, hidden) arrays
    activation_codes: np.ndarray  # (N, n_units) bool
    head_keys: list = field(default_factory=list)  # (layer, head) per captured head
    attn_outputs: list = field(default_factory=list)  # Tensor (N, T, d_head) per head
    softmax_keys: list = field(default_factory=list)
    softmax_maps: list = field(default_factory=list)  # array (N, T, T) per softmax head
    layer_hidden_states: list = field(default_factory=list)  # array (N, T, d) per layer


def _uniform(rng, shape, bound, name):
    return ad.Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def _check_finite(t, where):
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite values produced at {where}")
    return t


class Network:
    """Common parameter-registry behaviour."""

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        ad.zero_grad(self.params.values())

    def param_size(self):
        return int(sum(p.size for p in self.params.values()))


# -- rnn -----------------------------------------------------------------------
class RnnNetwork(Network):
    """Embedding, three stacked copies of one cell (independent weights), output projection."""

    def __init__(self, genome, vocab, embed_dim, hidden_dim, params):
        self.genome = genome
        self.vocab = vocab
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.params = params
        self.order = genome.topological_order()


def build_rnn(genome, vocab=DEFAULT_VOCAB, embed_dim=None, hidden_dim=DEFAULT_RNN_HIDDEN, rng=None):
    genome.validate()
    rng = np.random.default_rng(0) if rng is None else rng
    embed_dim = hidden_dim if embed_dim is None else embed_dim
    bound = 1.0 / np.sqrt(hidden_dim)
    params = {"embedding": _uniform(rng, (vocab, embed_dim), bound, "embedding")}
    for layer in range(NUM_RNN_LAYERS):
        in_dim = embed_dim if layer == 0 else hidden_dim
        for node_id, op in genome.nodes:
            if op != "linear":
                continue
            for src in genome.predecessors(node_id):
                rows = in_dim if src == genome.x_in else hidden_dim
                name = f"cell{layer}.n{node_id}.w{src}"
                params[name] = _uniform(rng, (rows, hidden_dim), bound, name)
            name = f"cell{layer}.n{node_id}.b"
            params[name] = _uniform(rng, (hidden_dim,), bound, name)
    params["out.w"] = _uniform(rng, (hidden_dim, vocab), bound, "out.w")
    params["out.b"] = _uniform(rng, (vocab,), bound, "out.b")
    return RnnNetwork(genome, vocab, embed_dim, hidden_dim, params)


def _cell_step(net, layer, x, h, c, codes):
    g, p = net.genome, net.params
    values = {g.x_in: x, g.h_in: h}
    if g.c_in is not None:
        values[g.c_in] = c
    ops = g.ops
    for node_id in net.order:
        op = ops[node_id]
        srcs = [values[s] for s in g.predecessors(node_id)]
        if op == "linear":
            out = None
            for src_id, v in zip(g.predecessors(node_id), srcs):
                term = ad.matmul(v, p[f"cell{layer}.n{node_id}.w{src_id}"])
                out = term if out is None else out + term
            out = ad.add_bias(out, p[f"cell{layer}.n{node_id}.b"])
        elif op == "elementwise_sum":
            out = srcs[0]
            for v in srcs[1:]:
                out = out + v
        elif op == "elementwise_product":
            out = srcs[0]
            for v in srcs[1:]:
                out = out * v
        elif op == "tanh":
            out = ad.tanh(srcs[0])
            codes.append(out.data > 0)
        else:
            out = ad.sigmoid(srcs[0])
            codes.append(out.data > 0.5)
        values[node_id] = _check_finite(out, f"cell {layer} node {node_id} ({op})")
    new_c = values[g.c_out] if g.c_out is not None else None
    return values[g.h_out], new_c


def forward_rnn(net, batch, embed_noise=None):
    """
    Unroll the stacked cells over the batch and score next-token prediction.

    ``embed_noise`` (same shape as the token embeddings) is added to the
    inputs before the first cell.
    """
    batch.check_vocab(net.vocab)
    n, t = batch.tokens.shape
    if np.any(batch.targets < 0):
        raise ContractError("rnn minibatches need a target at every position")
    emb = ad.embedding(net.params["embedding"], batch.tokens)
    inputs = (emb if embed_noise is None else emb + embed_noise).retain_grad()
    seq = [inputs[:, step, :] for step in range(t)]
    hidden_states, codes = [], []
    for layer in range(NUM_RNN_LAYERS):
        h = ad.Tensor(np.zeros((n, net.hidden_dim)))
        c = ad.Tensor(np.zeros((n, net.hidden_dim)))
        outs = []
        for step in range(t):
            h, new_c = _cell_step(net, layer, seq[step], h, c, codes)
            if new_c is not None:
                c = new_c
            outs.append(h)
        hidden_states.append(h.data.copy())
        seq = outs
    top = ad.concat([ad.reshape(o, (n, 1, net.hidden_dim)) for o in seq], axis=1)
    logits = ad.add_bias(ad.matmul(ad.reshape(top, (n * t, net.hidden_dim)), net.params["out.w"]), net.params["out.b"])
    loss = _check_finite(ad.cross_entropy_loss(logits, batch.targets.reshape(-1)), "loss")
    if codes:
        activation_codes = np.concatenate([cd.reshape(n, -1) for cd in codes], axis=1)
    else:
        activation_codes = np.zeros((n, 0), dtype=bool)
    return ForwardResult(loss=loss, inputs=inputs, hidden_states=hidden_states, activation_codes=activation_codes)


# -- transformer ------------------------------------------------------------------
class TransformerNetwork(Network):
    def __init__(self, genome, vocab, max_len, params):
        self.genome = genome
        self.vocab = vocab
        self.max_len = max_len
        self.hidden_dim = genome.hidden_dim
        self.params = params
        self._bases = {}

    @property
    def num_heads(self):
        return sum(layer.num_heads for layer in self.genome.layers)

    def basis(self, kind, t):
        """Real sequence-mixing matrix: unitary DFT (real part) or orthonormal DCT-II."""
        key = (kind, t)
        if key not in self._bases:
            if kind == "lt_dft":
                idx = np.arange(t)
                m = np.cos(2.0 * np.pi * np.outer(idx, idx) / t) / np.sqrt(t)
            else:
                m = dct(np.eye(t), norm="ortho", axis=0)
            self._bases[key] = m
        return self._bases[key]

    def head_weights(self, seq_len=None):
        """
        Per-head weight matrices as ``(layer, head, [(param_name, index), ...])``.

        Self-attention heads own their column slices of the query, key and
        value projections (plus their bilinear matrix when multiplicative);
        convolution heads own their value slice and kernel-generator slice.
        Linear-transform heads have no trainable mixing weights.
        """
        d = self.hidden_dim
        out = []
        for i, layer in enumerate(self.genome.layers):
            dh = d // layer.num_heads
            for h in range(layer.num_heads):
                cols = (slice(None), slice(h * dh, (h + 1) * dh))
                if layer.family == "sa":
                    mats = [(f"L{i}.{w}.w", cols) for w in ("q", "k", "v")]
                    if layer.attn_op == "sa_mul":
                        mats.append((f"L{i}.bilinear", (h,)))
                elif layer.family == "conv":
                    k = layer.kernel_size
                    mats = [(f"L{i}.v.w", cols), (f"L{i}.kern.w", (slice(None), slice(h * k, (h + 1) * k)))]
                else:
                    mats = []
                out.append((i, h, mats))
        return out


def build_transformer(genome, vocab=DEFAULT_VOCAB, rng=None, max_len=DEFAULT_SEQ_LEN):
    genome.validate()
    rng = np.random.default_rng(0) if rng is None else rng
    d = genome.hidden_dim
    params = {}

    def linear(name, fan_in, fan_out):
        b = 1.0 / np.sqrt(fan_in)
        params[f"{name}.w"] = _uniform(rng, (fan_in, fan_out), b, f"{name}.w")
        params[f"{name}.b"] = _uniform(rng, (fan_out,), b, f"{name}.b")

    def norm(name):
        params[f"{name}.g"] = ad.Tensor(np.ones(d), requires_grad=True, name=f"{name}.g")
        params[f"{name}.b"] = ad.Tensor(np.zeros(d), requires_grad=True, name=f"{name}.b")

    params["tok_emb"] = _uniform(rng, (vocab, d), 1.0 / np.sqrt(d), "tok_emb")
    params["pos_emb"] = _uniform(rng, (max_len, d), 1.0 / np.sqrt(d), "pos_emb")
    norm("emb_ln")
    for i, layer in enumerate(genome.layers):
        dh = d // layer.num_heads
        if layer.family == "sa":
            for w in ("q", "k", "v"):
                linear(f"L{i}.{w}", d, d)
            if layer.attn_op == "sa_mul":
                params[f"L{i}.bilinear"] = _uniform(rng, (layer.num_heads, dh, dh), 1.0 / np.sqrt(dh), f"L{i}.bilinear")
            linear(f"L{i}.o", d, d)
        elif layer.family == "conv":
            linear(f"L{i}.v", d, d)
            linear(f"L{i}.kern", d, layer.num_heads * layer.kernel_size)
            linear(f"L{i}.o", d, d)
        norm(f"L{i}.attn_ln")
        for s in range(layer.ff_stacks):
            linear(f"L{i}.ff{s}.in", d, layer.ff_dim)
            linear(f"L{i}.ff{s}.out", layer.ff_dim, d)
            norm(f"L{i}.ff{s}.ln")
    linear("mlm", d, vocab)
    return TransformerNetwork(genome, vocab, max_len, params)


def _dense(x, p, name):
    return ad.add_bias(ad.matmul(x, p[f"{name}.w"]), p[f"{name}.b"])


def _split_heads(x, n, t, heads, dh):
    return ad.swapaxes(ad.reshape(x, (n, t, heads, dh)), 1, 2)  # (N, H, T, dh)


def forward_transformer(net, batch, embed_noise=None, head_scale=None):
    """
    Encoder forward pass with a masked-token cross-entropy proxy loss.

    ``head_scale`` maps ``(layer, head)`` to a multiplier applied to that
    head's output after capture, for sensitivity checks.
    """
    batch.check_vocab(net.vocab)
    n, t = batch.tokens.shape
    if t > net.max_len:
        raise ContractError(f"sequence length {t} exceeds positional table {net.max_len}")
    masked = batch.targets >= 0
    if not np.all(masked.any(axis=1)):
        raise ContractError("every sequence needs at least one masked target position")
    p, d = net.params, net.hidden_dim
    head_scale = head_scale or {}

    emb = ad.embedding(p["tok_emb"], batch.tokens)
    inputs = (emb if embed_noise is None else emb + embed_noise).retain_grad()
    pos = ad.embedding(p["pos_emb"], np.broadcast_to(np.arange(t), (n, t)))
    x = ad.layer_norm(inputs + pos, p["emb_ln.g"], p["emb_ln.b"])

    result = ForwardResult(loss=None, inputs=inputs, hidden_states=[], activation_codes=None)
    codes = []
    for i, layer in enumerate(net.genome.layers):
        heads, dh = layer.num_heads, d // layer.num_heads
        if layer.family == "sa":
            q = _split_heads(_dense(x, p, f"L{i}.q"), n, t, heads, dh)
            k = _split_heads(_dense(x, p, f"L{i}.k"), n, t, heads, dh)
            v = _split_heads(_dense(x, p, f"L{i}.v"), n, t, heads, dh)
            kt = ad.swapaxes(k, 2, 3)
            if layer.attn_op == "sa_sdp":
                scores = ad.matmul(q, kt) * (1.0 / np.sqrt(dh))
            else:
                scores = ad.matmul(ad.matmul(q, p[f"L{i}.bilinear"]), kt)
            probs = ad.softmax(scores, axis=-1)
            ctx = ad.matmul(probs, v)  # (N, H, T, dh)
            head_out = [ctx[:, h, :, :] for h in range(heads)]
            for h in range(heads):
                result.softmax_keys.append((i, h))
                result.softmax_maps.append(probs.data[:, h].copy())
        elif layer.family == "conv":
            ksz = layer.kernel_size
            v = _dense(x, p, f"L{i}.v")
            kern = ad.softmax(ad.reshape(_dense(x, p, f"L{i}.kern"), (n, t, heads, 1, ksz)), axis=-1)
            win = ad.reshape(ad.seq_windows(v, ksz), (n, t, ksz, heads, dh))
            win = ad.swapaxes(win, 2, 3)  # (N, T, H, K, dh)
            conv = ad.reshape(ad.matmul(kern, win), (n, t, heads, dh))
            head_out = [conv[:, :, h, :] for h in range(heads)]
        else:
            mixed = ad.matmul(ad.Tensor(net.basis(layer.attn_op, t)), x)
            head_out = [mixed[:, :, h * dh:(h + 1) * dh] for h in range(heads)]
        scaled = []
        for h, out in enumerate(head_out):
            result.head_keys.append((i, h))
            result.attn_outputs.append(out.retain_grad())
            scale = head_scale.get((i, h))
            scaled.append(out if scale is None else out * float(scale))
        mix = ad.concat(scaled, axis=-1)
        if layer.family in ("sa", "conv"):
            mix = _dense(mix, p, f"L{i}.o")
        x = ad.layer_norm(x + mix, p[f"L{i}.attn_ln.g"], p[f"L{i}.attn_ln.b"])
        for s in range(layer.ff_stacks):
            hid = ad.gelu(_dense(x, p, f"L{i}.ff{s}.in"))
            codes.append((hid.data > 0).reshape(n, -1))
            x = ad.layer_norm(x + _dense(hid, p, f"L{i}.ff{s}.out"), p[f"L{i}.ff{s}.ln.g"], p[f"L{i}.ff{s}.ln.b"])
        _check_finite(x, f"encoder layer {i}")
        result.layer_hidden_states.append(x.data.copy())

    rows = np.flatnonzero(masked.reshape(-1))
    flat = ad.reshape(x, (n * t, d))[rows]
    logits = _dense(flat, p, "mlm")
    result.loss = _check_finite(ad.cross_entropy_loss(logits, batch.targets.reshape(-1)[rows]), "loss")
    result.hidden_states = [h[:, -1, :] for h in result.layer_hidden_states]
    result.activation_codes = np.concatenate(codes, axis=1)
    return result


def build(genome, vocab=DEFAULT_VOCAB, rng=None, seq_len=DEFAULT_SEQ_LEN, hidden_dim=DEFAULT_RNN_HIDDEN,
          embed_dim=None):
    """Build either kind of network from its genome."""
    if genome.kind == "rnn":
        return build_rnn(genome, vocab=vocab, embed_dim=embed_dim, hidden_dim=hidden_dim, rng=rng)
    return build_transformer(genome, vocab=vocab, rng=rng, max_len=seq_len)


def forward(net, batch, embed_noise=None, **kwargs):
    if isinstance(net, RnnNetwork):
        return forward_rnn(net, batch, embed_noise=embed_noise)
    return forward_transformer(net, batch, embed_noise=embed_noise, **kwargs)
