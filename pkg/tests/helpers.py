"""Small shared builders for network-level tests."""
import numpy as np

from tfnas import autodiff as ad
from tfnas.genome import LayerSpec, TransformerGenome
from tfnas.netbuild import Minibatch, forward

VOCAB = 40

# relative-error denominator floor: central differences carry ~1e-11 rounding noise, so a
# gradient that is exactly zero (e.g. a key bias under softmax) would otherwise read as a large error
FD_FLOOR = 1e-6

# criterion number -> PASS/FAIL line, printed by the terminal-summary hook in conftest
ACCEPTANCE = {}


def rnn_batch(n=4, t=5, vocab=VOCAB, seed=0, minibatch_id=0):
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, vocab, size=(n, t + 1))
    return Minibatch(ids[:, :t], ids[:, 1:], "next_token", minibatch_id)


def masked_batch(n=4, t=6, vocab=VOCAB, seed=0, minibatch_id=0, n_mask=2):
    rng = np.random.default_rng(seed)
    tokens = rng.integers(1, vocab, size=(n, t))
    targets = np.full((n, t), -1)
    for row in range(n):
        pos = rng.choice(t, size=n_mask, replace=False)
        targets[row, pos] = tokens[row, pos]
        tokens[row, pos] = 0
    return Minibatch(tokens, targets, "masked", minibatch_id)


def tgenome(*ops, hidden=128, heads=2, ff=512, stacks=1):
    ops = ops or ("sa_sdp", "sa_mul")
    return TransformerGenome(hidden, tuple(LayerSpec(op, heads, ff, stacks) for op in ops))


def loss_value(net, batch, **kw):
    return forward(net, batch, **kw).loss.item()


def fd_param_check(net, batch, name, n_entries=6, seed=0, step=1e-5):
    """Max-norm relative error between backprop and central differences on random entries of a parameter."""
    net.zero_grad()
    ad.backward(forward(net, batch).loss)
    p = net.params[name]
    grad = p.grad if p.grad is not None else np.zeros_like(p.data)  # unreached from the loss: derivative is 0
    rng = np.random.default_rng(seed)
    flat = rng.choice(p.data.size, size=min(n_entries, p.data.size), replace=False)
    analytic, numeric = [], []
    for k in flat:
        idx = np.unravel_index(k, p.data.shape)
        orig = p.data[idx]
        p.data[idx] = orig + step
        hi = loss_value(net, batch)
        p.data[idx] = orig - step
        lo = loss_value(net, batch)
        p.data[idx] = orig
        analytic.append(grad[idx])
        numeric.append((hi - lo) / (2 * step))
    analytic, numeric = np.array(analytic), np.array(numeric)
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), FD_FLOOR))


def fd_input_check(net, batch, n_entries=6, seed=0, step=1e-5):
    """Same check for the input-embedding Jacobian, perturbing through ``embed_noise``."""
    net.zero_grad()
    res = forward(net, batch)
    ad.backward(res.loss)
    grad = res.inputs.grad
    rng = np.random.default_rng(seed)
    flat = rng.choice(grad.size, size=n_entries, replace=False)
    analytic, numeric = [], []
    for k in flat:
        idx = np.unravel_index(k, grad.shape)
        e = np.zeros(grad.shape)
        e[idx] = step
        hi = loss_value(net, batch, embed_noise=e)
        lo = loss_value(net, batch, embed_noise=-e)
        analytic.append(grad[idx])
        numeric.append((hi - lo) / (2 * step))
    analytic, numeric = np.array(analytic), np.array(numeric)
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), FD_FLOOR))


def fd_head_check(net, batch, eps=1e-5):
    """Head-output gradients vs the derivative of the loss under scaling each head by (1 + eps)."""
    net.zero_grad()
    res = forward(net, batch)
    ad.backward(res.loss)
    analytic, numeric = [], []
    for key, out in zip(res.head_keys, res.attn_outputs):
        analytic.append(float(np.sum(out.data * out.grad)))
        hi = loss_value(net, batch, head_scale={key: 1 + eps})
        lo = loss_value(net, batch, head_scale={key: 1 - eps})
        numeric.append((hi - lo) / (2 * eps))
    analytic, numeric = np.array(analytic), np.array(numeric)
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), FD_FLOOR)), analytic, numeric
