# %% [markdown]
# # Training-free scores
#
# One probe (forward plus backward) feeds every metric. Each metric can be
# reported as a per-feature mean (normalized) or a sum (raw).

# %%
import numpy as np

from tfnas import metrics as M
from tfnas.genome import deserialize, sample_rnn
from tfnas.harness import sample_minibatch, synthetic_corpus
from tfnas.netbuild import build

corpus = synthetic_corpus(200, length=5000)
rng = np.random.default_rng(1)

g = sample_rnn(rng, max_nodes=6)
net = build(g, vocab=200, hidden_dim=32, rng=np.random.default_rng(0))
batch = sample_minibatch(corpus, rng, 16, 8, "next_token")
probe = M.run_probe(net, batch)
for metric_id in M.metrics_for("rnn"):
    s = M.evaluate_metric(metric_id, net, batch, probe=probe)
    print(f"{metric_id:22s} {s.value: .6g} {s.reason or ''}")

# %%
g = deserialize("v=1;kind=transformer;hidden=128;layers=sa_sdp/4/512/1,conv_5/2/1024/3")
net = build(g, vocab=200, seq_len=8, rng=np.random.default_rng(0))
batch = sample_minibatch(corpus, rng, 16, 8, "masked")
probe = M.run_probe(net, batch)
for metric_id in M.metrics_for("transformer"):
    norm = M.evaluate_metric(metric_id, net, batch, normalized=True, probe=probe)
    raw = M.evaluate_metric(metric_id, net, batch, normalized=False, probe=probe)
    print(f"{metric_id:22s} normalized {norm.value: .6g}  raw {raw.value: .6g}")

# %%
# kernel divergence of two identical rows: eigenvalues 2 and 0
x = rng.normal(size=10)
print(M.correlation_kernel_score(np.stack([x, x])))
