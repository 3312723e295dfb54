# %% [markdown]
# # Building networks from genomes
#
# RNNs run three stacked cells under a next-token loss; transformers run
# the encoder under a masked-token loss. Each forward pass exposes the
# hidden states, input embeddings and per-head outputs that the metrics use.

# %%
import numpy as np

from tfnas import autodiff as ad
from tfnas.genome import deserialize, vanilla_rnn
from tfnas.harness import sample_minibatch, synthetic_corpus
from tfnas.netbuild import build, forward

corpus = synthetic_corpus(200, length=5000)
rng = np.random.default_rng(0)

net = build(vanilla_rnn(), vocab=200, hidden_dim=32, rng=np.random.default_rng(0))
batch = sample_minibatch(corpus, rng, 16, 8, "next_token")
res = forward(net, batch)
print("rnn loss", res.loss.item(), "vs ln(V)", np.log(200))
print("hidden state shapes", [h.shape for h in res.hidden_states])

# %%
g = deserialize("v=1;kind=transformer;hidden=128;layers=sa_sdp/2/512/1,lt_dft/4/512/1")
net = build(g, vocab=200, seq_len=8, rng=np.random.default_rng(0))
batch = sample_minibatch(corpus, rng, 16, 8, "masked")
res = forward(net, batch)
ad.backward(res.loss)
print("transformer loss", res.loss.item(), "parameters", net.param_size())
print("heads", res.head_keys)
