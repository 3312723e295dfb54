# %% [markdown]
# # The two search spaces
#
# Transformer genomes come from a per-layer grid; RNN genomes are small
# operation DAGs. Both serialize to one line of text.

# %%
import numpy as np

from tfnas.genome import (count_search_space, deserialize, layer_grid, param_count, sample_rnn,
                          sample_transformer, serialize, vanilla_rnn)

print("per-layer choices:", len(layer_grid()))
print("transformer grid:", count_search_space())
print("two-layer subspace:", count_search_space(num_layers=(2,)))

# %%
rng = np.random.default_rng(3)
for _ in range(3):
    g = sample_transformer(rng)
    print(serialize(g), param_count(g))

# %%
# the smallest RNN cell is the vanilla tanh(W [x, h] + b)
print(serialize(vanilla_rnn()))
for _ in range(3):
    g = sample_rnn(rng, max_nodes=6)
    text = serialize(g)
    assert serialize(deserialize(text)) == text
    print(text)
