# %% [markdown]
# # Scoring, evaluating and ablating a population
#
# The harness walks (genome, seed, minibatch) cells, journals every row so
# an interrupted run resumes, and correlates scores against a benchmark
# table. The tables under tests/fixtures hold SYNTHETIC trained scores.

# %%
import os
import tempfile

from tfnas.harness import ablate, evaluate, load_config

fixtures = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests", "fixtures")
out = tempfile.mkdtemp()
path = os.path.join(out, "run.ini")
with open(path, "w") as fh:
    fh.write(f"""[run]
version = 1
search_space = rnn
metrics = hidden_covariance_0, jacobian_cosine, parameter_count
seeds = 0-4
minibatches = 0-4
batch_size = 16
seq_len = 8
vocab_size = 200
rnn_hidden = 32
benchmark = {os.path.join(fixtures, 'rnn_bench.tsv')}
output = {out}
""")
config = load_config(path)

# %%
for r in evaluate(config):
    print(r.metric_id, "normalized" if r.normalized else "raw", round(r.kendall_tau, 3), r.n_discarded)

# %%
result = ablate(config)
for s in result.summary:
    print(s["metric_id"], s["axis"], s["normalized"], round(s["max_cv"], 3), round(s["spread_ratio"], 3), s["stable"])
print(sorted(os.listdir(out)))
