"""
Regenerate the synthetic fixture tables.

The trained scores here are synthetic, not measured: RNN "test losses" and
transformer "GLUE scores" are smooth functions of model size plus seeded
noise, so the pipeline has something rank-correlated to recover.
Run from this directory: ``python3 generate.py``.
"""
import numpy as np

from tfnas.genome import BenchmarkRecord, genome_id, param_count, sample_rnn, sample_transformer, write_records


def rnn_table(n=20, seed=11):
    rng = np.random.default_rng(seed)
    out, seen = [], set()
    while len(out) < n:
        g = sample_rnn(rng, max_nodes=int(rng.integers(3, 9)))
        if genome_id(g) in seen:
            continue
        seen.add(genome_id(g))
        size = param_count(g, vocab=2000, hidden_dim=256)
        loss = 5.2 - 0.15 * np.log(size / 1e5) + rng.normal(0.0, 0.05)
        out.append(BenchmarkRecord(g, round(float(loss), 4), {"source": "synthetic"}))
    return out


def transformer_table(n=20, seed=12):
    rng = np.random.default_rng(seed)
    out, seen = [], set()
    while len(out) < n:
        g = sample_transformer(rng)
        if genome_id(g) in seen:
            continue
        seen.add(genome_id(g))
        size = param_count(g, vocab=2000)
        glue = 70.0 + 3.0 * np.log(size / 1e6) + rng.normal(0.0, 0.5)
        out.append(BenchmarkRecord(g, round(float(glue), 3), {"source": "synthetic"}))
    return out


if __name__ == "__main__":
    note = "SYNTHETIC trained scores for tests; not measured on any benchmark."
    write_records("rnn_bench.tsv", rnn_table(), header=note + "\nscore: test loss (lower is better)")
    write_records("transformer_bench.tsv", transformer_table(), header=note + "\nscore: GLUE-style average (higher is better)")
