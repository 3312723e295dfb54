"""
Batch scoring, correlation reports and seed/minibatch ablations.

Work is split into cells ``(genome, seed, minibatch)``; each cell builds one
network, samples one minibatch, runs a shared probe and evaluates every
requested metric. Finished rows go to an append-only JSON-lines journal in
the output directory, so interrupted runs resume without recomputation.
"""
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ContractError, TfnasError
from ..genome import deserialize, genome_id, load_genomes, load_records, serialize
from ..metrics import evaluate_metric, run_probe
from ..netbuild import build
from ..stats import build_report
from .corpus import load_corpus, sample_minibatch, synthetic_corpus

logger = logging.getLogger(__name__)

JOURNAL = "journal.jsonl"


@dataclass(frozen=True)
class ScoreRow:
    genome_id: str
    metric_id: str
    normalized: bool
    seed: int
    minibatch_id: int
    value: float
    reason: str = None

    @property
    def key(self):
        return (self.genome_id, self.metric_id, self.normalized, self.seed, self.minibatch_id)

    @property
    def flagged(self):
        return self.reason is not None


@dataclass
class ScoreResult:
    rows: list
    computed_cells: int
    reused_cells: int

    @property
    def flagged(self):
        return [r for r in self.rows if r.flagged]


# -- inputs ----------------------------------------------------------------------
def load_corpus_for(config):
    if config.corpus == "synthetic":
        return synthetic_corpus(config.vocab_size, seed=config.data_seed)
    if not config.vocab:
        raise ContractError("a corpus file needs a vocab file")
    return load_corpus(config.corpus, config.vocab)


def load_population(config):
    """Genomes to score, in file order, and trained scores when a benchmark table is given."""
    if config.benchmark:
        records = load_records(config.benchmark)
        genomes = [r.genome for r in records]
        trained = {genome_id(r.genome): r.trained_score for r in records}
    else:
        genomes, trained = load_genomes(config.genomes), {}
    kinds = {g.kind for g in genomes}
    if kinds - {config.search_space}:
        raise ContractError(f"input genomes are {sorted(kinds)}, config says {config.search_space}")
    unique = list({genome_id(g): g for g in genomes}.values())
    return unique, trained


# -- journal ---------------------------------------------------------------------------
def read_journal(path):
    """Rows recorded so far; a truncated final line from an interrupted write is ignored."""
    rows = {}
    if not os.path.exists(path):
        return rows
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            try:
                d = json.loads(line)
                d["value"] = _decode_value(d["value"])
                row = ScoreRow(**d)
            except (json.JSONDecodeError, TypeError, KeyError):
                continue
            rows[row.key] = row
    return rows


def _encode(row):
    d = asdict(row)
    if not math.isfinite(d["value"]):
        d["value"] = None
    return json.dumps(d, sort_keys=True)


def _decode_value(v):
    return float("nan") if v is None else float(v)


# -- cell evaluation ---------------------------------------------------------------------
_WORKER = {}


def _init_worker(config):
    _WORKER["config"] = config
    _WORKER["corpus"] = load_corpus_for(config)


def _net_dims(config, corpus):
    vocab = config.vocab_size if config.corpus == "synthetic" else corpus.vocab_size
    return dict(vocab=vocab, seq_len=config.seq_len, hidden_dim=config.rnn_hidden)


def evaluate_cell(config, corpus, genome, seed, minibatch_id, wanted):
    """Score one (genome, seed, minibatch) cell; failures become flagged rows."""
    gid = genome_id(genome)
    rows = []
    try:
        net = build(genome, rng=np.random.default_rng(seed), **_net_dims(config, corpus))
        batch = sample_minibatch(corpus, np.random.default_rng([config.data_seed, minibatch_id]), config.batch_size,
                                 config.seq_len, config.minibatch_mode, minibatch_id)
        needs_probe = any(m != "parameter_count" for m, _ in wanted)
        probe = run_probe(net, batch) if needs_probe else None
    except (TfnasError, FloatingPointError, ValueError, IndexError) as exc:
        reason = f"error:{type(exc).__name__}:{exc}"
        return [ScoreRow(gid, m, norm, seed, minibatch_id, float("nan"), reason) for m, norm in wanted]
    for metric_id, normalized in wanted:
        try:
            score = evaluate_metric(metric_id, net, batch, normalized=normalized, seed=seed, probe=probe)
            value, reason = score.value, score.reason
        except (TfnasError, FloatingPointError, ValueError, IndexError) as exc:
            value, reason = float("nan"), f"error:{type(exc).__name__}:{exc}"
        rows.append(ScoreRow(gid, metric_id, normalized, seed, minibatch_id, float(value), reason))
    return rows


def _run_cell(args):
    text, seed, minibatch_id, wanted = args
    return evaluate_cell(_WORKER["config"], _WORKER["corpus"], deserialize(text), seed, minibatch_id, wanted)


def run_cells(config, cells):
    """
    Evaluate ``cells`` (``(genome, seed, minibatch_id)`` triples), reusing journaled rows.

    Returns a :class:`ScoreResult` with one row per cell, metric and
    normalization setting, in cell order.
    """
    os.makedirs(config.output, exist_ok=True)
    journal_path = os.path.join(config.output, JOURNAL)
    done = read_journal(journal_path)
    combos = [(m, norm) for m in config.metrics for norm in config.normalizations]
    todo = []
    for genome, seed, mb in cells:
        gid = genome_id(genome)
        missing = [(m, n) for m, n in combos if (gid, m, n, seed, mb) not in done]
        if missing:
            todo.append((serialize(genome), seed, mb, missing))
    logger.info("%d cells requested, %d already journaled", len(cells), len(cells) - len(todo))
    if todo:
        with open(journal_path, "a+", encoding="utf-8") as journal:
            if journal.tell() > 0:
                journal.seek(journal.tell() - 1)
                if journal.read(1) != "\n":
                    journal.write("\n")  # seal a line cut short by an interrupted run
            for i, new_rows in enumerate(_map_cells(config, todo), 1):
                for row in new_rows:
                    journal.write(_encode(row) + "\n")
                    done[row.key] = row
                journal.flush()
                os.fsync(journal.fileno())
                logger.info("cell %d/%d done (%s seed=%d minibatch=%d)", i, len(todo), new_rows[0].genome_id,
                            new_rows[0].seed, new_rows[0].minibatch_id)
    rows = [done[(genome_id(genome), m, n, seed, mb)] for genome, seed, mb in cells for m, n in combos]
    return ScoreResult(rows, computed_cells=len(todo), reused_cells=len(cells) - len(todo))


def _map_cells(config, todo):
    if config.workers <= 1:
        _init_worker(config)
        for args in todo:
            yield _run_cell(args)
        return
    with ProcessPoolExecutor(config.workers, initializer=_init_worker, initargs=(config,)) as pool:
        yield from pool.map(_run_cell, todo)


# -- public operations --------------------------------------------------------------------------
def _fmt(value):
    return "nan" if not math.isfinite(value) else repr(float(value))


def write_scores(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("genome_id\tmetric_id\tnormalized\tseed\tminibatch\tvalue\treason\n")
        for r in sorted(rows, key=lambda r: (r.genome_id, r.metric_id, not r.normalized, r.seed, r.minibatch_id)):
            fh.write(f"{r.genome_id}\t{r.metric_id}\t{str(r.normalized).lower()}\t{r.seed}\t{r.minibatch_id}\t"
                     f"{_fmt(r.value)}\t{r.reason or ''}\n")


def score_architectures(config):
    """Score every genome over the configured seeds and minibatches and write ``scores.tsv``."""
    genomes, _ = load_population(config)
    cells = [(g, s, mb) for g in genomes for s in config.seeds for mb in config.minibatches]
    result = run_cells(config, cells)
    write_scores(os.path.join(config.output, "scores.tsv"), result.rows)
    return result


def aggregate_scores(rows):
    """
    Collapse seeds and minibatches into one value per (genome, metric, normalization).

    A genome whose cells include any flagged row is reported as flagged.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r.genome_id, r.metric_id, r.normalized), []).append(r)
    out = {}
    for key, group in groups.items():
        flagged = [r for r in group if r.flagged]
        if flagged:
            out[key] = (float("nan"), flagged[0].reason)
        else:
            out[key] = (float(np.mean([r.value for r in group])), None)
    return out


class _Agg:
    def __init__(self, value, reason):
        self.value = value
        self.reason = reason

    @property
    def degenerate(self):
        return self.reason is not None


def evaluate(config):
    """
    Score the benchmark population and correlate each metric with trained scores.

    Writes ``report.json`` and one plot-ready pair table per report under
    ``pairs/``; returns the list of reports.
    """
    if not config.benchmark:
        raise ContractError("evaluate needs a benchmark table")
    genomes, trained = load_population(config)
    result = score_architectures(config)
    agg = aggregate_scores(result.rows)
    reports = []
    for metric_id in config.metrics:
        for normalized in config.normalizations:
            scores = {gid: _Agg(*agg[(gid, m, n)]) for (gid, m, n) in agg if m == metric_id and n == normalized}
            report = build_report(scores, trained, config.performance_sign, metric_id=metric_id,
                                  normalized=normalized)
            reports.append(report)
    _write_reports(config, reports, len(genomes))
    return reports


def _write_reports(config, reports, n_genomes):
    pair_dir = os.path.join(config.output, "pairs")
    os.makedirs(pair_dir, exist_ok=True)
    payload = {
        "version": 1,
        "search_space": config.search_space,
        "performance_sign": config.performance_sign,
        "n_genomes": n_genomes,
        "reports": [],
    }
    for rep in reports:
        d = rep.as_dict()
        for k in ("kendall_tau", "spearman_rho"):
            if not math.isfinite(d[k]):
                d[k] = None
        payload["reports"].append(d)
        label = "normalized" if rep.normalized else "raw"
        with open(os.path.join(pair_dir, f"{rep.metric_id}.{label}.tsv"), "w", encoding="utf-8") as fh:
            fh.write("metric_value\tperformance\n")
            for x, y in rep.pairs:
                fh.write(f"{_fmt(x)}\t{_fmt(y)}\n")
    with open(os.path.join(config.output, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- ablation --------------------------------------------------------------------------------
def select_deciles(records, n_bins=10):
    """
    One record per trained-score decile: the median-position record of each bin.

    Records are ordered by trained score (ties broken by genome id), so the
    choice depends only on the table.
    """
    if len(records) < n_bins:
        raise ContractError(f"ablation needs at least {n_bins} architectures, got {len(records)}")
    ordered = sorted(records, key=lambda r: (r.trained_score, genome_id(r.genome)))
    n = len(ordered)
    return [ordered[int((i + 0.5) * n / n_bins)] for i in range(n_bins)]


def spread(values):
    """min, max, mean, population std and coefficient of variation of a sample."""
    v = np.asarray(values, dtype=np.float64)
    mean = float(v.mean())
    std = float(v.std())
    cv = std / abs(mean) if mean != 0 else (0.0 if std == 0 else float("inf"))
    return {"n": len(v), "min": float(v.min()), "max": float(v.max()), "mean": mean, "std": std, "cv": cv}


@dataclass
class AblationResult:
    selected: list  # genome ids, best-to-worst decile order as selected
    raw: list  # (axis, decile, ScoreRow)
    stats: list  # dicts per (metric, normalized, axis, decile)
    summary: list  # dicts per (metric, normalized, axis)


def ablate(config):
    """
    Seed and minibatch sensitivity on one architecture per performance decile.

    The seed axis varies ``config.seeds`` at the first minibatch id; the
    minibatch axis varies ``config.minibatches`` at the first seed.
    """
    if not config.benchmark:
        raise ContractError("ablate needs a benchmark table")
    records = load_records(config.benchmark)
    chosen = select_deciles(records)
    seed0, mb0 = config.seeds[0], config.minibatches[0]
    axes = {
        "seed": [(r.genome, s, mb0) for r in chosen for s in config.seeds],
        "minibatch": [(r.genome, seed0, mb) for r in chosen for mb in config.minibatches],
    }
    decile_of = {genome_id(r.genome): i for i, r in enumerate(chosen)}
    raw, stats = [], []
    for axis, cells in axes.items():
        result = run_cells(config, cells)
        groups = {}
        for row in result.rows:
            raw.append((axis, decile_of[row.genome_id], row))
            groups.setdefault((row.metric_id, row.normalized, decile_of[row.genome_id], row.genome_id), []).append(row)
        for (metric_id, normalized, decile, gid), rows in sorted(groups.items()):
            finite = [r.value for r in rows if not r.flagged]
            entry = {"metric_id": metric_id, "normalized": normalized, "axis": axis, "decile": decile,
                     "genome_id": gid, "flagged": len(rows) - len(finite)}
            entry.update(spread(finite) if finite else
                         {"n": 0, "min": math.nan, "max": math.nan, "mean": math.nan, "std": math.nan, "cv": math.nan})
            stats.append(entry)
    summary = stability_summary(stats)
    _write_ablation(config, raw, stats, summary)
    return AblationResult([genome_id(r.genome) for r in chosen], raw, stats, summary)


def stability_summary(stats):
    """
    Compare within-architecture variation to between-architecture spread.

    ``spread_ratio`` is the population std of per-architecture means over
    the absolute mean of those means; a metric is stable on an axis when
    every architecture's coefficient of variation is below it.
    """
    groups = {}
    for s in stats:
        groups.setdefault((s["metric_id"], s["normalized"], s["axis"]), []).append(s)
    out = []
    for (metric_id, normalized, axis), entries in sorted(groups.items()):
        usable = [e for e in entries if e["n"] > 0]
        if len(usable) < 2:
            out.append({"metric_id": metric_id, "normalized": normalized, "axis": axis, "max_cv": math.nan,
                        "spread_ratio": math.nan, "stable": False, "n_architectures": len(usable)})
            continue
        means = spread([e["mean"] for e in usable])
        max_cv = max(e["cv"] for e in usable)
        out.append({"metric_id": metric_id, "normalized": normalized, "axis": axis, "max_cv": max_cv,
                    "spread_ratio": means["cv"], "stable": bool(max_cv < means["cv"]),
                    "n_architectures": len(usable)})
    return out


def _write_ablation(config, raw, stats, summary):
    os.makedirs(config.output, exist_ok=True)
    with open(os.path.join(config.output, "ablation_raw.tsv"), "w", encoding="utf-8") as fh:
        fh.write("axis\tdecile\tgenome_id\tmetric_id\tnormalized\tseed\tminibatch\tvalue\treason\n")
        for axis, decile, r in raw:
            fh.write(f"{axis}\t{decile}\t{r.genome_id}\t{r.metric_id}\t{str(r.normalized).lower()}\t{r.seed}\t"
                     f"{r.minibatch_id}\t{_fmt(r.value)}\t{r.reason or ''}\n")
    cols = ["metric_id", "normalized", "axis", "decile", "genome_id", "n", "flagged", "min", "max", "mean", "std", "cv"]
    with open(os.path.join(config.output, "ablation.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for s in stats:
            fh.write("\t".join(_cell(s[c]) for c in cols) + "\n")
    cols = ["metric_id", "normalized", "axis", "n_architectures", "max_cv", "spread_ratio", "stable"]
    with open(os.path.join(config.output, "ablation_summary.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for s in summary:
            fh.write("\t".join(_cell(s[c]) for c in cols) + "\n")


def _cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return _fmt(v)
    return str(v)
