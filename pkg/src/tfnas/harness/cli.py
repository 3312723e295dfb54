"""Command-line entry point: ``tfnas <subcommand>``."""
import argparse
import logging
import sys

import numpy as np

from ..errors import TfnasError
from ..genome import count_search_space, sample_rnn, sample_transformer, serialize
from .config import load_config
from .runner import ablate, evaluate, score_architectures

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_PARTIAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parser():
    p = _Parser(prog="tfnas", description="Training-free NAS metrics for RNN and transformer search spaces.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("count-space", help="size of the transformer search space")
    c.add_argument("--num-layers", type=int, nargs="+", default=[2, 4])

    s = sub.add_parser("sample", help="print random genomes, one per line")
    s.add_argument("--space", choices=["rnn", "transformer"], required=True)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-nodes", type=int, default=8, help="rnn cells only")

    for name, text in (("score", "score every genome"), ("evaluate", "score and rank-correlate"),
                       ("ablate", "seed/minibatch sensitivity per decile")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "count-space":
            print(count_search_space(num_layers=tuple(args.num_layers)))
            return EXIT_OK
        if args.command == "sample":
            rng = np.random.default_rng(args.seed)
            for _ in range(args.n):
                g = sample_rnn(rng, args.max_nodes) if args.space == "rnn" else sample_transformer(rng)
                print(serialize(g))
            return EXIT_OK
        config = load_config(args.config)
        if args.command == "score":
            flagged = score_architectures(config).flagged
        elif args.command == "evaluate":
            reports = evaluate(config)
            for r in reports:
                label = "normalized" if r.normalized else "raw"
                print(f"{r.metric_id}\t{label}\ttau={r.kendall_tau:.4f}\trho={r.spearman_rho:.4f}\t"
                      f"n={r.n_evaluated}\tdiscarded={r.n_discarded}")
            flagged = [r for r in reports if r.n_discarded or r.flag]
        else:
            result = ablate(config)
            flagged = [row for _, _, row in result.raw if row.flagged]
        return EXIT_PARTIAL if flagged else EXIT_OK
    except (TfnasError, OSError) as exc:
        print(f"tfnas: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
