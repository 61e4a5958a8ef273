"""``twinseq`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 invalid configuration or input,
3 runtime or numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import statistics
import sys
from pathlib import Path

from ..core import NonFiniteError
from ..data.container import CorpusFormatError, read_corpus, write_corpus
from ..data.synth import generate_synthetic_corpus
from ..eval.inference import evaluate, strip_backward
from ..eval.metrics import posterior_to_likelihood, write_likelihoods
from ..eval.streaming import stream_utterance
from ..train.loop import DivergenceError, train_run
from .bench import run_bench, worker_count, write_bench
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .metrics import format_rows, write_metrics
from .modelfile import load_model, save_model

log = logging.getLogger("twinseq")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
COMMANDS = ("synth", "train", "eval", "infer", "gradcheck", "bench")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twinseq", description="Twin-regularised recurrent sequence labelling.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    helps = {
        "synth": "generate the synthetic corpus",
        "train": "train one model per seed",
        "eval": "score trained models on the test split",
        "infer": "stream the test split and write scaled log-likelihoods",
        "gradcheck": "finite-difference check of every cell variant",
        "bench": "compare unidir / unitwin / bidir across seeds and windows",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=name != "gradcheck", type=Path, help="experiment config file")
        p.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
        p.add_argument("--out", type=Path, help="output directory (overrides [experiment] out)")
        p.add_argument("--quiet", action="store_true", help="only print errors")
        p.add_argument("--no-timestamp", dest="timestamp", action="store_false",
                       help="omit the timestamp comment line from CSV outputs")
    return parser


def _load(args) -> ExperimentConfig:
    if args.config is None:
        cfg = parse_config("[experiment]\nmode = unidir\n")
    else:
        cfg = load_config(args.config)
    if args.seed is not None:
        cfg.override("experiment", "seeds", (args.seed,))
    if args.out is not None:
        cfg.override("experiment", "out", str(args.out))
    return cfg


def _corpus_raw(cfg: ExperimentConfig):
    """The configured corpus file, or the synthetic corpus when none is set."""
    path = cfg["data"]["corpus"]
    if not path:
        return generate_synthetic_corpus(cfg.synth_spec())
    p = Path(path)
    if not p.is_absolute() and not p.exists() and cfg.source is not None:
        p = cfg.source.parent / p
    if not p.is_file():
        raise ConfigError(f"corpus file not found: {path}")
    return read_corpus(p)


def _corpus(cfg: ExperimentConfig):
    corpus = _corpus_raw(cfg)
    past, future = cfg.window
    return corpus.windowed(past, future) if past or future else corpus


def _model_path(cfg: ExperimentConfig, seed: int) -> Path:
    return cfg.out / f"model_{cfg.mode}_seed{seed}.npz"


def cmd_synth(cfg: ExperimentConfig, args, say) -> int:
    corpus = generate_synthetic_corpus(cfg.synth_spec())
    path = cfg.out / f"{corpus.name}.twsq"
    mpath = write_corpus(corpus, path)
    say(f"wrote {path} and {mpath}")
    say(f"ambiguity rate {corpus.meta['ambiguity_rate']:.4f}, causal ceiling {corpus.meta['causal_ceiling']:.4f}")
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, args, say) -> int:
    corpus = _corpus(cfg)
    for seed in cfg.seeds:
        hp = cfg.hyperparams(seed)
        result = train_run(corpus, hp, train_split=cfg["data"]["train_split"], dev_split=cfg["data"]["dev_split"],
                           on_epoch=lambda r: say(f"  epoch {r.epoch:2d}  loss {r.train_loss:.4f}  "
                                                  f"dev FER {r.dev_fer:.4f}  lr {r.lr:g}"))
        mpath = save_model(result.model, _model_path(cfg, seed), {"seed": seed, "window": list(cfg.window)})
        csv = write_metrics(cfg.out / f"metrics_{cfg.mode}_seed{seed}.csv", cfg["experiment"]["name"], seed,
                            result.history, args.timestamp)
        say(f"seed {seed}: final dev FER {result.final_dev_fer:.4f}; wrote {mpath} and {csv}")
    return EXIT_OK


def _load_trained(cfg: ExperimentConfig, seed: int):
    path = _model_path(cfg, seed)
    if not path.is_file():
        raise ConfigError(f"model file not found: {path} (run 'twinseq train' first)")
    model, _ = load_model(path)
    return strip_backward(model) if model.config.mode == "twin" else model


def cmd_eval(cfg: ExperimentConfig, args, say) -> int:
    corpus = _corpus(cfg)
    test = corpus.split(cfg["data"]["test_split"])
    rows = []
    for seed in cfg.seeds:
        fer = evaluate(_load_trained(cfg, seed), test).fer
        rows.append([cfg["experiment"]["name"], cfg.mode, seed, fer])
        say(f"seed {seed}: test FER {fer:.4f}")
    fers = [r[-1] for r in rows]
    std = statistics.stdev(fers) if len(fers) > 1 else 0.0
    say(f"{cfg.mode}: test FER {100 * statistics.fmean(fers):.2f} ± {100 * std:.2f}% over {len(fers)} seed(s)")
    out = cfg.out / f"eval_{cfg.mode}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_rows(["experiment", "mode", "seed", "test_fer"], rows, args.timestamp), encoding="utf-8")
    return EXIT_OK


def cmd_infer(cfg: ExperimentConfig, args, say) -> int:
    # the session does its own context windowing, so it gets raw frames
    corpus = _corpus_raw(cfg)
    if corpus.priors is None:
        raise ConfigError("corpus has no label priors; cannot normalise posteriors")
    past, future = cfg.window
    seed = cfg.seeds[0]
    model = _load_trained(cfg, seed)
    entries = []
    for u in corpus.split(cfg["data"]["test_split"]):
        post = stream_utterance(model, u.frames.astype(model.classifier.W.dtype), past, future)
        entries.append((u.uid, posterior_to_likelihood(post, corpus.priors)))
    out = cfg.out / f"likelihoods_{cfg.mode}_seed{seed}.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_likelihoods(out, entries)
    say(f"streamed {len(entries)} utterances with look-ahead {future}; wrote {out}")
    return EXIT_OK


def cmd_gradcheck(cfg: ExperimentConfig, args, say) -> int:
    from ..checks import gradient_suite
    seed = cfg.seeds[0]
    ok = True
    for name, report in gradient_suite(seed=seed):
        say(f"{name:<16} {report.summary()}")
        ok &= report.passed
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_bench(cfg: ExperimentConfig, args, say) -> int:
    corpus = _corpus_raw(cfg)
    b = cfg["bench"]
    workers = worker_count()
    past = cfg.window[0]
    result = run_bench(corpus, cfg.hyperparams(), cfg.seeds, b["modes"], b["windows"], b["lambdas"], past,
                       (cfg["data"]["train_split"], cfg["data"]["dev_split"], cfg["data"]["test_split"]),
                       workers, on_done=lambda r: say(f"  {r.mode:<8} k={r.window:<2} lambda={r.lam:g} "
                                                      f"seed={r.seed}: dev FER {r.dev_fer:.4f}"))
    paths = write_bench(result, cfg.out, cfg["experiment"]["name"], args.timestamp)
    say(paths["summary"].read_text(encoding="utf-8").rstrip())
    return EXIT_OK


HANDLERS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer,
            "gradcheck": cmd_gradcheck, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")

    def say(msg: str) -> None:
        if not args.quiet:
            print(msg)

    try:
        cfg = _load(args)
        return HANDLERS[args.command](cfg, args, say)
    except (ConfigError, CorpusFormatError) as exc:
        print(f"twinseq: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DivergenceError, NonFiniteError, FloatingPointError) as exc:
        print(f"twinseq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"twinseq: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, RuntimeError) as exc:
        print(f"twinseq: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
