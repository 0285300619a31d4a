"""Command-line entry point: clean, train-tokenizer, fertility, pretokenize, train, eval, report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .corpus import HashSet, HashSetError, Pipeline, StageConfig, md5_digest, read_jsonl, write_jsonl
from .evaluator import (
    EvalReport,
    NumpyLM,
    TaskConfig,
    TaskConfigError,
    evaluate_classification,
    evaluate_mc,
    read_cls_jsonl,
    read_mc_jsonl,
    scaling_report,
)
from .io import atomic_open, read_json, write_json
from .model import CheckpointError, ConfigError, ModelConfig, count_parameters, init_params, load_checkpoint, load_preset
from .tokenizer import (
    DEFAULT_VOCAB_SIZE,
    BlockFileError,
    Tokenizer,
    TokenizerError,
    fertility,
    pretokenize_corpus,
    read_blocks,
    train_bpe,
    write_blocks,
)
from .trainer import (
    OptimizerConfig,
    TrainingAborted,
    load_training_state,
    steps_per_epoch,
    train,
    write_trace,
)

log = logging.getLogger("lrlm")

EXIT_OK, EXIT_DATA, EXIT_CONFIG = 0, 1, 2


class ConfigurationError(Exception):
    pass


class DataError(Exception):
    pass


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("LRLM_WORKERS", "1")))
    except ValueError:
        return 1


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out: str | Path, command: str, args: argparse.Namespace, seed: int, inputs: dict,
                   outputs: dict, started: str, config_path: str | None = None) -> None:
    manifest = {
        "command": command,
        "config_path": config_path,
        "seed": seed,
        "inputs": {k: str(v) for k, v in inputs.items() if v is not None},
        "outputs": {k: str(v) for k, v in outputs.items() if v is not None},
        "started": started,
        "finished": _now(),
        "tool_version": __version__,
    }
    write_json(Path(str(out) + ".manifest.json"), manifest)


def iter_texts(path: str | Path):
    """Texts from a JSONL corpus ("text" field); plain-text files yield one text."""
    path = Path(path)
    if path.suffix in (".jsonl", ".json"):
        for rec in read_jsonl(path):
            if hasattr(rec, "text"):
                yield rec.text
            else:
                log.warning("%s line %d skipped: %s", path, rec.line, rec.reason)
    else:
        yield path.read_text(encoding="utf-8")


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{what} not found: {path}")
    return p


# -- subcommands ----------------------------------------------------------------


def cmd_clean(args) -> int:
    started = _now()
    _require_file(args.input, "input corpus")
    try:
        cfg = StageConfig.from_dict(read_json(args.config)) if args.config else StageConfig()
    except (OSError, ValueError, TypeError) as e:
        raise ConfigurationError(f"bad stage config: {e}") from e
    try:
        reference = HashSet.load(args.ref_hashes) if args.ref_hashes else None
    except HashSetError as e:
        raise ConfigurationError(str(e)) from e
    pipe = Pipeline(cfg, reference, args.workers)
    with atomic_open(args.output) as f:
        write_jsonl(f, pipe.run(read_jsonl(args.input)))
    write_json(args.report, pipe.report.to_dict())
    outputs = {"output": args.output, "report": args.report}
    if args.write_hashes:
        seen = HashSet()
        for rec in read_jsonl(args.output):
            seen.add(md5_digest(rec.text))
        seen.save(args.write_hashes)
        outputs["hashes"] = args.write_hashes
    log.info("clean: %d in, %d out (pass rate %.4f)", pipe.report.input_count, pipe.report.output_count,
             pipe.report.pass_rate)
    write_manifest(args.output, "clean", args, args.seed or 0,
                   {"input": args.input, "ref_hashes": args.ref_hashes}, outputs, started, args.config)
    return EXIT_OK


def cmd_train_tokenizer(args) -> int:
    started = _now()
    _require_file(args.corpus, "corpus")
    t0 = time.time()
    try:
        tok = train_bpe(iter_texts(args.corpus), args.vocab_size, workers=args.workers)
    except TokenizerError as e:
        if "vocab_size" in str(e) or "special" in str(e):
            raise ConfigurationError(str(e)) from e
        raise DataError(str(e)) from e
    tok.save(args.out)
    log.info("tokenizer: %d tokens (%d merges) in %.1fs", len(tok), len(tok.merges), time.time() - t0)
    write_manifest(args.out, "train-tokenizer", args, args.seed or 0, {"corpus": args.corpus},
                   {"tokenizer": args.out}, started)
    return EXIT_OK


def _load_tokenizer(path) -> Tokenizer:
    _require_file(path, "tokenizer")
    try:
        return Tokenizer.load(path)
    except (TokenizerError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: {e}") from e


def cmd_fertility(args) -> int:
    started = _now()
    toks = []
    for spec in args.tokenizer:
        name, _, path = spec.rpartition("=")
        toks.append((name or Path(path).stem, _load_tokenizer(path)))
    lines = []
    for text_path in args.text:
        _require_file(text_path, "text file")
        text = "\n".join(iter_texts(text_path))
        for name, tok in toks:
            try:
                rep = fertility(tok, text, name)
            except ValueError as e:
                raise DataError(f"{text_path}: {e}") from e
            lines.append(json.dumps({**rep.to_dict(), "input": str(text_path)}, ensure_ascii=False))
    body = "".join(line + "\n" for line in lines)
    if args.out:
        with atomic_open(args.out) as f:
            f.write(body)
        write_manifest(args.out, "fertility", args, args.seed or 0,
                       {"tokenizers": ",".join(args.tokenizer), "texts": ",".join(args.text)},
                       {"fertility": args.out}, started)
    else:
        sys.stdout.write(body)
    return EXIT_OK


def cmd_pretokenize(args) -> int:
    started = _now()
    tok = _load_tokenizer(args.tokenizer)
    _require_file(args.corpus, "corpus")
    if args.block_len < 2:
        raise ConfigurationError("--block-len must be >= 2")
    with atomic_open(args.out, "wb") as f:
        n = write_blocks(f, pretokenize_corpus(tok, iter_texts(args.corpus), args.block_len),
                         args.block_len, len(tok))
    log.info("pretokenize: %d blocks of %d tokens", n, args.block_len)
    write_manifest(args.out, "pretokenize", args, args.seed or 0,
                   {"tokenizer": args.tokenizer, "corpus": args.corpus}, {"blocks": args.out}, started)
    return EXIT_OK


RUN_KEYS = {"corpus", "preset", "model", "optimizer", "seed", "batch_size", "steps", "checkpoint",
            "checkpoint_every", "trace", "init_std"}


def load_run_config(path) -> dict:
    try:
        rc = read_json(path)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read run config {path}: {e}") from e
    unknown = set(rc) - RUN_KEYS
    if unknown:
        raise ConfigurationError(f"unknown run config keys: {sorted(unknown)}")
    for key in ("corpus", "checkpoint"):
        if key not in rc:
            raise ConfigurationError(f"run config needs {key!r}")
    base = Path(path).parent
    for key in ("corpus", "checkpoint", "trace"):
        if rc.get(key) is not None and not Path(rc[key]).is_absolute():
            rc[key] = str(base / rc[key])
    return rc


def cmd_train(args) -> int:
    started = _now()
    rc = load_run_config(args.run_config)
    seed = args.seed if args.seed is not None else int(rc.get("seed", 0))
    _require_file(rc["corpus"], "block file")
    try:
        blocks, hdr = read_blocks(rc["corpus"])
    except BlockFileError as e:
        raise DataError(str(e)) from e
    if hdr["block_count"] == 0:
        raise DataError("block file holds no blocks")
    batch_size = int(rc.get("batch_size", 64))

    try:
        preset_lr = None
        if rc.get("preset"):
            base_cfg, preset_lr = load_preset(rc["preset"])
            model_dict = {**base_cfg.to_dict(), "vocab_size": hdr["vocab_size"], **rc.get("model", {})}
        else:
            model_dict = {"vocab_size": hdr["vocab_size"], **rc.get("model", {})}
        cfg = ModelConfig.from_dict(model_dict)
        steps = int(rc.get("steps") or steps_per_epoch(hdr["block_count"], batch_size))
        opt_dict = {"total_steps": steps, **rc.get("optimizer", {})}
        if preset_lr is not None:
            opt_dict.setdefault("peak_lr", preset_lr)
        opt_cfg = OptimizerConfig.from_dict(opt_dict)
    except (ConfigError, ValueError, TypeError) as e:
        raise ConfigurationError(str(e)) from e
    if cfg.vocab_size < hdr["vocab_size"]:
        raise ConfigurationError(f"model vocab {cfg.vocab_size} smaller than block vocab {hdr['vocab_size']}")

    state = None
    ckpt = rc["checkpoint"]
    if args.resume and Path(ckpt).exists():
        try:
            ck_cfg, params, state, opt_cfg_saved, side = load_training_state(ckpt)
        except (CheckpointError, OSError, KeyError) as e:
            raise DataError(f"cannot resume from {ckpt}: {e}") from e
        if ck_cfg != cfg:
            raise ConfigurationError("checkpoint config differs from run config")
        opt_cfg = opt_cfg_saved
        seed = int(side.get("seed", seed))
        log.info("resuming at step %d", state.step)
    else:
        params = init_params(cfg, seed=seed, std=float(rc.get("init_std", 0.02)))

    log.info("train: %d params, %d steps, batch %d", count_parameters(cfg), opt_cfg.total_steps, batch_size)

    def on_step(rec):
        if rec.step % 10 == 0 or rec.step + 1 == opt_cfg.total_steps:
            log.info("step %d lr %.3g loss %.4f gnorm %.3f", rec.step, rec.lr, rec.loss, rec.grad_norm)

    try:
        trace = train(params, blocks, cfg, opt_cfg, batch_size=batch_size, seed=seed, state=state,
                      checkpoint_path=ckpt, checkpoint_every=int(rc.get("checkpoint_every", 0)), on_step=on_step)
    except TrainingAborted as e:
        log.error("training aborted: %s", e)
        return EXIT_DATA
    trace_path = rc.get("trace") or str(ckpt) + ".trace.csv"
    write_trace(trace_path, trace, append=bool(args.resume and state is not None))
    write_manifest(ckpt, "train", args, seed, {"corpus": rc["corpus"]},
                   {"checkpoint": ckpt, "trace": trace_path}, started, args.run_config)
    return EXIT_OK


def cmd_eval(args) -> int:
    started = _now()
    _require_file(args.checkpoint, "checkpoint")
    try:
        cfg, params = load_checkpoint(args.checkpoint)
    except CheckpointError as e:
        raise DataError(str(e)) from e
    tok = _load_tokenizer(args.tokenizer)
    if len(tok) > cfg.vocab_size:
        raise ConfigurationError(f"tokenizer has {len(tok)} tokens but model vocab is {cfg.vocab_size}")
    try:
        task = TaskConfig.load(args.task_config)
    except (OSError, json.JSONDecodeError, TaskConfigError, TypeError) as e:
        raise ConfigurationError(f"bad task config: {e}") from e
    _require_file(args.dataset, "dataset")
    model = NumpyLM(params, cfg, name=Path(args.checkpoint).stem)
    if task.kind == "mc":
        report = evaluate_mc(model, tok, read_mc_jsonl(args.dataset), task, model.name, args.workers)
    else:
        report = evaluate_classification(model, tok, read_cls_jsonl(args.dataset), task.labels, task,
                                         model.name, args.workers)
    report.param_count = count_parameters(cfg)
    write_json(args.out, report.to_dict())
    log.info("eval %s: accuracy %.4f on %d items (baseline %.4f, %d skipped)", task.name, report.accuracy,
             report.n_items, report.random_baseline, len(report.skipped))
    write_manifest(args.out, "eval", args, args.seed or 0,
                   {"checkpoint": args.checkpoint, "tokenizer": args.tokenizer, "dataset": args.dataset},
                   {"report": args.out}, started, args.task_config)
    return EXIT_OK


def cmd_report(args) -> int:
    started = _now()
    entries = []
    for path in args.eval:
        _require_file(path, "eval report")
        try:
            rep = EvalReport.from_dict(read_json(path))
        except (KeyError, ValueError, TypeError) as e:
            raise DataError(f"{path}: {e}") from e
        if rep.param_count is None:
            raise DataError(f"{path}: report lacks param_count")
        entries.append((rep.param_count, rep))
    with atomic_open(args.out) as f:
        f.write(scaling_report(entries))
    write_manifest(args.out, "report", args, args.seed or 0, {"evals": ",".join(args.eval)},
                   {"report": args.out}, started)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for all randomness (default 0)")
    common.add_argument("--workers", type=int, default=default_workers(),
                        help="worker processes for corpus/eval stages (env LRLM_WORKERS)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lrlm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lrlm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", parents=[common], help="run the cleaning + dedup pipeline")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--config")
    p.add_argument("--ref-hashes")
    p.add_argument("--write-hashes", help="also write digests of the surviving texts")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("train-tokenizer", parents=[common], help="train a byte-level BPE tokenizer")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-size", type=int, default=DEFAULT_VOCAB_SIZE)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_tokenizer)

    p = sub.add_parser("fertility", parents=[common], help="tokens per whitespace word")
    p.add_argument("--tokenizer", action="append", required=True, help="PATH or NAME=PATH; repeatable")
    p.add_argument("--text", action="append", required=True, help="text or JSONL file; repeatable")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fertility)

    p = sub.add_parser("pretokenize", parents=[common], help="pack a corpus into fixed-length blocks")
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--block-len", type=int, default=1024)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretokenize)

    p = sub.add_parser("train", parents=[common], help="train a model from a run config")
    p.add_argument("--run-config", required=True)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="zero-shot evaluation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--task-config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="scaling CSV from eval reports")
    p.add_argument("--eval", action="append", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except ConfigurationError as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except DataError as e:
        log.error("data error: %s", e)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
