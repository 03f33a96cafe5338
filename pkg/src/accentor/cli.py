"""Command-line surface for the whole pipeline.

Subcommands: prepare, train, restore, evaluate, confusion, ambiguity,
sample-errors, dict-build, dict-restore, export-web.  Every command is
deterministic given its flags and --seed.  Exit codes: 0 ok, 1 usage,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import figures, modelfile, trainer
from .baselines import DiacriticDictionary, build_dictionary, copy_restore, dictionary_restore
from .lang import available_languages, builtin_table, dediacritize
from .metrics import analyze_ambiguity, confusion, sample_errors, score_sequences
from .model import AtcnConfig, AtcnModel, build_vocab

MODEL_ENV_VAR = "ACCENTOR_MODEL"


class CliError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _write_rows(rows, path=None):
    text = "".join(f"{key}\t{value}\n" for key, value in rows)
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_lines(path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc


def _model_path(args) -> str:
    path = getattr(args, "model", None) or os.environ.get(MODEL_ENV_VAR)
    if not path:
        raise CliError(f"no model given: pass --model or set {MODEL_ENV_VAR}")
    return path


def _restorer_from_args(args, table):
    """--baseline copy|dict|model -> a list-of-lines restoration callable."""
    baseline = getattr(args, "baseline", "model")
    if baseline == "copy":
        return trainer.line_restorer(copy_restore)
    if baseline == "dict":
        if not args.dict:
            raise CliError("--baseline dict requires --dict")
        dictionary = DiacriticDictionary.load(args.dict)
        return trainer.line_restorer(lambda s: dictionary_restore(s, dictionary, table))
    model = modelfile.load_model(_model_path(args))
    return trainer.model_restorer(model, constrained=getattr(args, "constrained", False))


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------

def cmd_prepare(args) -> int:
    table = builtin_table(args.lang)
    in_path = Path(args.input)
    if not in_path.is_file():
        raise CliError(f"input file not found: {in_path}")
    if in_path.stat().st_size == 0:
        raise CliError(f"input file is empty: {in_path}")
    dev_shards = corpus_mod.parse_shard_set(args.dev_shards)

    stats = None
    train_lines: list[str] = []
    dev_lines: list[str] = []
    with open(in_path, "rb") as fh:
        for line, stats in corpus_mod.clean_corpus(
                fh, table, max_len=args.max_len,
                min_diacritic_ratio=args.min_diacritic_ratio):
            if line is None:
                continue
            if corpus_mod.shard_of(line) in dev_shards:
                dev_lines.append(line)
            else:
                train_lines.append(line)

    for path, lines in ((args.out_train, train_lines), (args.out_dev, dev_lines)):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")

    rows = [("input", str(in_path)), ("language", args.lang)]
    rows += [(f"clean_{k}", v) for k, v in stats.to_rows()]
    for name, lines in (("train", train_lines), ("dev", dev_lines)):
        seqs, avg, chars = corpus_mod.corpus_stats(lines)
        rows += [(f"{name}_sequences", seqs),
                 (f"{name}_avg_seq_len", round(avg, 2)),
                 (f"{name}_characters", chars)]
    _write_rows(rows, args.report)
    if args.figures:
        figures.save_length_histogram((len(l) for l in train_lines),
                                      Path(args.figures) / "lengths.png")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_train_config(args) -> tuple[AtcnConfig, trainer.TrainConfig, int]:
    model_cfg = {}
    train_cfg = {}
    min_count = 10
    if args.config:
        blob = json.loads(Path(args.config).read_text(encoding="utf-8"))
        model_cfg = blob.get("model", {})
        train_cfg = blob.get("train", {})
        min_count = blob.get("vocab_min_count", 10)
    if args.seed is not None:
        train_cfg["seed"] = args.seed
    if args.epochs is not None:
        train_cfg["epochs"] = args.epochs
    return AtcnConfig.from_dict({**AtcnConfig().to_dict(), **model_cfg}), \
        trainer.TrainConfig.from_dict(train_cfg), min_count


def cmd_train(args) -> int:
    arch, cfg, min_count = _load_train_config(args)
    dataset = corpus_mod.LineIndex(args.train)
    if len(dataset) == 0:
        raise CliError(f"training file is empty: {args.train}")
    dev_lines = _read_lines(args.dev) if args.dev else []
    table = builtin_table(arch.language)

    if args.resume:
        ckpt, _ = trainer.checkpoint_paths(args.out_model)
        model = modelfile.load_model(ckpt)
    else:
        vocab = build_vocab((dataset[i] for i in range(len(dataset))), table,
                            min_count=min_count)
        model = AtcnModel(arch, vocab, seed=cfg.seed)

    records = trainer.train_model(model, dataset, dev_lines, cfg,
                                  out_model=args.out_model, resume=args.resume,
                                  log_file=args.log)
    if args.figures and records:
        figures.save_training_curves(records, Path(args.figures) / "training.png")
    last = records[-1] if records else {}
    sys.stderr.write(f"trained {len(records)} epochs; final loss "
                     f"{last.get('train_loss', float('nan')):.4f}; model at {args.out_model}\n")
    return 0


# ---------------------------------------------------------------------------
# restore / dict-restore
# ---------------------------------------------------------------------------

def _stream_lines(in_path):
    """Yield (line_text, line_start_offset) from a file or stdin, as bytes."""
    fh = open(in_path, "rb") if in_path else sys.stdin.buffer
    offset = 0
    try:
        for raw in fh:
            yield raw, offset
            offset += len(raw)
    finally:
        if in_path:
            fh.close()


def _decode_line(raw: bytes, offset: int) -> tuple[str, str]:
    eol = ""
    body = raw
    if body.endswith(b"\n"):
        body = body[:-1]
        eol = "\n"
        if body.endswith(b"\r"):
            body = body[:-1]
            eol = "\r\n"
    try:
        return body.decode("utf-8"), eol
    except UnicodeDecodeError as exc:
        raise CliError(
            f"invalid UTF-8 at byte offset {offset + exc.start}: {exc.reason}") from exc


def _run_line_filter(args, restore_one) -> int:
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for raw, offset in _stream_lines(args.input):
            line, eol = _decode_line(raw, offset)
            out.write(restore_one(line) + (eol or "\n"))
            out.flush()
    finally:
        if args.output:
            out.close()
    return 0


def cmd_restore(args) -> int:
    model = modelfile.load_model(_model_path(args))
    return _run_line_filter(args, lambda line: model.restore(line, args.constrained))


def cmd_dict_restore(args) -> int:
    table = builtin_table(args.lang)
    dictionary = DiacriticDictionary.load(args.dict)
    return _run_line_filter(args, lambda line: dictionary_restore(line, dictionary, table))


# ---------------------------------------------------------------------------
# evaluate / confusion / sample-errors
# ---------------------------------------------------------------------------

def _gold_and_hyps(args, table):
    gold = _read_lines(args.gold)
    if not gold:
        raise CliError(f"gold file is empty: {args.gold}")
    restore_fn = _restorer_from_args(args, table)
    if args.strip == "full":
        inputs = [dediacritize(l, table) for l in gold]
    else:
        inputs = [corpus_mod.augment(l, table, args.augment_p, rng=[args.seed, i, 0xe7a1])
                  for i, l in enumerate(gold)]
    return gold, restore_fn(inputs)


def cmd_evaluate(args) -> int:
    table = builtin_table(args.lang)
    gold, hyps = _gold_and_hyps(args, table)
    report = score_sequences(gold, hyps, table)
    rows = [("gold", args.gold), ("system", args.baseline), ("strip", args.strip)]
    rows += report.to_rows()
    _write_rows(rows, args.report)
    if args.figures:
        figures.save_metrics_bars({args.baseline: report}, Path(args.figures) / "metrics.png")
    return 0


def cmd_confusion(args) -> int:
    table = builtin_table(args.lang)
    gold, hyps = _gold_and_hyps(args, table)
    matrix = confusion(gold, hyps, table)
    _write_rows(matrix.to_rows(), args.report)
    sys.stderr.write(matrix.format_table() + "\n")
    if args.figures:
        figures.save_confusion_heatmaps(matrix, Path(args.figures) / "confusion.png")
    return 0


def cmd_sample_errors(args) -> int:
    table = builtin_table(args.lang)
    gold, hyps = _gold_and_hyps(args, table)
    samples = sample_errors(gold, hyps, k=args.k, rng_seed=args.seed)
    if len(samples) < args.k:
        sys.stderr.write(f"only {len(samples)} errors available (asked for {args.k})\n")
    rows = []
    for s in samples:
        rows.append((f"{s.line_index}:{s.position}",
                     f"{s.ref_char}\t{s.hyp_char}\t{s.context}"))
    _write_rows(rows, args.report)
    return 0


# ---------------------------------------------------------------------------
# ambiguity / dict-build / export-web
# ---------------------------------------------------------------------------

def cmd_ambiguity(args) -> int:
    table = builtin_table(args.lang)
    gold = _read_lines(args.gold)
    stats = analyze_ambiguity(gold, table)
    _write_rows(stats.to_rows(), args.report)
    if args.figures:
        figures.save_ambiguity_bars(stats, Path(args.figures) / "ambiguity.png")
    return 0


def cmd_dict_build(args) -> int:
    table = builtin_table(args.lang)
    gold = _read_lines(args.gold)
    if not gold:
        raise CliError(f"gold file is empty: {args.gold}")
    dictionary = build_dictionary(gold, table)
    dictionary.save(args.out)
    sys.stderr.write(f"{len(dictionary)} bases -> {args.out}\n")
    return 0


def cmd_export_web(args) -> int:
    model_path = Path(_model_path(args))
    model = modelfile.load_model(model_path)   # validates the file
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    file_name = f"{args.code}.atcn"
    data = model_path.read_bytes()
    (out_dir / file_name).write_bytes(data)

    manifest_path = out_dir / "manifest.json"
    manifest = {"languages": []}
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    entry = {
        "code": args.code,
        "name": args.name or args.code,
        "file": file_name,
        "bytes": len(data),
        "sha256": hashlib.sha256(data).hexdigest(),
    }
    manifest["languages"] = sorted(
        [e for e in manifest.get("languages", []) if e.get("code") != args.code] + [entry],
        key=lambda e: e["code"])
    manifest_path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n",
                             encoding="utf-8")
    sys.stderr.write(f"exported {model.param_count()} parameters "
                     f"({len(data)} bytes) to {out_dir / file_name}\n")
    return 0


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------

def _add_common_eval_args(p):
    p.add_argument("--gold", required=True, help="gold (diacritized) text, one line per sequence")
    p.add_argument("--lang", default="hu", choices=available_languages())
    p.add_argument("--baseline", default="model", choices=["copy", "dict", "model"])
    p.add_argument("--model", help=f"model file (default ${MODEL_ENV_VAR})")
    p.add_argument("--dict", help="dictionary file for --baseline dict")
    p.add_argument("--constrained", action="store_true",
                   help="restrict model decoding to diacritic variants of the input")
    p.add_argument("--strip", default="full", choices=["full", "augmented"])
    p.add_argument("--augment-p", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the TSV report here instead of stdout")
    p.add_argument("--figures", help="directory for rendered figures")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="accentor", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="clean a corpus and split train/dev")
    p.add_argument("--lang", default="hu", choices=available_languages())
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-dev", required=True)
    p.add_argument("--max-len", type=int, default=500)
    p.add_argument("--min-diacritic-ratio", type=float, default=0.05)
    p.add_argument("--dev-shards", default="50",
                   help='dev shard set out of 1000: "N" for the first N, or "3,7,10-19"')
    p.add_argument("--report")
    p.add_argument("--figures")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="JSON file with model/train sections")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out-model", required=True)
    p.add_argument("--log", help="JSONL training log path")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--figures")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("restore", help="restore diacritics on text lines")
    p.add_argument("--model", help=f"model file (default ${MODEL_ENV_VAR})")
    p.add_argument("--constrained", action="store_true")
    p.add_argument("--in", dest="input")
    p.add_argument("--out", dest="output")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("evaluate", help="score a restorer against gold text")
    _add_common_eval_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("confusion", help="important-character confusion matrix")
    _add_common_eval_args(p)
    p.set_defaults(func=cmd_confusion)

    p = sub.add_parser("sample-errors", help="uniform sample of restoration errors")
    _add_common_eval_args(p)
    p.add_argument("-k", type=int, default=500)
    p.set_defaults(func=cmd_sample_errors)

    p = sub.add_parser("ambiguity", help="word ambiguity statistics of a corpus")
    p.add_argument("--gold", required=True)
    p.add_argument("--lang", default="hu", choices=available_languages())
    p.add_argument("--report")
    p.add_argument("--figures")
    p.set_defaults(func=cmd_ambiguity)

    p = sub.add_parser("dict-build", help="build the dictionary baseline")
    p.add_argument("--gold", required=True)
    p.add_argument("--lang", default="hu", choices=available_languages())
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dict_build)

    p = sub.add_parser("dict-restore", help="restore with the dictionary baseline")
    p.add_argument("--dict", required=True)
    p.add_argument("--lang", default="hu", choices=available_languages())
    p.add_argument("--in", dest="input")
    p.add_argument("--out", dest="output")
    p.set_defaults(func=cmd_dict_restore)

    p = sub.add_parser("export-web", help="export a model plus manifest for the web demo")
    p.add_argument("--model", help=f"model file (default ${MODEL_ENV_VAR})")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--code", required=True, help="language code for the manifest entry")
    p.add_argument("--name", help="display name")
    p.set_defaults(func=cmd_export_web)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (CliError, modelfile.ModelFormatError, trainer.TrainingDiverged,
            OSError, ValueError, KeyError) as exc:
        sys.stderr.write(f"accentor: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
