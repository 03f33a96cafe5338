#!/usr/bin/env python3
"""Build the committed demo/test assets.

Trains the toy and desk models on the deterministic synthetic corpus and
freezes:
  tests/data/toy_hu.atcn + golden_input.txt/golden_output.txt  (CLI snapshot)
  frontend/models/hu.atcn + manifest.json                      (web demo model)
  frontend/fixtures/parity.json                                 (page == CLI goldens)

Deterministic given the seeds in tests/desksetup.py; rerun only when the
model, kernel or corpus generator changes.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from accentor.cli import main as cli_main
from accentor.lang import builtin_table, dediacritize
from accentor.model import AtcnModel, build_vocab
from accentor.trainer import TrainConfig, evaluate_model, model_restorer, train_model
from desksetup import (
    CORPUS_SEED,
    CORPUS_SENTENCES,
    DESK_ARCH,
    DESK_TRAIN,
    DEV_SHARDS,
    TOY_ARCH,
    TOY_SEED,
    TOY_SENTENCES,
    TOY_TRAIN,
)
from synthcorpus import generate_corpus, generate_toy_corpus

HU = builtin_table("hu")

PARITY_INPUTS = [
    "az oszi szel fuj es a haz elott all a vonat",
    "a sulyos kor terjed a faluban",
    "Agnes gyakran ul a piacon es kavet iszik",
]

def build_toy(data_dir: Path):
    toy = generate_toy_corpus(TOY_SENTENCES, seed=TOY_SEED)
    model = AtcnModel(TOY_ARCH, build_vocab(toy, HU, min_count=1), seed=1)
    train_model(model, toy, [], TrainConfig(**TOY_TRAIN),
                out_model=data_dir / "toy_hu.atcn")
    report = evaluate_model(model_restorer(model), toy, HU, strip_mode="full")
    print(f"toy model: train char accuracy {report.character_accuracy:.4f}")

    # memorized sentences, fully stripped: the snapshot shows real restoration
    golden_input = "".join(dediacritize(line, HU) + "\n" for line in toy[:4])
    (data_dir / "golden_input.txt").write_text(golden_input, encoding="utf-8")
    code = cli_main(["restore", "--model", str(data_dir / "toy_hu.atcn"),
                     "--in", str(data_dir / "golden_input.txt"),
                     "--out", str(data_dir / "golden_output.txt")])
    assert code == 0
    print("golden output:", (data_dir / "golden_output.txt").read_text(encoding="utf-8").rstrip())


def build_desk(work: Path, frontend: Path):
    raw = work / "raw.txt"
    raw.write_text("\n".join(generate_corpus(CORPUS_SENTENCES, seed=CORPUS_SEED)) + "\n",
                   encoding="utf-8")
    assert cli_main(["prepare", "--in", str(raw),
                     "--out-train", str(work / "train.txt"),
                     "--out-dev", str(work / "dev.txt"),
                     "--dev-shards", DEV_SHARDS,
                     "--report", str(work / "prepare.tsv")]) == 0
    train_lines = (work / "train.txt").read_text(encoding="utf-8").splitlines()
    dev_lines = (work / "dev.txt").read_text(encoding="utf-8").splitlines()

    vocab = build_vocab(train_lines, HU, min_count=10)
    model = AtcnModel(DESK_ARCH, vocab, seed=0)
    desk_path = work / "desk_hu.atcn"
    train_model(model, train_lines, dev_lines, TrainConfig(**DESK_TRAIN),
                out_model=desk_path)
    report = evaluate_model(model_restorer(model), dev_lines, HU, strip_mode="full")
    print(f"desk model: dev {report.summary()}")

    assert cli_main(["export-web", "--model", str(desk_path),
                     "--out-dir", str(frontend / "models"),
                     "--code", "hu", "--name", "Hungarian"]) == 0

    parity_in = work / "parity_in.txt"
    parity_in.write_text("\n".join(PARITY_INPUTS) + "\n", encoding="utf-8")
    parity_out = work / "parity_out.txt"
    assert cli_main(["restore", "--model", str(frontend / "models" / "hu.atcn"),
                     "--in", str(parity_in), "--out", str(parity_out)]) == 0
    outputs = parity_out.read_text(encoding="utf-8").splitlines()
    cases = [{"input": i, "expected": o} for i, o in zip(PARITY_INPUTS, outputs)]
    fixtures = frontend / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)
    (fixtures / "parity.json").write_text(
        json.dumps({"model": "../models/hu.atcn", "cases": cases},
                   ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    for case in cases:
        print("parity:", case["input"], "->", case["expected"])


def main():
    data_dir = ROOT / "tests" / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    work = ROOT / "build" / "assets"
    work.mkdir(parents=True, exist_ok=True)
    build_toy(data_dir)
    build_desk(work, ROOT / "frontend")


if __name__ == "__main__":
    main()
