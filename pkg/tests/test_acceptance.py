"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The desk-scale experiments train a small configuration on a deterministic
synthetic Hungarian corpus (~20k train / ~1k dev sentences) in a few minutes;
the tolerances below are the contract, not calibration knobs.
"""

import time

import numpy as np
import pytest

from accentor.baselines import build_dictionary, copy_restore, dictionary_restore
from accentor.kernel import (
    BatchNormState,
    ConvSpec,
    Tensor,
    batchnorm_channel,
    batchnorm_channel_backward,
    conv1d_acausal,
    conv1d_acausal_backward,
    softmax_cross_entropy,
)
from accentor.lang import builtin_table, dediacritize
from accentor.metrics import analyze_ambiguity, confusion, score_sequences
from accentor.model import AtcnConfig, AtcnModel, CharVocab, build_vocab
from accentor.modelfile import (
    BadMagicError,
    TruncatedBlobError,
    VersionMismatchError,
    load_model,
    save_model,
)
from accentor.trainer import TrainConfig, evaluate_model, model_restorer, train_model
from fdcheck import central_diff, rel_error
from naive_metrics import naive_scores
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
from probes import make_positive_probe_model, measured_receptive_radius
from synthcorpus import generate_corpus, generate_toy_corpus

HU = builtin_table("hu")


def criterion(name: str, ok: bool, detail: str = ""):
    print(f"[acceptance] {'PASS' if ok else 'FAIL'} | {name} | {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# desk-scale fixture: corpus -> prepare -> train (shared by several criteria)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    from accentor.cli import main
    root = tmp_path_factory.mktemp("desk")
    raw = root / "raw.txt"
    raw.write_text("\n".join(generate_corpus(CORPUS_SENTENCES, seed=CORPUS_SEED)) + "\n",
                   encoding="utf-8")
    train_path, dev_path = root / "train.txt", root / "dev.txt"
    code = main(["prepare", "--in", str(raw), "--out-train", str(train_path),
                 "--out-dev", str(dev_path), "--dev-shards", DEV_SHARDS,
                 "--report", str(root / "prepare.tsv")])
    assert code == 0
    train_lines = train_path.read_text(encoding="utf-8").splitlines()
    dev_lines = dev_path.read_text(encoding="utf-8").splitlines()
    assert len(train_lines) > 15000 and len(dev_lines) >= 900

    vocab = build_vocab(train_lines, HU, min_count=10)
    model = AtcnModel(DESK_ARCH, vocab, seed=0)
    model_path = root / "desk.atcn"
    train_model(model, train_lines, dev_lines, TrainConfig(**DESK_TRAIN),
                out_model=model_path)
    return {"model": model, "model_path": model_path,
            "train": train_lines, "dev": dev_lines, "root": root}


# ---------------------------------------------------------------------------
# criterion: gradient correctness (< 1 minute, >= 20 seeds)
# ---------------------------------------------------------------------------

def test_gradient_correctness():
    started = time.time()
    worst_op = 0.0
    for seed in range(20):
        rng = np.random.default_rng([seed, 0xfd])
        # convolution
        c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        k = int(rng.choice([1, 3, 5]))
        d = int(rng.choice([1, 2, 4]))
        n = int(rng.integers(1, 9))
        spec = ConvSpec(k, d, c_in, c_out)
        x = rng.normal(size=(1, c_in, n))
        w = Tensor(rng.normal(size=(c_out, c_in, k)))
        b = Tensor(rng.normal(size=c_out))
        gy = rng.normal(size=(1, c_out, n))

        def conv_loss():
            return float((conv1d_acausal(Tensor(x), spec, w, b).data * gy).sum())

        gx, gw, gb = conv1d_acausal_backward(gy, x, spec, w)
        for got, ref in ((gx, x), (gw, w.data), (gb, b.data)):
            worst_op = max(worst_op, rel_error(got, central_diff(conv_loss, ref)))

        # batch norm (train mode)
        xb = rng.normal(size=(2, 3, 4))
        gyb = rng.normal(size=(2, 3, 4))
        state = BatchNormState(3, dtype=np.float64)
        state.gamma.data[:] = rng.normal(size=3)
        state.beta.data[:] = rng.normal(size=3)

        def bn_loss():
            s = BatchNormState(3, dtype=np.float64)
            s.gamma.data[:] = state.gamma.data
            s.beta.data[:] = state.beta.data
            out, _ = batchnorm_channel(Tensor(xb), s, train=True)
            return float((out.data * gyb).sum())

        out, ctx = batchnorm_channel(Tensor(xb), state, train=True)
        gxb, ggamma, gbeta = batchnorm_channel_backward(gyb, ctx, state)
        worst_op = max(worst_op, rel_error(gxb, central_diff(bn_loss, xb)))
        worst_op = max(worst_op, rel_error(ggamma, central_diff(bn_loss, state.gamma.data)))
        worst_op = max(worst_op, rel_error(gbeta, central_diff(bn_loss, state.beta.data)))

        # softmax cross entropy
        logits = rng.normal(size=(1, 5, 6))
        targets = rng.integers(0, 5, size=(1, 6))
        mask = np.ones((1, 6), dtype=bool)

        def ce_loss():
            return softmax_cross_entropy(Tensor(logits), targets, mask)[0]

        _, grad = softmax_cross_entropy(Tensor(logits), targets, mask)
        worst_op = max(worst_op, rel_error(grad, central_diff(ce_loss, logits)))

    # end to end on the micro configuration, sampled coordinates per group
    micro = AtcnConfig(embedding_dim=4, channels=8, dilations=(1, 2),
                       convs_per_block=2, kernel_size=3, dropout_rate=0.2)
    vocab = CharVocab("abcde")
    worst_e2e = 0.0
    for seed in range(20):
        rng = np.random.default_rng([seed, 0xe2e])
        model = AtcnModel(micro, vocab, dtype=np.float64, seed=seed)
        ids = rng.integers(2, vocab.size, size=(2, 9)).astype(np.int32)
        targets = rng.integers(2, vocab.size, size=(2, 9))
        mask = np.ones((2, 9), dtype=bool)

        def loss_value():
            logits, _ = model.forward(ids, mask, train=True, rng_seed=seed)
            return softmax_cross_entropy(logits, targets, mask)[0]

        logits, tape = model.forward(ids, mask, train=True, rng_seed=seed)
        _, grad_logits = softmax_cross_entropy(logits, targets, mask)
        grads = model.backward(tape, grad_logits)

        def fd_at(flat, idx, h):
            orig = flat[idx]
            flat[idx] = orig + h
            f_pos = loss_value()
            flat[idx] = orig - h
            f_neg = loss_value()
            flat[idx] = orig
            return (f_pos - f_neg) / (2 * h)

        for name, param in model.params.items():
            flat = param.data.reshape(-1)
            for idx in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                analytic = grads[name].reshape(-1)[idx]
                err = rel_error(analytic, fd_at(flat, idx, 1e-5), floor=1e-6)
                if err >= 1e-3:
                    # a step straddling a ReLU kink corrupts the FD value;
                    # a genuine gradient bug persists at smaller steps
                    err = rel_error(analytic, fd_at(flat, idx, 1e-6), floor=1e-6)
                worst_e2e = max(worst_e2e, err)
    elapsed = time.time() - started
    criterion("gradient correctness",
              worst_op < 1e-4 and worst_e2e < 1e-3 and elapsed < 60,
              f"ops max rel err {worst_op:.2e}, end-to-end {worst_e2e:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion: receptive field of the deployed configuration
# ---------------------------------------------------------------------------

def test_receptive_field_default_config():
    started = time.time()
    cfg = AtcnConfig()            # E=50, C=250, k=5, b=2, dilations 1,2,4,8
    model = make_positive_probe_model(cfg, CharVocab("abcde"), seed=0)
    radius = measured_receptive_radius(model, probe_span=66)
    elapsed = time.time() - started
    criterion("receptive field",
              radius == 60 and cfg.receptive_field == 121 and elapsed < 60,
              f"measured radius {radius}, field {cfg.receptive_field}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion: shape/length invariants and metric recount
# ---------------------------------------------------------------------------

def test_shape_and_metric_invariants():
    rng = np.random.default_rng(0x5a9e)
    vocab = build_vocab(["aákörtűz .!x"], HU, min_count=1)
    model = AtcnModel(AtcnConfig(embedding_dim=4, channels=8, dilations=(1, 2),
                                 kernel_size=3), vocab, seed=0)
    alphabet = list("aákörtűz .!x€")   # includes an unknown character
    texts = ["".join(rng.choice(alphabet, size=rng.integers(1, 601)))
             for _ in range(1000)]
    restored = []
    for i in range(0, len(texts), 100):
        restored.extend(model.restore_batch(texts[i:i + 100]))
    length_ok = all(len(a) == len(b) for a, b in zip(texts, restored))

    mismatches = 0
    metric_alphabet = list("aábeékoóöőrtuúüűz .!4")
    for _ in range(1000):
        refs, hyps = [], []
        for _ in range(int(rng.integers(1, 4))):
            ref = "".join(rng.choice(metric_alphabet, size=rng.integers(1, 14)))
            hyp = "".join(ch if rng.random() < 0.8 else str(rng.choice(metric_alphabet))
                          for ch in ref)
            refs.append(ref)
            hyps.append(hyp)
        report = score_sequences(refs, hyps, HU)
        naive = naive_scores(refs, hyps, HU)
        if not (report.character_accuracy == naive["character"]
                and report.important_char_accuracy == naive["important"]
                and report.alpha_word_accuracy == naive["alpha_word"]
                and report.sequence_accuracy == naive["sequence"]):
            mismatches += 1
    criterion("shape/length invariants",
              length_ok and mismatches == 0,
              f"1000 restore lengths ok={length_ok}, metric recount mismatches={mismatches}")


# ---------------------------------------------------------------------------
# criterion: overfit on the 50-sentence toy corpus
# ---------------------------------------------------------------------------

def test_overfit_toy_corpus():
    started = time.time()
    toy = generate_toy_corpus(TOY_SENTENCES, seed=TOY_SEED)
    model = AtcnModel(TOY_ARCH, build_vocab(toy, HU, min_count=1), seed=1)
    train_model(model, toy, [], TrainConfig(**TOY_TRAIN))
    report = evaluate_model(model_restorer(model), toy, HU, strip_mode="full")
    minutes = (time.time() - started) / 60
    criterion("overfit toy corpus",
              report.character_accuracy >= 0.995 and minutes < 30,
              f"train char accuracy {report.character_accuracy:.4f} in {minutes:.1f} min")


# ---------------------------------------------------------------------------
# desk-scale criteria
# ---------------------------------------------------------------------------

def test_desk_scale_ordering(desk):
    model, train_lines, dev_lines = desk["model"], desk["train"], desk["dev"]
    dictionary = build_dictionary(train_lines, HU)
    stripped = [dediacritize(l, HU) for l in dev_lines]
    copy_rep = score_sequences(dev_lines, [copy_restore(s) for s in stripped], HU)
    dict_rep = score_sequences(dev_lines,
                               [dictionary_restore(s, dictionary, HU) for s in stripped], HU)
    model_rep = score_sequences(dev_lines, model_restorer(model)(stripped), HU)
    ordering = (copy_rep.alpha_word_accuracy < dict_rep.alpha_word_accuracy
                < model_rep.alpha_word_accuracy)
    criterion("desk-scale ordering",
              ordering and model_rep.important_char_accuracy >= 0.97,
              f"alpha-word copy {copy_rep.alpha_word_accuracy:.4f} < "
              f"dict {dict_rep.alpha_word_accuracy:.4f} < "
              f"model {model_rep.alpha_word_accuracy:.4f}; "
              f"important {model_rep.important_char_accuracy:.4f}")


def test_augmentation_robustness(desk):
    model, dev_lines = desk["model"], desk["dev"]
    full = evaluate_model(model_restorer(model), dev_lines, HU, strip_mode="full")
    partial = evaluate_model(model_restorer(model), dev_lines, HU,
                             strip_mode="augmented", augment_p=0.8, seed=5)
    gap = abs(full.important_char_accuracy - partial.important_char_accuracy)
    criterion("augmentation robustness", gap < 0.01,
              f"important-char full {full.important_char_accuracy:.4f} vs "
              f"p=0.8 {partial.important_char_accuracy:.4f} (gap {gap:.4f})")


def test_confusion_structure(desk):
    model, dev_lines = desk["model"], desk["dev"]
    hyps = model_restorer(model)([dediacritize(l, HU) for l in dev_lines])
    matrix = confusion(dev_lines, hyps, HU)
    errors = matrix.in_family_errors + matrix.cross_family_errors
    share = matrix.in_family_errors / errors if errors else 1.0
    criterion("confusion structure", share >= 0.95,
              f"{matrix.in_family_errors}/{errors} errors in-family "
              f"({share:.3f}), weighted F1 {matrix.weighted_f1():.4f}")


# ---------------------------------------------------------------------------
# criterion: serialization
# ---------------------------------------------------------------------------

def test_serialization(desk, tmp_path):
    model = desk["model"]
    path = tmp_path / "desk_copy.atcn"
    save_model(model, path)
    loaded = load_model(path)
    rng = np.random.default_rng(17)
    bit_exact = True
    for _ in range(10):
        n = int(rng.integers(1, 80))
        batch = int(rng.integers(1, 5))
        ids = rng.integers(0, model.vocab.size, size=(batch, n)).astype(np.int32)
        mask = np.ones((batch, n), dtype=bool)
        if not np.array_equal(model.forward(ids, mask).data,
                              loaded.forward(ids, mask).data):
            bit_exact = False

    raw = path.read_bytes()
    corrupted_ok = True
    bad_magic = tmp_path / "bad_magic.atcn"
    bad_magic.write_bytes(b"XXXX" + raw[4:])
    try:
        load_model(bad_magic)
        corrupted_ok = False
    except BadMagicError:
        pass
    bad_version = tmp_path / "bad_version.atcn"
    bad_version.write_bytes(raw[:4] + b"\x63\x00\x00\x00" + raw[8:])
    try:
        load_model(bad_version)
        corrupted_ok = False
    except VersionMismatchError:
        pass
    truncated = tmp_path / "truncated.atcn"
    truncated.write_bytes(raw[:-40])
    try:
        load_model(truncated)
        corrupted_ok = False
    except TruncatedBlobError:
        pass

    # deployment-scale artifact: default architecture with a Hungarian-scale vocab
    hu_chars = ([chr(c) for c in range(0x20, 0x7F)]
                + list("áéíóöőúüűÁÉÍÓÖŐÚÜŰ"))
    big = AtcnModel(AtcnConfig(), CharVocab(hu_chars), seed=0)
    big_path = tmp_path / "hu_full.atcn"
    save_model(big, big_path)
    size_mb = big_path.stat().st_size / 1e6
    criterion("serialization",
              bit_exact and corrupted_ok and 5.0 <= size_mb <= 15.0,
              f"round-trip bit-exact={bit_exact}, corruption errors ok={corrupted_ok}, "
              f"full-scale file {size_mb:.2f} MB")


# ---------------------------------------------------------------------------
# criterion: ambiguity analyzer exactness
# ---------------------------------------------------------------------------

def test_ambiguity_analyzer_exact():
    # known inventory: bases kor (3 forms), var (2 forms), kek, eg, tuz, viz (1 form)
    lines = [
        "kór kor kör",          # base kor: 3 forms, 3 occurrences
        "vár var",              # base var: 2 forms, 2 occurrences
        "kék kék ég",           # kek: 1 form x2, eg: 1 form x1
        "tűz víz",              # tuz x1, viz x1
        "kör vár kék",          # kor -> 4 occ, var -> 3 occ, kek -> 3 occ
    ]
    stats = analyze_ambiguity(lines, HU)
    expected = dict(ambiguous_bases=2, ambiguous_words=7,
                    unambiguous_bases=4, unambiguous_words=6)
    got = dict(ambiguous_bases=stats.ambiguous_bases,
               ambiguous_words=stats.ambiguous_words,
               unambiguous_bases=stats.unambiguous_bases,
               unambiguous_words=stats.unambiguous_words)
    criterion("ambiguity analyzer", got == expected, f"{got} == {expected}")
    assert stats.total_words == 13
    assert stats.base_ratio == pytest.approx(2.0)
    assert stats.word_ratio == pytest.approx(6 / 7)
