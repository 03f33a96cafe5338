"""The acausal convolutional character labeler: vocabulary, architecture, decoding.

The network is a fixed chain (embedding -> scalar-copy upsampler -> residual
blocks of dilated acausal convolutions -> per-position classifier), so the
backward pass is a hand-written mirror of the forward walk over a recorded
tape rather than a general autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernel
from .kernel import BatchNormState, ConvSpec, Tensor
from .lang import DiacriticTable, builtin_table


class CharVocab:
    """Character/id bijection with reserved PAD=0 and UNK=1 ids."""

    PAD = 0
    UNK = 1

    def __init__(self, chars: Iterable[str]):
        self.chars: tuple[str, ...] = tuple(sorted(set(chars)))
        for ch in self.chars:
            if len(ch) != 1:
                raise ValueError(f"vocabulary entries must be single characters, got {ch!r}")
        self._to_id = {ch: i + 2 for i, ch in enumerate(self.chars)}

    @property
    def size(self) -> int:
        return len(self.chars) + 2

    def id_of(self, ch: str) -> int:
        return self._to_id.get(ch, self.UNK)

    def char_of(self, idx: int) -> str | None:
        """The character for an id; None for the reserved PAD/UNK ids."""
        if idx < 2:
            return None
        return self.chars[idx - 2]

    def encode(self, text: str) -> np.ndarray:
        return np.fromiter((self._to_id.get(ch, self.UNK) for ch in text),
                           dtype=np.int32, count=len(text))

    def __contains__(self, ch: str) -> bool:
        return ch in self._to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, CharVocab) and self.chars == other.chars


def build_vocab(lines: Iterable[str], table: DiacriticTable, min_count: int = 10) -> CharVocab:
    """Collect every character occurring >= min_count times, plus all of the
    table's diacritized characters, ordered by codepoint."""
    counts: dict[str, int] = {}
    seen_any = False
    for line in lines:
        seen_any = True
        for ch in line:
            counts[ch] = counts.get(ch, 0) + 1
    if not seen_any:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    keep = {ch for ch, c in counts.items() if c >= min_count}
    keep.update(table.marked_chars)
    return CharVocab(keep)


@dataclass(frozen=True)
class AtcnConfig:
    """Architecture hyperparameters; defaults are the deployed configuration."""

    embedding_dim: int = 50
    channels: int = 250
    dilations: tuple[int, ...] = (1, 2, 4, 8)
    convs_per_block: int = 2
    kernel_size: int = 5
    dropout_rate: float = 0.2
    max_sequence_length: int = 500
    upsampler_kind: str = "scalar-copy"
    language: str = "hu"

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError("kernel_size must be odd")
        if self.upsampler_kind not in ("scalar-copy", "full-projection"):
            raise ValueError(f"unknown upsampler kind {self.upsampler_kind!r}")
        if self.upsampler_kind == "scalar-copy" and self.channels % self.embedding_dim:
            raise ValueError("channels must be divisible by embedding_dim for the scalar-copy upsampler")
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ValueError("dilations must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @property
    def num_blocks(self) -> int:
        return len(self.dilations)

    @property
    def receptive_radius(self) -> int:
        """How far (in positions) one output can see: b * (k-1)/2 * sum(dilations)."""
        return self.convs_per_block * ((self.kernel_size - 1) // 2) * sum(self.dilations)

    @property
    def receptive_field(self) -> int:
        return 2 * self.receptive_radius + 1

    def to_dict(self) -> dict:
        return {
            "embedding_dim": self.embedding_dim,
            "channels": self.channels,
            "dilations": list(self.dilations),
            "convs_per_block": self.convs_per_block,
            "kernel_size": self.kernel_size,
            "dropout_rate": self.dropout_rate,
            "max_sequence_length": self.max_sequence_length,
            "upsampler_kind": self.upsampler_kind,
            "language": self.language,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AtcnConfig":
        return cls(**{**d, "dilations": tuple(d["dilations"])})


class AtcnModel:
    """Parameters plus vocabulary; owns forward/backward and decoding."""

    def __init__(self, config: AtcnConfig, vocab: CharVocab, dtype=np.float32, seed: int = 0):
        self.config = config
        self.vocab = vocab
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.bn_states: dict[str, BatchNormState] = {}
        self._table: DiacriticTable | None = None
        self._init_params(seed)

    # -- construction -----------------------------------------------------

    def _he_uniform(self, rng, shape, fan_in):
        limit = np.sqrt(6.0 / fan_in)
        return Tensor(rng.uniform(-limit, limit, size=shape).astype(self.dtype))

    def _init_params(self, seed: int):
        cfg = self.config
        rng = np.random.default_rng(seed)
        vocab_size = self.vocab.size
        emb = rng.normal(size=(vocab_size, cfg.embedding_dim)) / np.sqrt(cfg.embedding_dim)
        self.params["embedding"] = Tensor(emb.astype(self.dtype))

        if cfg.upsampler_kind == "scalar-copy":
            copies = cfg.channels // cfg.embedding_dim
            self.params["upsample.weight"] = Tensor(np.ones(copies, dtype=self.dtype))
        else:
            self.params["upsample.weight"] = self._he_uniform(
                rng, (cfg.channels, cfg.embedding_dim, 1), cfg.embedding_dim)
        self.params["upsample.bias"] = Tensor(np.zeros(cfg.channels, dtype=self.dtype))

        for i in range(cfg.num_blocks):
            for r in range(cfg.convs_per_block):
                fan_in = cfg.channels * cfg.kernel_size
                self.params[f"block{i}.conv{r}.weight"] = self._he_uniform(
                    rng, (cfg.channels, cfg.channels, cfg.kernel_size), fan_in)
                self.params[f"block{i}.conv{r}.bias"] = Tensor(np.zeros(cfg.channels, dtype=self.dtype))
                state = BatchNormState(cfg.channels, dtype=self.dtype)
                self.bn_states[f"block{i}.bn{r}"] = state
                self.params[f"block{i}.bn{r}.gamma"] = state.gamma
                self.params[f"block{i}.bn{r}.beta"] = state.beta

        self.params["proj.weight"] = self._he_uniform(rng, (vocab_size, cfg.channels, 1), cfg.channels)
        self.params["proj.bias"] = Tensor(np.zeros(vocab_size, dtype=self.dtype))

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    @property
    def table(self) -> DiacriticTable:
        if self._table is None:
            self._table = builtin_table(self.config.language)
        return self._table

    def _conv_spec(self, dilation: int) -> ConvSpec:
        c = self.config.channels
        return ConvSpec(self.config.kernel_size, dilation, c, c)

    # -- forward / backward -----------------------------------------------

    def forward(self, ids: np.ndarray, mask: np.ndarray, train: bool = False,
                rng_seed: int | None = 0):
        """Compute logits [B, vocab, n] for padded id matrix [B, n].

        In train mode also returns a tape for `backward`; mask marks the real
        (non-PAD) positions and padded activations are zeroed before every conv.
        """
        cfg = self.config
        ids = np.asarray(ids)
        if ids.ndim != 2:
            raise ValueError(f"ids must be [batch, n], got shape {ids.shape}")
        if ids.max(initial=0) >= self.vocab.size:
            raise ValueError(f"id {int(ids.max())} out of range for vocab size {self.vocab.size}")
        rng = np.random.default_rng(rng_seed) if train and cfg.dropout_rate > 0 else None
        tape: dict = {"ids": ids, "mask": mask} if train else None

        emb = kernel.embed_lookup(ids, self.params["embedding"])
        x = kernel.apply_time_mask(emb, mask)
        if train:
            tape["upsample_in"] = x.data
        x = self._upsample_forward(x)

        blocks = []
        for i, dilation in enumerate(cfg.dilations):
            spec = self._conv_spec(dilation)
            block_in = x
            reps = []
            for r in range(cfg.convs_per_block):
                x = kernel.apply_time_mask(x, mask)
                conv_in = x.data
                x = kernel.conv1d_acausal(x, spec, self.params[f"block{i}.conv{r}.weight"],
                                          self.params[f"block{i}.conv{r}.bias"])
                x, bn_ctx = kernel.batchnorm_channel(x, self.bn_states[f"block{i}.bn{r}"], train)
                pre_relu = x.data
                x = kernel.relu(x)
                if train and cfg.dropout_rate > 0:
                    x, drop_mask = kernel.spatial_dropout(x, cfg.dropout_rate, rng)
                else:
                    drop_mask = None
                if train:
                    reps.append((conv_in, bn_ctx, pre_relu, drop_mask))
            x = Tensor(x.data + block_in.data)
            if train:
                blocks.append(reps)
        if train:
            tape["blocks"] = blocks

        x = kernel.apply_time_mask(x, mask)
        if train:
            tape["proj_in"] = x.data
        logits = kernel.conv1d_acausal(
            x, ConvSpec(1, 1, cfg.channels, self.vocab.size),
            self.params["proj.weight"], self.params["proj.bias"])
        return (logits, tape) if train else logits

    def backward(self, tape: dict, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
        """Mirror of `forward` in train mode: gradients for every parameter."""
        cfg = self.config
        mask = tape["mask"]
        grads: dict[str, np.ndarray] = {}

        g, gw, gb = kernel.conv1d_acausal_backward(
            grad_logits, tape["proj_in"], ConvSpec(1, 1, cfg.channels, self.vocab.size),
            self.params["proj.weight"])
        grads["proj.weight"], grads["proj.bias"] = gw, gb
        g = kernel.apply_time_mask_backward(g, mask)

        for i in reversed(range(cfg.num_blocks)):
            spec = self._conv_spec(cfg.dilations[i])
            g_skip = g
            for r in reversed(range(cfg.convs_per_block)):
                conv_in, bn_ctx, pre_relu, drop_mask = tape["blocks"][i][r]
                g = kernel.spatial_dropout_backward(g, drop_mask)
                g = kernel.relu_backward(g, pre_relu)
                g, ggamma, gbeta = kernel.batchnorm_channel_backward(
                    g, bn_ctx, self.bn_states[f"block{i}.bn{r}"])
                grads[f"block{i}.bn{r}.gamma"] = ggamma
                grads[f"block{i}.bn{r}.beta"] = gbeta
                g, gw, gb = kernel.conv1d_acausal_backward(
                    g, conv_in, spec, self.params[f"block{i}.conv{r}.weight"])
                grads[f"block{i}.conv{r}.weight"] = gw
                grads[f"block{i}.conv{r}.bias"] = gb
                g = kernel.apply_time_mask_backward(g, mask)
            g = g + g_skip

        g = self._upsample_backward(g, tape["upsample_in"], grads)
        g = kernel.apply_time_mask_backward(g, mask)
        grads["embedding"] = kernel.embed_lookup_backward(g, tape["ids"], self.params["embedding"])
        return grads

    def _upsample_forward(self, x: Tensor) -> Tensor:
        cfg = self.config
        w = self.params["upsample.weight"]
        b = self.params["upsample.bias"]
        if cfg.upsampler_kind == "full-projection":
            return kernel.conv1d_acausal(
                x, ConvSpec(1, 1, cfg.embedding_dim, cfg.channels), w, b)
        # concatenate the embedding with itself channels/E times, one scalar per copy
        batch, _, n = x.data.shape
        out = (x.data[:, None, :, :] * w.data[None, :, None, None]).reshape(batch, cfg.channels, n)
        out += b.data[None, :, None]
        return Tensor(np.ascontiguousarray(out))

    def _upsample_backward(self, g: np.ndarray, saved_in: np.ndarray, grads: dict) -> np.ndarray:
        cfg = self.config
        w = self.params["upsample.weight"]
        if cfg.upsampler_kind == "full-projection":
            gx, gw, gb = kernel.conv1d_acausal_backward(
                g, saved_in, ConvSpec(1, 1, cfg.embedding_dim, cfg.channels), w)
            grads["upsample.weight"], grads["upsample.bias"] = gw, gb
            return gx
        batch, _, n = g.shape
        copies = cfg.channels // cfg.embedding_dim
        g4 = g.reshape(batch, copies, cfg.embedding_dim, n)
        grads["upsample.bias"] = g.sum(axis=(0, 2))
        grads["upsample.weight"] = np.einsum("bcen,ben->c", g4, saved_in)
        return np.einsum("bcen,c->ben", g4, w.data)

    # -- decoding -----------------------------------------------------------

    def restore(self, text: str, constrained: bool = False) -> str:
        """Restore diacritics in one string; output has exactly the same length."""
        return self.restore_batch([text], constrained)[0]

    def restore_batch(self, texts: Sequence[str], constrained: bool = False) -> list[str]:
        lengths = [len(t) for t in texts]
        n_max = max(lengths, default=0)
        if n_max == 0:
            return ["" for _ in texts]
        batch = len(texts)
        ids = np.zeros((batch, n_max), dtype=np.int32)
        mask = np.zeros((batch, n_max), dtype=bool)
        for b, text in enumerate(texts):
            ids[b, :len(text)] = self.vocab.encode(text)
            mask[b, :len(text)] = True
        logits = self.forward(ids, mask, train=False)
        if constrained:
            return [self._decode_constrained(text, logits.data[b]) for b, text in enumerate(texts)]
        best = np.argmax(logits.data, axis=1)  # ties -> lowest id
        out = []
        for b, text in enumerate(texts):
            chars = []
            for t, ch in enumerate(text):
                if ids[b, t] == CharVocab.UNK:
                    chars.append(ch)  # unknown inputs are copied verbatim
                    continue
                predicted = self.vocab.char_of(int(best[b, t]))
                chars.append(predicted if predicted is not None else ch)
            out.append("".join(chars))
        return out

    def _decode_constrained(self, text: str, line_logits: np.ndarray) -> str:
        chars = []
        for t, ch in enumerate(text):
            allowed = [self.vocab.id_of(v) for v in self.table.variants(ch)
                       if v in self.vocab]
            if ch in self.vocab:
                allowed.append(self.vocab.id_of(ch))
            if not allowed:
                chars.append(ch)
                continue
            allowed = sorted(set(allowed))
            pick = allowed[int(np.argmax(line_logits[allowed, t]))]
            chars.append(self.vocab.char_of(pick))
        return "".join(chars)
