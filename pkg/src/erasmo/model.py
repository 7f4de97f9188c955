"""Small decoder-only causal transformer trained with mean token NLL.

Pre-norm residual blocks, GELU MLP, learned positional embeddings, output
head tied to the token embedding. Parameters live in 32-bit floats; the
loss is accumulated in 64-bit so oracle checks are reproducible. Dropout
draws from an explicit generator, never from torch's global RNG.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    layers: int = 2
    heads: int = 2
    embed_dim: int = 64
    context_len: int = 128
    vocab_size: int = 2048
    dropout: float = 0.1

    def __post_init__(self):
        for name in ("layers", "heads", "embed_dim", "context_len", "vocab_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.embed_dim % self.heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}"
            )
        if self.context_len < 2:
            raise ValueError("context_len must be at least 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


@dataclass
class TrainConfig:
    """Optimization settings; defaults follow the reference training recipe.

    The schedule warms up linearly from lr_initial to lr_max over
    warmup_steps, then decays linearly to lr_min at the final step.
    """

    batch_size: int = 8
    epochs: int = 60
    warmup_steps: int = 500
    weight_decay: float = 0.01
    adam_eps: float = 1e-8
    adam_betas: tuple[float, float] = (0.7, 0.9)
    lr_initial: float = 1e-8
    lr_min: float = 1e-5
    lr_max: float = 4e-5
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.lr_min > self.lr_max:
            raise ValueError("lr_min must not exceed lr_max")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be non-negative")
        if self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("batch_size and epochs must be positive")


class Block(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.embed_dim
        self.heads = config.heads
        self.ln_1 = nn.LayerNorm(d)
        self.qkv = nn.Linear(d, 3 * d)
        self.proj = nn.Linear(d, d)
        self.ln_2 = nn.LayerNorm(d)
        self.mlp_fc = nn.Linear(d, 4 * d)
        self.mlp_proj = nn.Linear(4 * d, d)

    def forward(self, x, attn_mask, dropout_p, rng):
        h = self.ln_1(x)
        B, T, d = h.shape
        head_dim = d // self.heads
        q, k, v = self.qkv(h).split(d, dim=2)
        q = q.view(B, T, self.heads, head_dim).transpose(1, 2)
        k = k.view(B, T, self.heads, head_dim).transpose(1, 2)
        v = v.view(B, T, self.heads, head_dim).transpose(1, 2)
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(head_dim)
        scores = scores.masked_fill(~attn_mask, float("-inf"))
        weights = F.softmax(scores, dim=-1)
        weights = _dropout(weights, dropout_p, rng)
        attended = (weights @ v).transpose(1, 2).reshape(B, T, d)
        x = x + _dropout(self.proj(attended), dropout_p, rng)
        h = self.ln_2(x)
        x = x + _dropout(self.mlp_proj(F.gelu(self.mlp_fc(h))), dropout_p, rng)
        return x


class CausalTransformer(nn.Module):
    """Weight container plus forward pass; acts as the model-params type."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.wte = nn.Embedding(config.vocab_size, config.embed_dim)
        self.wpe = nn.Embedding(config.context_len, config.embed_dim)
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.layers))
        self.ln_f = nn.LayerNorm(config.embed_dim)
        # output head shares the token embedding weight

    def tensor_order(self) -> list[str]:
        """Declared tensor order for the checkpoint format."""
        names = ["wte.weight", "wpe.weight"]
        for i in range(self.config.layers):
            for leaf in (
                "ln_1.weight", "ln_1.bias", "qkv.weight", "qkv.bias",
                "proj.weight", "proj.bias", "ln_2.weight", "ln_2.bias",
                "mlp_fc.weight", "mlp_fc.bias", "mlp_proj.weight", "mlp_proj.bias",
            ):
                names.append(f"blocks.{i}.{leaf}")
        names.extend(["ln_f.weight", "ln_f.bias"])
        return names

    def forward(self, ids, pad_id: int | None = None, dropout_p: float = 0.0, rng=None):
        return forward(self, ids, pad_id=pad_id, dropout_p=dropout_p, rng=rng)


def _dropout(x, p, rng):
    if p <= 0.0 or rng is None:
        return x
    keep = (torch.rand(x.shape, generator=rng) >= p).to(x.dtype)
    return x * keep / (1.0 - p)


def init_params(config: ModelConfig, seed: int) -> CausalTransformer:
    """Normal(0, 0.02) weights, zero biases, unit norm scales, fixed seed."""
    model = CausalTransformer(config)
    rng = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.endswith(".bias") or ".ln_" in name or name.startswith("ln_f"):
                if name.endswith("weight"):
                    param.fill_(1.0)
                else:
                    param.zero_()
            else:
                param.normal_(0.0, 0.02, generator=rng)
    return model


def forward(model: CausalTransformer, ids, pad_id=None, dropout_p=0.0, rng=None):
    """Run the transformer; returns (final hidden states, logits).

    Position t only sees positions <= t, and PAD positions are removed
    from the attention keys. Sequences always start with a non-PAD token,
    so no query row ends up fully masked.
    """
    ids = torch.as_tensor(ids, dtype=torch.long)
    if ids.dim() == 1:
        ids = ids.unsqueeze(0)
    B, T = ids.shape
    cfg = model.config
    if T == 0:
        raise ValueError("empty sequence")
    if T > cfg.context_len:
        raise ValueError(f"sequence length {T} exceeds context {cfg.context_len}")
    if int(ids.max()) >= cfg.vocab_size or int(ids.min()) < 0:
        raise ValueError("token id outside vocabulary")

    causal = torch.tril(torch.ones(T, T, dtype=torch.bool))
    attn_mask = causal.view(1, 1, T, T)
    if pad_id is not None:
        key_ok = (ids != pad_id).view(B, 1, 1, T)
        attn_mask = attn_mask & key_ok

    positions = torch.arange(T)
    x = model.wte(ids) + model.wpe(positions).unsqueeze(0)
    x = _dropout(x, dropout_p, rng)
    for block in model.blocks:
        x = block(x, attn_mask, dropout_p, rng)
    hidden = model.ln_f(x)
    logits = hidden @ model.wte.weight.t()
    return hidden, logits


def loss(logits, targets, pad_id: int | None = None):
    """Mean negative log-likelihood over predicted positions, in float64.

    targets are the inputs shifted left by one; the final position of each
    sequence is ignored, as are positions whose target is PAD.
    """
    targets = torch.as_tensor(targets, dtype=torch.long)
    if targets.dim() == 1:
        targets = targets.unsqueeze(0)
    if logits.dim() == 2:
        logits = logits.unsqueeze(0)
    if logits.shape[:2] != targets.shape:
        raise ValueError(f"logits {tuple(logits.shape)} vs targets {tuple(targets.shape)}")
    mask = torch.ones_like(targets, dtype=torch.bool)
    mask[:, -1] = False
    if pad_id is not None:
        mask &= targets != pad_id
    count = int(mask.sum())
    if count == 0:
        raise ValueError("no unmasked target positions in batch")
    log_probs = F.log_softmax(logits.double(), dim=-1)
    picked = log_probs.gather(-1, targets.clamp(min=0).unsqueeze(-1)).squeeze(-1)
    return -(picked[mask]).mean()


def _shifted_targets(ids, pad_id):
    targets = torch.full_like(ids, pad_id if pad_id is not None else 0)
    targets[:, :-1] = ids[:, 1:]
    if pad_id is None:
        # no PAD convention: mark the final column via an all-True mask in loss
        targets[:, -1] = ids[:, -1]
    return targets


def gradient(model: CausalTransformer, batch, pad_id: int | None = None):
    """Reverse-mode gradients of the batch loss, keyed by parameter name."""
    ids = torch.as_tensor(batch, dtype=torch.long)
    if ids.dim() == 1:
        ids = ids.unsqueeze(0)
    if ids.numel() == 0 or ids.shape[1] < 2:
        raise ValueError("batch has no predictable positions")
    model.zero_grad(set_to_none=True)
    _, logits = forward(model, ids, pad_id=pad_id)
    value = loss(logits, _shifted_targets(ids, pad_id), pad_id=pad_id)
    value.backward()
    grads = {
        name: param.grad.detach().clone()
        for name, param in model.named_parameters()
    }
    model.zero_grad(set_to_none=True)
    return grads


def lr_at(step: int, total_steps: int, tcfg: TrainConfig) -> float:
    """Piecewise-linear schedule: warmup to lr_max, decay to lr_min."""
    if step < tcfg.warmup_steps:
        frac = step / tcfg.warmup_steps
        return tcfg.lr_initial + (tcfg.lr_max - tcfg.lr_initial) * frac
    decay_span = max(1, total_steps - 1 - tcfg.warmup_steps)
    frac = min(1.0, (step - tcfg.warmup_steps) / decay_span)
    return tcfg.lr_max + (tcfg.lr_min - tcfg.lr_max) * frac


@dataclass
class TraceRow:
    step: int
    lr: float
    loss: float


def train(
    model: CausalTransformer,
    corpus: list[list[int]],
    tcfg: TrainConfig,
    pad_id: int,
    corpus_per_epoch=None,
) -> tuple[CausalTransformer, list[TraceRow]]:
    """Adam with decoupled weight decay over padded batches.

    corpus_per_epoch, when given, supplies a fresh token-sequence list for
    each epoch (used for per-epoch clause reshuffling); the corpus argument
    then only fixes the sequence count. Deterministic for a fixed seed.
    """
    if not corpus:
        raise ValueError("empty corpus")
    max_len = max(len(seq) for seq in corpus)
    if max_len > model.config.context_len:
        raise ValueError(
            f"sequence of length {max_len} exceeds context {model.config.context_len}"
        )
    n_seqs = len(corpus)
    steps_per_epoch = math.ceil(n_seqs / tcfg.batch_size)
    total_steps = steps_per_epoch * tcfg.epochs

    optimizer = torch.optim.AdamW(
        model.parameters(),
        lr=tcfg.lr_max,
        betas=tcfg.adam_betas,
        eps=tcfg.adam_eps,
        weight_decay=tcfg.weight_decay,
    )
    order_rng = torch.Generator().manual_seed(tcfg.seed)
    dropout_rng = torch.Generator().manual_seed(tcfg.seed + 1)

    trace: list[TraceRow] = []
    step = 0
    for epoch in range(tcfg.epochs):
        epoch_corpus = corpus if corpus_per_epoch is None else corpus_per_epoch(epoch)
        if len(epoch_corpus) != n_seqs:
            raise ValueError("corpus_per_epoch changed the sequence count")
        order = torch.randperm(n_seqs, generator=order_rng).tolist()
        for start in range(0, n_seqs, tcfg.batch_size):
            picked = [epoch_corpus[i] for i in order[start:start + tcfg.batch_size]]
            width = max(len(seq) for seq in picked)
            ids = torch.full((len(picked), width), pad_id, dtype=torch.long)
            for row, seq in enumerate(picked):
                ids[row, : len(seq)] = torch.as_tensor(seq, dtype=torch.long)
            lr = lr_at(step, total_steps, tcfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad(set_to_none=True)
            _, logits = forward(
                model, ids, pad_id=pad_id, dropout_p=tcfg.dropout, rng=dropout_rng
            )
            value = loss(logits, _shifted_targets(ids, pad_id), pad_id=pad_id)
            value.backward()
            optimizer.step()
            trace.append(TraceRow(step=step, lr=lr, loss=float(value.detach())))
            step += 1
    return model, trace


@torch.no_grad()
def generate(
    model: CausalTransformer,
    prompt: list[int],
    max_tokens: int,
    eos_id: int | None = None,
) -> list[int]:
    """Greedy continuation until EOS, max_tokens, or the context limit."""
    if len(prompt) >= model.config.context_len and max_tokens > 0:
        raise ValueError("prompt does not fit the context window")
    seq = list(prompt)
    for _ in range(max_tokens):
        _, logits = forward(model, torch.tensor([seq], dtype=torch.long))
        next_id = int(logits[0, -1].argmax())
        seq.append(next_id)
        if eos_id is not None and next_id == eos_id:
            break
        if len(seq) >= model.config.context_len:
            break
    return seq


def save_checkpoint(model: CausalTransformer, path, seed: int | None = None) -> None:
    """Header JSON line, then raw little-endian float32 tensors in order."""
    cfg = model.config
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": {
            "layers": cfg.layers,
            "heads": cfg.heads,
            "embed_dim": cfg.embed_dim,
            "context_len": cfg.context_len,
            "vocab_size": cfg.vocab_size,
            "dropout": cfg.dropout,
        },
        "seed": seed,
    }
    state = dict(model.named_parameters())
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name in model.tensor_order():
            tensor = state[name].detach().to(torch.float32).contiguous()
            fh.write(tensor.numpy().astype("<f4").tobytes())


def load_checkpoint(path) -> tuple[CausalTransformer, int | None]:
    import numpy as np

    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version: {header.get('format_version')}")
        config = ModelConfig(**header["config"])
        model = CausalTransformer(config)
        state = dict(model.named_parameters())
        with torch.no_grad():
            for name in model.tensor_order():
                param = state[name]
                raw = fh.read(param.numel() * 4)
                if len(raw) != param.numel() * 4:
                    raise ValueError(f"checkpoint truncated at tensor {name}")
                values = np.frombuffer(raw, dtype="<f4").reshape(tuple(param.shape))
                param.copy_(torch.from_numpy(values.copy()))
        trailing = fh.read(1)
        if trailing:
            raise ValueError("trailing bytes after declared tensors")
    return model, header.get("seed")


def save_loss_trace(trace: list[TraceRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "loss"])
        for row in trace:
            writer.writerow([row.step, repr(row.lr), repr(row.loss)])
