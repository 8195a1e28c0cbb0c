"""
GPT-2 style decoder-only transformer over one token stream.

Each example is laid out as

    BOS  x  SEP  apply(perm, y)  EOS

(Prod inputs put a SEP between the two operands). The loss covers only the
L + 1 positions that predict a target token or EOS; input tokens are
context. Gradients come from torch autograd.
"""

import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .models import (
    ConfigurationError,
    Dataset,
    Example,
    GradientError,
    ModelConfig,
    NumericOverflowError,
    Permutation,
    TaskKind,
    TaskSpec,
    Vocabulary,
)
from .permutation import apply

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


# ============================================================================
# Encoding
# ============================================================================

def encode_prefix(x: Sequence[int], task: TaskSpec, vocab: Vocabulary) -> List[int]:
    """Token ids of BOS, the input and the SEP that precedes the targets."""
    ids = [Vocabulary.BOS]
    if task.kind == TaskKind.PROD:
        n = task.operand_digits
        ids += vocab.encode(x[:n]) + [Vocabulary.SEP] + vocab.encode(x[n:])
    else:
        ids += vocab.encode(x)
    ids.append(Vocabulary.SEP)
    return ids


def prefix_len(task: TaskSpec) -> int:
    extra = 1 if task.kind == TaskKind.PROD else 0
    return task.input_len + 2 + extra


def encoded_len(task: TaskSpec) -> int:
    """L', the full decoder stream length."""
    return prefix_len(task) + task.target_len + 1


@dataclass
class EncodedBatch:
    """
    Rows of equal layout.

    loss_mask[b, t] is true when tokens[b, t + 1] is a target token or EOS.
    """
    tokens: torch.Tensor
    loss_mask: torch.Tensor
    perm_ids: torch.Tensor
    target_start: int
    target_len: int

    def __len__(self) -> int:
        return self.tokens.shape[0]

    @property
    def labels(self) -> torch.Tensor:
        pad = torch.full_like(self.tokens[:, :1], Vocabulary.PAD)
        return torch.cat([self.tokens[:, 1:], pad], dim=1)

    def select(self, index: torch.Tensor) -> "EncodedBatch":
        return EncodedBatch(
            tokens=self.tokens[index],
            loss_mask=self.loss_mask[index],
            perm_ids=self.perm_ids[index],
            target_start=self.target_start,
            target_len=self.target_len,
        )


def encode_batch(
    examples: Sequence[Example],
    perm: Permutation,
    vocab: Vocabulary,
    perm_id: int = 0,
) -> EncodedBatch:
    """
    Encode examples with targets reordered by `perm`.

    Raises:
        VocabularyError: If a value has no token id
        ConfigurationError: If examples mix tasks or perm has the wrong length
    """
    if not examples:
        raise ConfigurationError("cannot encode an empty batch")
    task = examples[0].task
    if any(e.task != task for e in examples):
        raise ConfigurationError("all examples in a batch must share one task")
    if len(perm) != task.target_len:
        raise ConfigurationError(f"permutation length {len(perm)} != L={task.target_len}")

    rows = []
    for example in examples:
        ids = encode_prefix(example.x, task, vocab)
        ids += vocab.encode(apply(perm, list(example.y)))
        ids.append(Vocabulary.EOS)
        rows.append(ids)

    tokens = torch.tensor(rows, dtype=torch.long)
    start = prefix_len(task)
    mask = torch.zeros_like(tokens, dtype=torch.bool)
    mask[:, start - 1:start + task.target_len] = True
    return EncodedBatch(
        tokens=tokens,
        loss_mask=mask,
        perm_ids=torch.full((len(rows),), perm_id, dtype=torch.long),
        target_start=start,
        target_len=task.target_len,
    )


def encode_dataset(
    dataset: Dataset, perm: Permutation, vocab: Vocabulary, perm_id: int = 0
) -> EncodedBatch:
    return encode_batch(dataset.examples, perm, vocab, perm_id)


def concat_batches(batches: Sequence[EncodedBatch]) -> EncodedBatch:
    first = batches[0]
    if any(b.target_start != first.target_start or b.target_len != first.target_len
           for b in batches):
        raise ConfigurationError("cannot concatenate batches with different layouts")
    return EncodedBatch(
        tokens=torch.cat([b.tokens for b in batches]),
        loss_mask=torch.cat([b.loss_mask for b in batches]),
        perm_ids=torch.cat([b.perm_ids for b in batches]),
        target_start=first.target_start,
        target_len=first.target_len,
    )


# ============================================================================
# Model
# ============================================================================

class CausalSelfAttention(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.n_heads = config.n_heads
        self.head_dim = config.d_emb // config.n_heads
        self.qkv_proj = nn.Linear(config.d_emb, 3 * config.d_emb)
        self.out_proj = nn.Linear(config.d_emb, config.d_emb)
        self.attn_dropout = nn.Dropout(config.dropout)
        self.resid_dropout = nn.Dropout(config.dropout)
        tril = torch.tril(torch.ones(config.max_seq_len, config.max_seq_len, dtype=torch.bool))
        self.register_buffer("tril", tril.view(1, 1, config.max_seq_len, config.max_seq_len))

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        b, t, c = x.shape
        query, key, value = self.qkv_proj(x).chunk(3, dim=-1)
        # (B, H, T, head_dim)
        query = query.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        key = key.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        value = value.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)

        scores = (query @ key.transpose(-1, -2)) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~self.tril[:, :, :t, :t], float("-inf"))
        attention = torch.softmax(scores, dim=-1)

        output = self.attn_dropout(attention) @ value
        output = output.transpose(1, 2).contiguous().view(b, t, c)
        return self.resid_dropout(self.out_proj(output)), attention


class DecoderBlock(nn.Module):
    """Pre-norm transformer block."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.ln_1 = nn.LayerNorm(config.d_emb)
        self.attn = CausalSelfAttention(config)
        self.ln_2 = nn.LayerNorm(config.d_emb)
        self.mlp = nn.Sequential(
            nn.Linear(config.d_emb, config.d_ffn),
            nn.GELU(),
            nn.Linear(config.d_ffn, config.d_emb),
            nn.Dropout(config.dropout),
        )

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        attn_out, attention = self.attn(self.ln_1(x))
        x = x + attn_out
        x = x + self.mlp(self.ln_2(x))
        return x, attention


class DecoderTransformer(nn.Module):
    """
    Decoder-only transformer with trainable positional embeddings.

    Example:
        >>> model = DecoderTransformer(ModelConfig.desk(vocab_size=23, max_seq_len=16))
        >>> logits, _ = model(torch.zeros(2, 16, dtype=torch.long))
        >>> logits.shape
        torch.Size([2, 16, 23])
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_emb)
        self.pos_emb = nn.Embedding(config.max_seq_len, config.d_emb)
        self.emb_dropout = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(DecoderBlock(config) for _ in range(config.n_layers))
        self.ln_f = nn.LayerNorm(config.d_emb)
        self.head = nn.Linear(config.d_emb, config.vocab_size, bias=False)
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module: nn.Module) -> None:
        if isinstance(module, (nn.Linear, nn.Embedding)):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
        if isinstance(module, nn.Linear) and module.bias is not None:
            nn.init.zeros_(module.bias)

    def forward(
        self,
        tokens: torch.Tensor,
        input_embeddings: Optional[torch.Tensor] = None,
    ) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        """
        Returns:
            (logits [B, T, V], per-layer attention [B, H, T, T])
        """
        t = tokens.shape[1]
        if t > self.config.max_seq_len:
            raise ConfigurationError(
                f"sequence length {t} exceeds max_seq_len {self.config.max_seq_len}"
            )
        x = self.tok_emb(tokens) if input_embeddings is None else input_embeddings
        positions = torch.arange(t, device=tokens.device)
        x = self.emb_dropout(x + self.pos_emb(positions))

        attentions = []
        for block in self.blocks:
            x, attention = block(x)
            attentions.append(attention)
        return self.head(self.ln_f(x)), attentions

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(config: ModelConfig, seed: int = 0) -> DecoderTransformer:
    """Fresh model with a seeded initialisation."""
    torch.manual_seed(seed)
    return DecoderTransformer(config)


def model_config_for(task: TaskSpec, vocab: Vocabulary, preset: str = "desk",
                     **overrides) -> ModelConfig:
    """ModelConfig sized for a task's stream length and vocabulary."""
    factory = {"desk": ModelConfig.desk, "full": ModelConfig.full}.get(preset)
    if factory is None:
        raise ConfigurationError(f"unknown model preset: {preset}")
    config = factory(vocab_size=vocab.size, max_seq_len=encoded_len(task))
    known = {f.name for f in fields(ModelConfig)} - {"vocab_size", "max_seq_len"}
    for name, value in overrides.items():
        if name not in known:
            raise ConfigurationError(f"unknown model setting: {name}")
        setattr(config, name, value)
    config.__post_init__()
    return config


# ============================================================================
# Forward / Backward
# ============================================================================

@dataclass
class ForwardOutput:
    loss: torch.Tensor
    per_row_loss: torch.Tensor
    logits: torch.Tensor
    attentions: Optional[List[torch.Tensor]] = None
    train: bool = False


def forward(
    model: DecoderTransformer,
    batch: EncodedBatch,
    train: bool = False,
    capture_attention: bool = False,
    target_probs: Optional[torch.Tensor] = None,
    target_embeddings: Optional[torch.Tensor] = None,
    enable_grad: Optional[bool] = None,
) -> ForwardOutput:
    """
    Masked next-token cross-entropy over one batch.

    Args:
        model: The transformer
        batch: Encoded rows
        train: Train mode keeps dropout and the autograd graph
        capture_attention: Keep the softmaxed attention maps
        target_probs: Optional soft distributions [B, L, V] replacing the
            one-hot labels of the L target slots (EOS stays hard)
        target_embeddings: Optional [B, L, d] input embeddings for the target
            slots, replacing the token embeddings there
        enable_grad: Build the autograd graph; defaults to `train`

    Raises:
        NumericOverflowError: If the loss is not finite
    """
    model.train(train)
    with torch.set_grad_enabled(train if enable_grad is None else enable_grad):
        tokens = batch.tokens
        embeddings = None
        if target_embeddings is not None:
            embeddings = model.tok_emb(tokens)
            start, end = batch.target_start, batch.target_start + batch.target_len
            embeddings = torch.cat(
                [embeddings[:, :start], target_embeddings.to(embeddings.dtype), embeddings[:, end:]],
                dim=1,
            )
        logits, attentions = model(tokens, input_embeddings=embeddings)

        log_probs = F.log_softmax(logits, dim=-1)
        nll = -log_probs.gather(-1, batch.labels.unsqueeze(-1)).squeeze(-1)
        if target_probs is not None:
            first = batch.target_start - 1
            slots = slice(first, first + batch.target_len)
            soft = -(target_probs.to(log_probs.dtype) * log_probs[:, slots]).sum(-1)
            nll = torch.cat([nll[:, :first], soft, nll[:, first + batch.target_len:]], dim=1)

        mask = batch.loss_mask.to(nll.dtype)
        masked = nll * mask
        loss = masked.sum() / mask.sum().clamp(min=1.0)
        per_row = masked.sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)

    if not torch.isfinite(loss):
        raise NumericOverflowError("numeric overflow")
    return ForwardOutput(
        loss=loss,
        per_row_loss=per_row.detach(),
        logits=logits,
        attentions=[a.detach() for a in attentions] if capture_attention else None,
        train=train,
    )


def backward(model: DecoderTransformer, output: ForwardOutput) -> Dict[str, torch.Tensor]:
    """
    Gradients of output.loss for every named parameter.

    Raises:
        GradientError: If output did not come from a train-mode forward pass
    """
    if not output.train or output.loss.grad_fn is None:
        raise GradientError("backward requires a train-mode forward pass")
    model.zero_grad(set_to_none=True)
    output.loss.backward()
    return {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }


# ============================================================================
# Decoding
# ============================================================================

_FORBIDDEN_IN_DECODE = (Vocabulary.PAD, Vocabulary.BOS, Vocabulary.SEP)


@torch.no_grad()
def generate_batch(
    model: DecoderTransformer,
    inputs: Sequence[Sequence[int]],
    task: TaskSpec,
    vocab: Vocabulary,
    target_len: Optional[int] = None,
) -> List[List[int]]:
    """
    Greedy decoding of up to L value tokens after the SEP, row by row in parallel.

    Decoding picks among value tokens and EOS; a row stops at its first EOS.
    """
    length = target_len or task.target_len
    model.eval()
    device = next(model.parameters()).device
    seq = torch.tensor([encode_prefix(x, task, vocab) for x in inputs], dtype=torch.long,
                       device=device)
    if seq.shape[1] + length + 1 > model.config.max_seq_len:
        raise ConfigurationError("prefix plus targets exceed max_seq_len")

    for _ in range(length):
        logits, _ = model(seq)
        step = logits[:, -1].clone()
        step[:, list(_FORBIDDEN_IN_DECODE)] = float("-inf")
        seq = torch.cat([seq, step.argmax(dim=-1, keepdim=True)], dim=1)

    outputs = []
    for row in seq[:, -length:].tolist():
        values = []
        for token in row:
            if token == Vocabulary.EOS:
                break
            values.append(vocab.value_of(token))
        outputs.append(values)
    return outputs


def generate(
    model: DecoderTransformer,
    x: Sequence[int],
    task: TaskSpec,
    vocab: Vocabulary,
    target_len: Optional[int] = None,
) -> List[int]:
    return generate_batch(model, [x], task, vocab, target_len)[0]


# ============================================================================
# Attention Capture
# ============================================================================

@dataclass
class AttentionCapture:
    """Attention maps [layers, heads, rows, L', L'] for a set of encoded rows."""
    maps: np.ndarray
    source: str = ""

    @property
    def num_layers(self) -> int:
        return self.maps.shape[0]

    @property
    def num_heads(self) -> int:
        return self.maps.shape[1]

    @property
    def seq_len(self) -> int:
        return self.maps.shape[-1]

    def head(self, layer: int, head: int) -> np.ndarray:
        return self.maps[layer, head]


def capture_batch(model: DecoderTransformer, batch: EncodedBatch, source: str = "") -> AttentionCapture:
    output = forward(model, batch, train=False, capture_attention=True)
    stacked = torch.stack(output.attentions)  # (layers, B, H, T, T)
    maps = stacked.permute(0, 2, 1, 3, 4).to(torch.float64).cpu().numpy()
    return AttentionCapture(maps=maps, source=source)


# ============================================================================
# Checkpoints
# ============================================================================

def save_checkpoint(
    model: DecoderTransformer,
    vocab: Vocabulary,
    path: str,
    task: Optional[TaskSpec] = None,
) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": asdict(model.config),
        "vocab": vocab.to_dict(),
        "task": task.to_dict() if task is not None else None,
        "state_dict": model.state_dict(),
    }
    torch.save(payload, out)
    logger.info(f"Saved checkpoint to {out}")
    return out


def load_checkpoint(path: str) -> Tuple[DecoderTransformer, Vocabulary, Optional[TaskSpec]]:
    """
    Raises:
        ConfigurationError: For unknown format versions or missing files
    """
    src = Path(path)
    if not src.exists():
        raise ConfigurationError(f"checkpoint not found: {src}")
    payload = torch.load(src, map_location="cpu")
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint format version: {version}")

    model = DecoderTransformer(ModelConfig(**payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    task = TaskSpec.from_dict(payload["task"]) if payload.get("task") else None
    return model, Vocabulary.from_dict(payload["vocab"]), task
