"""Tiered autoregressive waveform model over 8-bit mu-law symbols.

Three timescales: a top GRU over coarse sample frames, a middle GRU over
finer frames conditioned on the top tier, and a sample-level MLP over the
last few symbols conditioned on the middle tier. Priming replays real audio
through the recurrences before ancestral sampling takes over.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from ..corpus import AudioBuffer
from .base import GeneratedSample, GenerationRequest, GeneratorProfile, Provenance

MU = 255.0


def mu_law_encode(samples: np.ndarray, quantization_levels: int = 256) -> np.ndarray:
    """Compand to [-1, 1] log scale then quantize uniformly to symbol ids."""
    x = np.asarray(samples, dtype=np.float64)
    if np.any(np.abs(x) > 1.0):
        raise ValueError("mu-law input must lie in [-1, 1]")
    y = np.sign(x) * np.log1p(MU * np.abs(x)) / np.log1p(MU)
    half = (quantization_levels - 1) / 2.0
    return np.round((y + 1.0) * half).astype(np.int64)


def mu_law_decode(symbols: np.ndarray, quantization_levels: int = 256) -> np.ndarray:
    half = (quantization_levels - 1) / 2.0
    y = np.asarray(symbols, dtype=np.float64) / half - 1.0
    x = np.sign(y) * (np.expm1(np.abs(y) * np.log1p(MU))) / MU
    return x.astype(np.float32)


@dataclass(frozen=True)
class TieredConfig:
    sample_rate_hz: int = 16000
    frame_top: int = 64
    frame_mid: int = 16
    hidden_size: int = 128
    embed_size: int = 32
    q_levels: int = 256
    learning_rate: float = 1e-3
    batch_size: int = 16
    seq_len: int = 512  # predicted samples per training sequence
    epochs: int = 10
    steps_per_epoch: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.frame_top % self.frame_mid != 0:
            raise ValueError("frame_top must be a multiple of frame_mid")
        if self.seq_len % self.frame_top != 0:
            raise ValueError("seq_len must be a multiple of frame_top")


class TieredNet(nn.Module):
    def __init__(self, cfg: TieredConfig):
        super().__init__()
        self.cfg = cfg
        h = cfg.hidden_size
        self.top_in = nn.Linear(cfg.frame_top, h)
        self.top_rnn = nn.GRU(h, h, batch_first=True)
        self.top_up = nn.Linear(h, h * (cfg.frame_top // cfg.frame_mid))
        self.mid_in = nn.Linear(cfg.frame_mid, h)
        self.mid_rnn = nn.GRU(h, h, batch_first=True)
        self.mid_up = nn.Linear(h, h * cfg.frame_mid)
        self.embed = nn.Embedding(cfg.q_levels, cfg.embed_size)
        self.samp_in = nn.Linear(cfg.frame_mid * cfg.embed_size, h)
        self.samp_hidden = nn.Linear(h, h)
        self.samp_out = nn.Linear(h, cfg.q_levels)

    def _sample_logits(self, context_embed: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        x = torch.relu(self.samp_in(context_embed) + cond)
        return self.samp_out(torch.relu(self.samp_hidden(x)))

    def forward(self, symbols: torch.Tensor) -> torch.Tensor:
        """Teacher-forced logits for positions [frame_top, len).

        symbols: [B, frame_top + L] int64 with L % frame_top == 0.
        returns: [B, L, q_levels].
        """
        cfg = self.cfg
        batch, total = symbols.shape
        length = total - cfg.frame_top
        floats = symbols.to(self.top_in.weight.dtype) / ((cfg.q_levels - 1) / 2.0) - 1.0

        top_frames = floats[:, :length].reshape(batch, length // cfg.frame_top, cfg.frame_top)
        top_out, _ = self.top_rnn(self.top_in(top_frames))
        top_cond = self.top_up(top_out).reshape(batch, length // cfg.frame_mid, self.cfg.hidden_size)

        mid_start = cfg.frame_top - cfg.frame_mid
        mid_frames = floats[:, mid_start : mid_start + length].reshape(batch, length // cfg.frame_mid, cfg.frame_mid)
        mid_out, _ = self.mid_rnn(self.mid_in(mid_frames) + top_cond)
        samp_cond = self.mid_up(mid_out).reshape(batch, length, self.cfg.hidden_size)

        emb = self.embed(symbols)  # [B, total, E]
        ctx = emb.unfold(1, cfg.frame_mid, 1)[:, cfg.frame_top - cfg.frame_mid : cfg.frame_top - cfg.frame_mid + length]
        ctx = ctx.permute(0, 1, 3, 2).reshape(batch, length, cfg.frame_mid * cfg.embed_size)
        return self._sample_logits(ctx, samp_cond)


@dataclass
class TieredModel:
    net: TieredNet
    config: TieredConfig
    loss_history: list[float] = field(default_factory=list)


def _concat_symbols(train_set: Sequence[AudioBuffer], cfg: TieredConfig) -> np.ndarray:
    if not train_set:
        raise ValueError("empty training set")
    chunks = []
    for buf in train_set:
        if buf.sample_rate_hz != cfg.sample_rate_hz:
            raise ValueError(f"training audio at {buf.sample_rate_hz} Hz, config wants {cfg.sample_rate_hz}")
        chunks.append(mu_law_encode(np.clip(buf.samples, -1.0, 1.0), cfg.q_levels))
    return np.concatenate(chunks)


def tiered_train(train_set: Sequence[AudioBuffer], cfg: TieredConfig) -> TieredModel:
    """Cross-entropy next-symbol training on random crops; seed-deterministic."""
    symbols = _concat_symbols(train_set, cfg)
    crop = cfg.frame_top + cfg.seq_len
    if len(symbols) < crop + 1:
        raise ValueError(f"need at least {crop + 1} samples of training audio, got {len(symbols)}")

    torch.manual_seed(cfg.seed)
    net = TieredNet(cfg)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    sym_t = torch.from_numpy(symbols)

    history: list[float] = []
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for _ in range(cfg.steps_per_epoch):
            starts = rng.integers(0, len(symbols) - crop, size=cfg.batch_size)
            batch = torch.stack([sym_t[s : s + crop] for s in starts])
            logits = net(batch)
            targets = batch[:, cfg.frame_top :]
            loss = nn.functional.cross_entropy(logits.reshape(-1, cfg.q_levels), targets.reshape(-1))
            if not torch.isfinite(loss):
                raise RuntimeError(f"training diverged (non-finite loss) at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
        history.append(float(np.mean(epoch_losses)))
    return TieredModel(net=net, config=cfg, loss_history=history)


def next_symbol_accuracy(model: TieredModel, audio: AudioBuffer) -> float:
    """Greedy next-sample accuracy under teacher forcing."""
    cfg = model.config
    symbols = mu_law_encode(np.clip(audio.samples, -1.0, 1.0), cfg.q_levels)
    usable = (len(symbols) - cfg.frame_top - 1) // cfg.frame_top * cfg.frame_top
    if usable < 1:
        raise ValueError("audio too short for evaluation")
    batch = torch.from_numpy(symbols[: cfg.frame_top + usable]).unsqueeze(0)
    with torch.no_grad():
        logits = model.net(batch)
    pred = logits.argmax(dim=-1)[0].numpy()
    return float(np.mean(pred == symbols[cfg.frame_top : cfg.frame_top + usable]))


def held_out_cross_entropy(model: TieredModel, audio: AudioBuffer) -> float:
    cfg = model.config
    symbols = mu_law_encode(np.clip(audio.samples, -1.0, 1.0), cfg.q_levels)
    usable = (len(symbols) - cfg.frame_top) // cfg.frame_top * cfg.frame_top
    batch = torch.from_numpy(symbols[: cfg.frame_top + usable]).unsqueeze(0)
    with torch.no_grad():
        logits = model.net(batch)
        loss = nn.functional.cross_entropy(
            logits.reshape(-1, cfg.q_levels), batch[0, cfg.frame_top :].reshape(-1)
        )
    return float(loss)


def tiered_continue(
    model: TieredModel,
    prime: AudioBuffer,
    total_length_s: float,
    temperature: float = 1.0,
    seed: int = 0,
) -> AudioBuffer:
    """Teacher-force the prime, then sample to total length.

    The returned audio is the mu-law-roundtripped prime followed by the
    sampled continuation. temperature == 0 selects the argmax symbol.
    """
    cfg = model.config
    net = model.net
    if prime.sample_rate_hz != cfg.sample_rate_hz:
        raise ValueError(f"prime at {prime.sample_rate_hz} Hz, model wants {cfg.sample_rate_hz}")
    prime_len = len(prime.samples)
    if prime_len < cfg.frame_top or prime_len % cfg.frame_top != 0:
        raise ValueError(f"prime length must be a positive multiple of frame_top={cfg.frame_top}")
    total = int(round(total_length_s * cfg.sample_rate_hz))
    if total <= prime_len:
        raise ValueError("total length must exceed the prime")

    half = (cfg.q_levels - 1) / 2.0
    symbols = np.empty(total, dtype=np.int64)
    symbols[:prime_len] = mu_law_encode(np.clip(prime.samples, -1.0, 1.0), cfg.q_levels)
    gen = torch.Generator().manual_seed(seed)

    ratio = cfg.frame_top // cfg.frame_mid
    h_top: torch.Tensor | None = None
    h_mid: torch.Tensor | None = None
    top_queue: list[torch.Tensor] = []  # pending per-mid-frame conds from the top tier
    samp_block: torch.Tensor | None = None  # [frame_mid, hidden] conds for samples

    with torch.no_grad():
        # Warm both recurrences on the prime in single batched passes. The
        # sampling loop below consumes the frame ending at each boundary t, so
        # warm-up stops one frame short of the prime's end on both tiers.
        n_top = prime_len // cfg.frame_top
        floats = torch.from_numpy(symbols[:prime_len].astype(np.float32) / half - 1.0)
        if n_top > 1:
            top_frames = floats[: (n_top - 1) * cfg.frame_top].reshape(1, n_top - 1, cfg.frame_top)
            top_out, h_top = net.top_rnn(net.top_in(top_frames))
            top_cond_all = net.top_up(top_out).reshape(1, (n_top - 1) * ratio, cfg.hidden_size)

            mid_start = cfg.frame_top - cfg.frame_mid
            n_mid = (n_top - 1) * ratio
            mid_frames = floats[mid_start : mid_start + n_mid * cfg.frame_mid].reshape(1, n_mid, cfg.frame_mid)
            _, h_mid = net.mid_rnn(net.mid_in(mid_frames) + top_cond_all)

        for t in range(prime_len, total):
            if t % cfg.frame_top == 0:
                frame = torch.from_numpy(symbols[t - cfg.frame_top : t].astype(np.float32) / half - 1.0)
                out, h_top = net.top_rnn(net.top_in(frame.reshape(1, 1, cfg.frame_top)), h_top)
                top_queue = list(net.top_up(out[:, 0]).reshape(ratio, cfg.hidden_size))
            if t % cfg.frame_mid == 0:
                frame = torch.from_numpy(symbols[t - cfg.frame_mid : t].astype(np.float32) / half - 1.0)
                cond = top_queue.pop(0).reshape(1, 1, -1)
                out, h_mid = net.mid_rnn(net.mid_in(frame.reshape(1, 1, cfg.frame_mid)) + cond, h_mid)
                samp_block = net.mid_up(out[:, 0]).reshape(cfg.frame_mid, cfg.hidden_size)
            ctx = net.embed(torch.from_numpy(symbols[t - cfg.frame_mid : t])).reshape(1, -1)
            logits = net._sample_logits(ctx, samp_block[t % cfg.frame_mid].reshape(1, -1))[0]
            if temperature <= 0.0:
                symbols[t] = int(logits.argmax())
            else:
                probs = torch.softmax(logits / temperature, dim=0)
                symbols[t] = int(torch.multinomial(probs, 1, generator=gen))

    return AudioBuffer(samples=mu_law_decode(symbols, cfg.q_levels), sample_rate_hz=cfg.sample_rate_hz)


TIERED_CHECKPOINT_FORMAT = "augmuse-tiered/1"


def save_tiered_model(model: TieredModel, path) -> None:
    from dataclasses import asdict
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": TIERED_CHECKPOINT_FORMAT,
            "config": asdict(model.config),
            "state_dict": model.net.state_dict(),
            "loss_history": model.loss_history,
        },
        path,
    )


def load_tiered_model(path) -> TieredModel:
    payload = torch.load(path, weights_only=False)
    if payload.get("format") != TIERED_CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {payload.get('format')!r}")
    cfg = TieredConfig(**payload["config"])
    net = TieredNet(cfg)
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return TieredModel(net=net, config=cfg, loss_history=payload["loss_history"])


@dataclass
class TieredGenerator:
    """Primed-mode plug-in around a trained tiered model."""

    profile: GeneratorProfile
    model: TieredModel
    temperature: float = 1.0

    def generate(self, request: GenerationRequest) -> GeneratedSample:
        assert request.prime_or_source is not None
        length_s = request.requested_length_s or self.profile.sample_length_s
        audio = tiered_continue(self.model, request.prime_or_source, length_s, self.temperature, request.seed)
        return GeneratedSample(
            audio=audio,
            inherited_label=request.target_class,
            provenance=Provenance(self.profile.name, request.source_track_id, request.seed, self.profile.mode),
        )
