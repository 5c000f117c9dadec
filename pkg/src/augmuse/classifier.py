"""Multi-label tagger: conv backbone + self-attention pooling + sigmoid heads.

The backbone is a from-scratch stack of inverted-residual blocks
(depthwise-separable convs, stride-2 downsampling) over log-mel frames;
a self-attention block mixes time steps and an attention-weighted mean
pools them. Training is windowed BCE with early stopping on validation
macro PR-AUC, bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import copy
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from . import metrics
from .corpus import AudioBuffer, LabelVocabulary, TrackRecord, load_audio
from .features import FeatureCache, MelConfig, mel_spectrogram, resample

CHECKPOINT_FORMAT = "augmuse-classifier/1"


@dataclass(frozen=True)
class ClassifierConfig:
    num_classes: int
    backbone_width: int = 8
    num_conv_blocks: int = 3
    attention_heads: int = 2
    window_s: float = 10.0
    learning_rate: float = 2e-3
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0
    windows_per_track: int = 2
    mel: MelConfig = field(default_factory=MelConfig)

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if self.window_frames < 8:
            raise ValueError("window_s x frame rate must give at least 8 frames")
        if self.backbone_width % 4 != 0:
            raise ValueError("backbone_width must be a multiple of 4")

    @property
    def window_frames(self) -> int:
        return int(round(self.window_s * self.mel.frame_rate_hz))

    @property
    def sample_rate_hz(self) -> int:
        return self.mel.sample_rate_hz


@dataclass(frozen=True)
class LabeledSet:
    records: tuple[TrackRecord, ...]
    labels: np.ndarray  # [n_tracks, n_classes] multi-hot
    vocabulary: LabelVocabulary

    @classmethod
    def from_records(cls, records: Sequence[TrackRecord], vocabulary: LabelVocabulary) -> "LabeledSet":
        return cls(records=tuple(records), labels=vocabulary.label_matrix(records), vocabulary=vocabulary)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class ScoreMatrix:
    scores: np.ndarray  # [n_tracks, n_classes] in [0, 1]
    track_ids: tuple[str, ...]
    padded_track_ids: tuple[str, ...] = ()  # tracks shorter than one window


class _InvertedResidual(nn.Module):
    """1x1 expand -> depthwise 3x3 (stride) -> 1x1 project, residual when shapes match."""

    def __init__(self, in_ch: int, out_ch: int, stride: int, expansion: int = 2):
        super().__init__()
        mid = in_ch * expansion
        self.use_residual = stride == 1 and in_ch == out_ch
        self.net = nn.Sequential(
            nn.Conv2d(in_ch, mid, 1, bias=False),
            nn.GroupNorm(4, mid),
            nn.ReLU(),
            nn.Conv2d(mid, mid, 3, stride=stride, padding=1, groups=mid, bias=False),
            nn.GroupNorm(4, mid),
            nn.ReLU(),
            nn.Conv2d(mid, out_ch, 1, bias=False),
            nn.GroupNorm(4, out_ch),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.net(x)
        return x + out if self.use_residual else out


class TaggerNet(nn.Module):
    def __init__(self, cfg: ClassifierConfig):
        super().__init__()
        w = cfg.backbone_width
        self.stem = nn.Sequential(
            nn.Conv2d(1, w, 3, stride=2, padding=1, bias=False),
            nn.GroupNorm(4, w),
            nn.ReLU(),
        )
        blocks = []
        ch = w
        for _ in range(cfg.num_conv_blocks):
            blocks.append(_InvertedResidual(ch, ch * 2, stride=2))
            ch *= 2
        self.blocks = nn.Sequential(*blocks)
        self.attention = nn.MultiheadAttention(ch, cfg.attention_heads, batch_first=True)
        self.attention_norm = nn.LayerNorm(ch)
        self.pool_score = nn.Linear(ch, 1)
        self.head = nn.Linear(ch, cfg.num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: [B, 1, frames, mels] normalized log-mel -> [B, num_classes] logits."""
        h = self.blocks(self.stem(x))  # [B, C, T', M']
        h = h.mean(dim=3).transpose(1, 2)  # [B, T', C]
        attn, _ = self.attention(h, h, h, need_weights=False)
        h = self.attention_norm(h + attn)
        weights = torch.softmax(self.pool_score(h), dim=1)  # [B, T', 1]
        pooled = (h * weights).sum(dim=1)
        return self.head(pooled)


def build_network(cfg: ClassifierConfig) -> TaggerNet:
    torch.manual_seed(cfg.seed)
    return TaggerNet(cfg)


def training_loss(net: TaggerNet, inputs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Per-class BCE summed over classes, averaged over the batch."""
    logits = net(inputs)
    return nn.functional.binary_cross_entropy_with_logits(logits, targets, reduction="none").sum(dim=1).mean()


@dataclass
class TrainedModel:
    net: TaggerNet
    config: ClassifierConfig
    vocabulary: LabelVocabulary
    training_history: list[dict]
    mel_mean: np.ndarray
    mel_std: np.ndarray


class _FeatureStore:
    """Per-track log-mel features with an in-memory map and optional disk cache."""

    def __init__(self, mel_cfg: MelConfig, cache_dir: str | Path | None = None):
        self.mel_cfg = mel_cfg
        self.disk = FeatureCache(cache_dir) if cache_dir else None
        self.mem: dict[str, np.ndarray] = {}
        self.fingerprint = mel_cfg.fingerprint()

    def mel_for_record(self, record: TrackRecord) -> np.ndarray:
        cached = self.mem.get(record.track_id)
        if cached is not None:
            return cached
        if self.disk is not None:
            stored = self.disk.get(record.track_id, self.fingerprint)
            if stored is not None:
                self.mem[record.track_id] = stored
                return stored
        buffer = load_audio(record.audio_path, self.mel_cfg.sample_rate_hz)
        mel = self._mel(buffer)
        self.mem[record.track_id] = mel
        if self.disk is not None:
            self.disk.put(record.track_id, self.fingerprint, mel)
        return mel

    def _mel(self, buffer: AudioBuffer) -> np.ndarray:
        if buffer.sample_rate_hz != self.mel_cfg.sample_rate_hz:
            buffer = resample(buffer, self.mel_cfg.sample_rate_hz)
        if len(buffer.samples) < self.mel_cfg.window:
            pad = self.mel_cfg.window - len(buffer.samples)
            buffer = AudioBuffer(np.pad(buffer.samples, (0, pad)), buffer.sample_rate_hz)
        return mel_spectrogram(buffer, self.mel_cfg).frames

    def mel_for(self, item: TrackRecord | AudioBuffer) -> np.ndarray:
        return self.mel_for_record(item) if isinstance(item, TrackRecord) else self._mel(item)


def _window(mel: np.ndarray, start: int, n_frames: int, fill: float) -> np.ndarray:
    out = np.full((n_frames, mel.shape[1]), fill, dtype=np.float32)
    chunk = mel[start : start + n_frames]
    out[: len(chunk)] = chunk
    return out


def train(
    train_set: LabeledSet,
    val_set: LabeledSet,
    cfg: ClassifierConfig,
    cache_dir: str | Path | None = None,
    log_path: str | Path | None = None,
) -> TrainedModel:
    """Windowed BCE training with early stopping on validation macro PR-AUC."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    if train_set.labels.shape[1] != cfg.num_classes:
        raise ValueError(f"labels have {train_set.labels.shape[1]} classes, config wants {cfg.num_classes}")
    empty = np.nonzero(train_set.labels.sum(axis=0) == 0)[0]
    if empty.size:
        warnings.warn(f"classes with no train positives (kept): {[train_set.vocabulary.classes[i] for i in empty]}")

    store = _FeatureStore(cfg.mel, cache_dir)
    train_mels = [store.mel_for_record(r) for r in train_set.records]
    mel_mean = np.mean(np.concatenate([m.reshape(-1, m.shape[1]) for m in train_mels]), axis=0)
    mel_std = np.std(np.concatenate([m.reshape(-1, m.shape[1]) for m in train_mels]), axis=0) + 1e-6
    fill = float(np.log(cfg.mel.log_eps))

    net = build_network(cfg)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    labels_t = torch.from_numpy(train_set.labels)
    w_frames = cfg.window_frames

    history: list[dict] = []
    best_state: dict | None = None
    best_prauc = -np.inf
    epochs_since_best = 0
    if log_path:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
    log_fh = Path(log_path).open("w") if log_path else None
    try:
        for epoch in range(cfg.max_epochs):
            n_windows = len(train_set) * cfg.windows_per_track
            order = rng.permutation(np.repeat(np.arange(len(train_set)), cfg.windows_per_track))
            epoch_losses = []
            net.train()
            for lo in range(0, n_windows, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                batch = np.stack(
                    [
                        _window(
                            train_mels[i],
                            int(rng.integers(0, max(1, train_mels[i].shape[0] - w_frames + 1))),
                            w_frames,
                            fill,
                        )
                        for i in idx
                    ]
                )
                inputs = torch.from_numpy((batch - mel_mean) / mel_std).float().unsqueeze(1)
                loss = training_loss(net, inputs, labels_t[idx])
                if not torch.isfinite(loss):
                    raise RuntimeError(f"training diverged (non-finite loss) at epoch {epoch}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                epoch_losses.append(float(loss.detach()))

            val_scores = _predict_scores(net, cfg, store, mel_mean, mel_std, val_set.records)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                val_prauc = metrics.pr_auc(val_scores, val_set.labels, "macro")
            entry = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses)), "val_prauc_macro": val_prauc}
            history.append(entry)
            if log_fh:
                log_fh.write(json.dumps(entry) + "\n")
                log_fh.flush()

            # >= keeps the most-trained model among validation ties.
            if val_prauc >= best_prauc:
                best_prauc = val_prauc
                best_state = copy.deepcopy(net.state_dict())
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best > cfg.patience:
                    break
    finally:
        if log_fh:
            log_fh.close()

    if best_state is not None:
        net.load_state_dict(best_state)
    net.eval()
    return TrainedModel(
        net=net,
        config=cfg,
        vocabulary=train_set.vocabulary,
        training_history=history,
        mel_mean=mel_mean,
        mel_std=mel_std,
    )


def _predict_scores(
    net: TaggerNet,
    cfg: ClassifierConfig,
    store: _FeatureStore,
    mel_mean: np.ndarray,
    mel_std: np.ndarray,
    items: Sequence[TrackRecord | AudioBuffer],
    padded_out: list[str] | None = None,
) -> np.ndarray:
    """Chunk each track into consecutive windows and mean-pool sigmoid scores."""
    fill = float(np.log(cfg.mel.log_eps))
    w_frames = cfg.window_frames
    net.eval()
    rows = []
    with torch.no_grad():
        for i, item in enumerate(items):
            mel = store.mel_for(item)
            if mel.shape[0] < w_frames:
                windows = [_window(mel, 0, w_frames, fill)]
                if padded_out is not None:
                    padded_out.append(_item_id(item, i))
            else:
                windows = [
                    mel[s : s + w_frames] for s in range(0, mel.shape[0] - w_frames + 1, w_frames)
                ]
            batch = torch.from_numpy((np.stack(windows) - mel_mean) / mel_std).float().unsqueeze(1)
            scores = torch.sigmoid(net(batch)).mean(dim=0)
            rows.append(scores.numpy())
    return np.stack(rows).astype(np.float64)


def _item_id(item: TrackRecord | AudioBuffer, position: int) -> str:
    return item.track_id if isinstance(item, TrackRecord) else f"buffer_{position}"


def predict(
    model: TrainedModel,
    tracks: Sequence[TrackRecord | AudioBuffer],
    cache_dir: str | Path | None = None,
) -> ScoreMatrix:
    store = _FeatureStore(model.config.mel, cache_dir)
    padded: list[str] = []
    scores = _predict_scores(model.net, model.config, store, model.mel_mean, model.mel_std, tracks, padded)
    return ScoreMatrix(
        scores=scores,
        track_ids=tuple(_item_id(t, i) for i, t in enumerate(tracks)),
        padded_track_ids=tuple(padded),
    )


def save_model(model: TrainedModel, path: str | Path) -> None:
    """Versioned checkpoint container: config, vocabulary, weights, history."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = asdict(model.config)
    cfg["mel"] = asdict(model.config.mel)
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "config": cfg,
            "classes": list(model.vocabulary.classes),
            "state_dict": model.net.state_dict(),
            "history": model.training_history,
            "mel_mean": model.mel_mean,
            "mel_std": model.mel_std,
        },
        path,
    )


def load_model(path: str | Path) -> TrainedModel:
    payload = torch.load(path, weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {payload.get('format')!r}")
    raw_cfg = dict(payload["config"])
    raw_cfg["mel"] = MelConfig(**raw_cfg["mel"])
    cfg = ClassifierConfig(**raw_cfg)
    net = TaggerNet(cfg)
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return TrainedModel(
        net=net,
        config=cfg,
        vocabulary=LabelVocabulary(payload["classes"]),
        training_history=payload["history"],
        mel_mean=payload["mel_mean"],
        mel_std=payload["mel_std"],
    )
