"""1D-CNN and 1D-CNN-LSTM classifiers for windowed vibration signals."""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import InvalidArg, NonFiniteActivation, NonFiniteInput, ShapeError

CHECKPOINT_VERSION = 1


class ModelKind(enum.Enum):
    CNN = "cnn"
    CNN_LSTM = "cnn_lstm"


class Mode(enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    in_channels: int = 1
    num_classes: int = 3
    dropout: float = 0.5
    lstm_seq_len: int = 1  # adaptive pool output fed to the LSTM (CNN-LSTM only)

    def __post_init__(self):
        if not isinstance(self.kind, ModelKind):
            object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.in_channels < 1:
            raise InvalidArg("in_channels must be >= 1")
        if self.num_classes < 2:
            raise InvalidArg("num_classes must be >= 2")
        if not 0 <= self.dropout < 1:
            raise InvalidArg("dropout must be in [0, 1)")
        if self.lstm_seq_len < 1:
            raise InvalidArg("lstm_seq_len must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, data) -> "ModelSpec":
        return cls(**{**data, "kind": ModelKind(data["kind"])})


def _conv_block(cin, cout, kernel, padding=0, pool=None):
    layers = [nn.Conv1d(cin, cout, kernel_size=kernel, padding=padding), nn.BatchNorm1d(cout), nn.ReLU()]
    if pool is not None:
        layers.append(pool)
    return layers


class SlagCNN(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.features = nn.Sequential(
            *_conv_block(spec.in_channels, 16, 15),
            *_conv_block(16, 32, 3, pool=nn.MaxPool1d(kernel_size=2, stride=2)),
            *_conv_block(32, 64, 3),
            *_conv_block(64, 128, 3, pool=nn.AdaptiveMaxPool1d(4)),
        )
        self.classifier = nn.Sequential(
            nn.Flatten(),
            nn.Linear(128 * 4, 256),
            nn.ReLU(),
            nn.Dropout(spec.dropout),
            nn.Linear(256, 256),
            nn.ReLU(),
            nn.Dropout(spec.dropout),
            nn.Linear(256, spec.num_classes),
        )

    def forward(self, x):
        return self.classifier(self.features(x))


class SlagCNNLSTM(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.features = nn.Sequential(
            *_conv_block(spec.in_channels, 32, 5, padding=3),
            *_conv_block(32, 64, 3, padding=2, pool=nn.MaxPool1d(kernel_size=2, stride=2)),
            *_conv_block(64, 128, 3, padding=1),
            *_conv_block(128, 256, 3, padding=1, pool=nn.AdaptiveMaxPool1d(spec.lstm_seq_len)),
        )
        self.lstm = nn.LSTM(256, 100, num_layers=3, batch_first=True, dropout=0.5, bidirectional=True)
        self.head = nn.Sequential(
            nn.Linear(200, 512),
            nn.BatchNorm1d(512),
            nn.ReLU(),
            nn.Dropout(spec.dropout),
            nn.Linear(512, 256),
            nn.BatchNorm1d(256),
            nn.ReLU(),
            nn.Dropout(spec.dropout),
            nn.Linear(256, spec.num_classes),
        )

    def encode(self, x):
        """Final hidden state of the last LSTM layer, forward and backward concatenated (batch, 200)."""
        seq = self.features(x).transpose(1, 2)
        _, (h_n, _) = self.lstm(seq)
        return torch.cat([h_n[-2], h_n[-1]], dim=1)

    def forward(self, x):
        return self.head(self.encode(x))


def _seeded(seed, build):
    if seed is None:
        return build()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return build()


def build_cnn(in_channels: int = 1, num_classes: int = 3, *, dropout: float = 0.5, seed: int | None = None) -> SlagCNN:
    spec = ModelSpec(ModelKind.CNN, in_channels, num_classes, dropout)
    return _seeded(seed, lambda: SlagCNN(spec))


def build_cnn_lstm(
    in_channels: int = 1,
    num_classes: int = 3,
    *,
    dropout: float = 0.5,
    lstm_seq_len: int = 1,
    seed: int | None = None,
) -> SlagCNNLSTM:
    spec = ModelSpec(ModelKind.CNN_LSTM, in_channels, num_classes, dropout, lstm_seq_len)
    return _seeded(seed, lambda: SlagCNNLSTM(spec))


def build_model(spec: ModelSpec, seed: int | None = None) -> nn.Module:
    cls = SlagCNN if spec.kind is ModelKind.CNN else SlagCNNLSTM
    return _seeded(seed, lambda: cls(spec))


def feature_length(spec: ModelSpec, length: int) -> int:
    """Length of the signal right before the adaptive pool; must stay >= 1."""
    if spec.kind is ModelKind.CNN:
        stages = [(15, 0, False), (3, 0, True), (3, 0, False), (3, 0, False)]
    else:
        stages = [(5, 3, False), (3, 2, True), (3, 1, False), (3, 1, False)]
    n = length
    for kernel, pad, pool in stages:
        n = n + 2 * pad - kernel + 1
        if n < 1:
            return n
        if pool:
            n = (n - 2) // 2 + 1
            if n < 1:
                return n
    return n


def min_input_length(spec: ModelSpec) -> int:
    n = 1
    while feature_length(spec, n) < 1:
        n += 1
    return n


def _as_tensor(inputs) -> torch.Tensor:
    if hasattr(inputs, "inputs"):  # Batch
        inputs = inputs.inputs
    if isinstance(inputs, torch.Tensor):
        return inputs
    return torch.as_tensor(np.asarray(inputs, dtype=np.float32))


def forward(model: nn.Module, inputs, mode: Mode = Mode.EVAL) -> torch.Tensor:
    """Run a forward pass with shape checks. EVAL mode disables dropout and uses running BN stats."""
    x = _as_tensor(inputs)
    spec = model.spec
    if x.ndim != 3 or x.shape[1] != spec.in_channels:
        raise ShapeError(f"expected input (batch, {spec.in_channels}, length), got {tuple(x.shape)}")
    if x.shape[2] < min_input_length(spec):
        raise ShapeError(
            f"input length {x.shape[2]} is below the minimum {min_input_length(spec)} for {spec.kind.value}"
        )
    param = next(model.parameters())
    x = x.to(dtype=param.dtype)
    if mode is Mode.TRAIN:
        model.train()
        logits = model(x)
    else:
        model.eval()
        with torch.no_grad():
            logits = model(x)
    if not torch.isfinite(logits).all():
        raise NonFiniteActivation("non-finite logits")
    return logits


def predict_proba(logits) -> np.ndarray:
    """Softmax over the last axis."""
    if isinstance(logits, torch.Tensor):
        logits = logits.detach().cpu().numpy()
    z = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(z).all():
        raise NonFiniteInput("logits must be finite")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def save_checkpoint(model: nn.Module, path, extra: dict | None = None) -> Path:
    """Write spec, weights and BN running statistics to a self-describing ``.npz`` file."""
    path = Path(path)
    state = model.state_dict()
    meta = {
        "format": "slagflow-checkpoint",
        "version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
        "keys": list(state),
        "extra": extra or {},
    }
    arrays = {f"p{i}": t.detach().cpu().numpy() for i, t in enumerate(state.values())}
    with path.open("wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)
    return path


def load_checkpoint(path) -> tuple[nn.Module, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != "slagflow-checkpoint" or meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint format")
        state = {k: torch.from_numpy(np.array(data[f"p{i}"])) for i, k in enumerate(meta["keys"])}
    model = build_model(ModelSpec.from_dict(meta["spec"]))
    model.load_state_dict(state)
    model.eval()
    return model, meta["extra"]
