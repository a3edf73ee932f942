"""Target speaker identification system.

A small 1-D convolutional embedding network trained with an
additive-angular-margin softmax head, plus cosine scoring against
unit-norm enrollment centroids and the closed-set / open-set decision
rules. The head is used only during training and discarded afterwards.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from sklearn.base import BaseEstimator, TransformerMixin

from .audio import Waveform
from .errors import (
    InsufficientData,
    InvalidArguments,
    InvalidTarget,
    IOFailure,
    NotFitted,
    UnknownSpeaker,
)
from .validation import check_waveform_batch, check_target_position

REJECT = 0

_CHANNELS = (32, 32, 64, 64)
_KERNELS = (7, 5, 3, 3)
_STRIDES = (4, 4, 2, 2)


class EmbeddingNet(nn.Module):
    """Strided conv trunk with mean+std statistics pooling."""

    def __init__(self, embedding_dim: int = 64):
        super().__init__()
        blocks = []
        in_ch = 1
        for out_ch, k, s in zip(_CHANNELS, _KERNELS, _STRIDES):
            blocks += [
                nn.Conv1d(in_ch, out_ch, k, stride=s, padding=k // 2),
                nn.BatchNorm1d(out_ch),
                nn.ReLU(),
            ]
            in_ch = out_ch
        self.trunk = nn.Sequential(*blocks)
        self.projection = nn.Linear(2 * in_ch, embedding_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 1:
            x = x.unsqueeze(0)
        h = self.trunk(x.unsqueeze(1))
        mean = h.mean(dim=-1)
        # Biased variance; eps keeps the sqrt differentiable on constant maps.
        std = torch.sqrt(h.var(dim=-1, unbiased=False) + 1e-8)
        return self.projection(torch.cat([mean, std], dim=-1))


class AngularMarginHead(nn.Module):
    """Additive angular margin softmax logits (train-time only)."""

    def __init__(self, embedding_dim: int, n_classes: int, margin: float = 0.2, scale: float = 30.0):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(n_classes, embedding_dim))
        nn.init.xavier_uniform_(self.weight)
        self.margin = margin
        self.scale = scale

    def forward(self, emb: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        cos = nn.functional.normalize(emb) @ nn.functional.normalize(self.weight).t()
        sin = torch.sqrt((1.0 - cos.pow(2)).clamp_min(1e-12))
        cos_m = math.cos(self.margin)
        sin_m = math.sin(self.margin)
        phi = cos * cos_m - sin * sin_m
        # Past the margin's valid region fall back to a linear penalty.
        phi = torch.where(cos > math.cos(math.pi - self.margin), phi, cos - self.margin * sin_m)
        onehot = nn.functional.one_hot(labels, cos.shape[1]).bool()
        return self.scale * torch.where(onehot, phi, cos)


class SpeakerEncoder(TransformerMixin, BaseEstimator):
    """Trainable waveform-to-embedding transformer.

    fit(X, y) trains the trunk on labeled waveforms; transform(X) maps
    waveforms to embeddings. Training is deterministic for a fixed seed.
    """

    def __init__(
        self,
        embedding_dim: int = 64,
        epochs: int = 30,
        lr: float = 1e-3,
        batch_size: int = 8,
        margin: float = 0.2,
        scale: float = 30.0,
        seed: int = 0,
    ):
        self.embedding_dim = embedding_dim
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.margin = margin
        self.scale = scale
        self.seed = seed

    def fit(self, X, y):
        X = check_waveform_batch(X, "X")
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise InvalidArguments(f"y must have shape ({X.shape[0]},), got {y.shape}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArguments("epochs and batch_size must be positive")
        if self.lr <= 0:
            raise InvalidArguments("lr must be positive")

        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise InvalidArguments("need at least 2 speakers to train")
        label_of = {c: i for i, c in enumerate(self.classes_)}
        labels = torch.as_tensor([label_of[c] for c in y], dtype=torch.long)

        torch.manual_seed(self.seed)
        net = EmbeddingNet(self.embedding_dim)
        head = AngularMarginHead(self.embedding_dim, self.classes_.size, self.margin, self.scale)
        opt = torch.optim.Adam(list(net.parameters()) + list(head.parameters()), lr=self.lr)
        xt = torch.as_tensor(X, dtype=torch.float32)
        rng = np.random.default_rng(self.seed)

        net.train()
        head.train()
        self.history_ = []
        n = X.shape[0]
        for _ in range(self.epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                logits = head(net(xt[idx]), labels[idx])
                loss = nn.functional.cross_entropy(logits, labels[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss.detach()) * idx.size
            self.history_.append(total / n)

        net.eval()
        self.net_ = net
        self.n_features_in_ = X.shape[1]
        return self

    def _require_fitted(self) -> None:
        if not hasattr(self, "net_"):
            raise NotFitted("SpeakerEncoder is not fitted")

    def transform(self, X) -> np.ndarray:
        self._require_fitted()
        X = check_waveform_batch(X, "X")
        # Follow the net's dtype so a float64 copy scores in float64.
        dtype = next(self.net_.parameters()).dtype
        with torch.no_grad():
            z = self.net_(torch.as_tensor(X, dtype=dtype))
        return z.numpy().astype(np.float64)

    def embed(self, w) -> np.ndarray:
        samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
        return self.transform(samples[None, :])[0]


@dataclass(frozen=True)
class EnrollmentDB:
    """Unit-norm centroids in enrollment order; positions are 1-based."""

    speaker_ids: tuple[int, ...]
    centroids: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != len(self.speaker_ids):
            raise InvalidArguments("centroids must be (n_speakers, dim)")
        norms = np.linalg.norm(c, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise InvalidArguments("centroids must be unit-norm")
        object.__setattr__(self, "centroids", c)

    @property
    def n_enrolled(self) -> int:
        return len(self.speaker_ids)

    def position_of(self, speaker_id: int) -> int:
        try:
            return self.speaker_ids.index(int(speaker_id)) + 1
        except ValueError:
            raise UnknownSpeaker(f"speaker {speaker_id} is not enrolled") from None


def enroll(encoder: SpeakerEncoder, X, y, speaker_ids=None, utts_per_speaker=None) -> EnrollmentDB:
    """Average unit-norm embeddings per speaker and renormalize."""
    X = check_waveform_batch(X, "X")
    y = np.asarray(y)
    if speaker_ids is None:
        speaker_ids = sorted(set(int(v) for v in y))
    speaker_ids = [int(s) for s in speaker_ids]
    if len(set(speaker_ids)) != len(speaker_ids):
        raise InvalidArguments("duplicate speaker ids in enrollment list")

    Z = encoder.transform(X)
    Z = Z / np.maximum(np.linalg.norm(Z, axis=1, keepdims=True), 1e-12)
    centroids = []
    for sid in speaker_ids:
        rows = np.flatnonzero(y == sid)
        if rows.size == 0:
            raise InsufficientData(f"no enrollment utterances for speaker {sid}")
        if utts_per_speaker is not None:
            rows = rows[: int(utts_per_speaker)]
        c = Z[rows].mean(axis=0)
        norm = np.linalg.norm(c)
        if norm < 1e-12:
            raise InsufficientData(f"degenerate centroid for speaker {sid}")
        centroids.append(c / norm)
    return EnrollmentDB(speaker_ids=tuple(speaker_ids), centroids=np.stack(centroids))


def score(encoder: SpeakerEncoder, db: EnrollmentDB, w) -> np.ndarray:
    """Cosine similarity of one utterance against every enrolled centroid."""
    z = encoder.embed(w)
    z = z / max(np.linalg.norm(z), 1e-12)
    return db.centroids @ z


def decide_csi(scores) -> int:
    """1-based argmax; ties go to the lowest position."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise InvalidArguments("scores must be a non-empty 1-D array")
    return int(np.argmax(s)) + 1


def decide_osi(scores, theta: float) -> int:
    """1-based argmax when the best score reaches theta, else REJECT (0)."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise InvalidArguments("scores must be a non-empty 1-D array")
    best = int(np.argmax(s))
    return best + 1 if s[best] >= theta else REJECT


def calibrate_threshold(encoder: SpeakerEncoder, db: EnrollmentDB, imposter_X, target_far: float) -> float:
    """Smallest theta whose imposter acceptance rate is at most target_far."""
    X = check_waveform_batch(imposter_X, "imposter_X")
    if X.shape[0] < 20:
        raise InsufficientData(f"need at least 20 imposter utterances, got {X.shape[0]}")
    if not 0.0 <= target_far <= 1.0:
        raise InvalidArguments(f"target_far must be in [0, 1], got {target_far}")

    # Score one utterance at a time: decide_osi consumes score() outputs, and
    # float32 batch kernels can disagree with the single-utterance path by
    # more than the nextafter step used below.
    max_scores = np.array([score(encoder, db, X[i]).max() for i in range(X.shape[0])])

    n = max_scores.size
    allowed = math.floor(target_far * n)
    if allowed >= n:
        return -1.0
    order = np.sort(max_scores)[::-1]
    return float(np.nextafter(order[allowed], np.inf))


@dataclass
class TargetSystem:
    """Frozen encoder + enrollment + task, the attack surface.

    theta must be present exactly when task is "osi".
    """

    encoder: SpeakerEncoder
    db: EnrollmentDB
    task: str = "csi"
    theta: float | None = None

    def __post_init__(self):
        if self.task not in ("csi", "osi"):
            raise InvalidArguments(f"task must be 'csi' or 'osi', got {self.task!r}")
        if self.task == "osi" and self.theta is None:
            raise InvalidArguments("osi task requires a threshold")
        if self.task == "csi" and self.theta is not None:
            raise InvalidArguments("csi task takes no threshold")
        self.encoder._require_fitted()
        self._centroids_t = torch.as_tensor(self.db.centroids, dtype=torch.float32)

    @property
    def n_enrolled(self) -> int:
        return self.db.n_enrolled

    def check_target(self, target: int) -> int:
        return check_target_position(target, self.db.n_enrolled)

    def scores_tensor(self, x: torch.Tensor) -> torch.Tensor:
        """Differentiable cosine scores, shape (batch, n_enrolled)."""
        if x.dim() == 1:
            x = x.unsqueeze(0)
        z = self.encoder.net_(x)
        z = z / torch.linalg.vector_norm(z, dim=-1, keepdim=True).clamp_min(1e-12)
        return z @ self._centroids_t.to(x.dtype).t()

    def embed_tensor(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 1:
            x = x.unsqueeze(0)
        return self.encoder.net_(x)

    def scores(self, w) -> np.ndarray:
        return score(self.encoder, self.db, w)

    def decide(self, w) -> int:
        s = self.scores(w)
        return decide_csi(s) if self.task == "csi" else decide_osi(s, self.theta)

    def speaker_loss(self, scores_t: torch.Tensor, target: int) -> torch.Tensor:
        from . import losses

        if self.task == "csi":
            return losses.loss_speaker_csi(scores_t, target)
        return losses.loss_speaker_osi(scores_t, target, self.theta)

    def double(self) -> "TargetSystem":
        """Float64 deep copy, for finite-difference checks."""
        enc = copy.deepcopy(self.encoder)
        enc.net_ = enc.net_.double()
        system = TargetSystem(encoder=enc, db=self.db, task=self.task, theta=self.theta)
        system._centroids_t = torch.as_tensor(self.db.centroids, dtype=torch.float64)
        return system


def save_encoder(encoder: SpeakerEncoder, path, meta: dict | None = None) -> None:
    encoder._require_fitted()
    path = Path(path)
    try:
        torch.save(encoder.net_.state_dict(), path)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc
    sidecar = {
        "params": encoder.get_params(),
        "classes": [int(c) for c in encoder.classes_],
        "n_features_in": int(encoder.n_features_in_),
        "history": list(encoder.history_),
    }
    if meta:
        sidecar.update(meta)
    path.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_encoder(path) -> tuple[SpeakerEncoder, dict]:
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not path.exists() or not sidecar_path.exists():
        raise IOFailure(f"missing checkpoint {path} or sidecar {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    encoder = SpeakerEncoder(**sidecar["params"])
    net = EmbeddingNet(encoder.embedding_dim)
    net.load_state_dict(torch.load(path, weights_only=True))
    net.eval()
    encoder.net_ = net
    encoder.classes_ = np.asarray(sidecar["classes"])
    encoder.n_features_in_ = int(sidecar["n_features_in"])
    encoder.history_ = list(sidecar["history"])
    return encoder, sidecar


def save_enrollment(db: EnrollmentDB, path, meta: dict | None = None) -> None:
    doc = {
        "speaker_ids": list(db.speaker_ids),
        "centroids": db.centroids.tolist(),
    }
    if meta:
        doc.update(meta)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_enrollment(path) -> tuple[EnrollmentDB, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    db = EnrollmentDB(
        speaker_ids=tuple(int(s) for s in doc["speaker_ids"]),
        centroids=np.asarray(doc["centroids"], dtype=np.float64),
    )
    return db, doc
