"""Saliency-gated encoder-decoder attack.

One shared convolutional encoder maps an utterance to a latent sequence;
two transposed-convolution decoders map the latent back to sample rate:
a noise decoder (tanh) and a saliency decoder (sigmoid). The perturbation
is epsilon * (noise ⊙ mask) and the adversarial utterance is clipped to
[-1, 1] inside the training graph. A generator is trained per target
speaker and task.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from sklearn.base import BaseEstimator, TransformerMixin

from . import losses
from .audio import Waveform
from .errors import InvalidArguments, IOFailure, NotFitted
from .target import TargetSystem
from .validation import check_waveform_batch

_ENC_CHANNELS = (16, 32, 64)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv1d(channels, channels, 3, padding=1),
            nn.BatchNorm1d(channels),
            nn.ReLU(),
            nn.Conv1d(channels, channels, 3, padding=1),
            nn.BatchNorm1d(channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.relu(x + self.body(x))


class LatentEncoder(nn.Module):
    """Three conv blocks (kernels 7, 3, 3; strides 1, 2, 2) + residual stack."""

    def __init__(self, channels=_ENC_CHANNELS, n_residual: int = 6):
        super().__init__()
        c1, c2, c3 = channels
        self.blocks = nn.Sequential(
            nn.Conv1d(1, c1, 7, stride=1, padding=3),
            nn.BatchNorm1d(c1),
            nn.ReLU(),
            nn.Conv1d(c1, c2, 3, stride=2, padding=1),
            nn.BatchNorm1d(c2),
            nn.ReLU(),
            nn.Conv1d(c2, c3, 3, stride=2, padding=1),
            nn.BatchNorm1d(c3),
            nn.ReLU(),
            *[ResidualBlock(c3) for _ in range(n_residual)],
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.blocks(x)


class SampleDecoder(nn.Module):
    """Three transposed conv blocks (kernels 3, 3, 7; strides 2, 2, 1).

    Undoes the encoder's downsampling; the output is cropped to the
    requested length and squashed by the given activation.
    """

    def __init__(self, activation: nn.Module, channels=_ENC_CHANNELS, out_bias: float = 0.0):
        super().__init__()
        c1, c2, c3 = channels
        self.blocks = nn.Sequential(
            nn.ConvTranspose1d(c3, c2, 3, stride=2, padding=1, output_padding=1),
            nn.BatchNorm1d(c2),
            nn.ReLU(),
            nn.ConvTranspose1d(c2, c1, 3, stride=2, padding=1, output_padding=1),
            nn.BatchNorm1d(c1),
            nn.ReLU(),
            nn.ConvTranspose1d(c1, 1, 7, stride=1, padding=3),
        )
        with torch.no_grad():
            self.blocks[-1].bias.fill_(out_bias)
        self.activation = activation

    def forward(self, latent: torch.Tensor, length: int) -> torch.Tensor:
        out = self.blocks(latent)[..., :length]
        return self.activation(out)


class PerturbationGenerator(nn.Module):
    """Shared encoder with noise and saliency heads."""

    def __init__(self, channels=_ENC_CHANNELS, n_residual: int = 6, use_saliency: bool = True):
        super().__init__()
        self.encoder = LatentEncoder(channels, n_residual)
        self.noise_decoder = SampleDecoder(nn.Tanh(), channels)
        # The saliency head opens from a nearly closed mask so coverage is
        # grown by the speaker loss only where it pays; a zero-bias start
        # saturates the sigmoid at full coverage within a few epochs.
        self.mask_decoder = (
            SampleDecoder(nn.Sigmoid(), channels, out_bias=-2.0) if use_saliency else None
        )

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """x: (batch, length) -> noise, mask of the same shape.

        Without a saliency head the mask is a constant one.
        """
        length = x.shape[-1]
        latent = self.encoder(x.unsqueeze(1))
        noise = self.noise_decoder(latent, length).squeeze(1)
        if self.mask_decoder is None:
            mask = torch.ones_like(noise)
        else:
            mask = self.mask_decoder(latent, length).squeeze(1)
        return noise, mask


@dataclass
class AttackOutput:
    """Per-utterance attack result; mask fields are None for maskless attacks."""

    x_adv: Waveform
    delta: np.ndarray
    noise: np.ndarray | None = None
    mask: np.ndarray | None = None
    mask_norm: np.ndarray | None = None
    converged: bool = True
    gen_time_s: float = 0.0


@dataclass
class LossBreakdown:
    total: torch.Tensor
    snr: torch.Tensor
    asr: torch.Tensor


def composite_loss(
    generator: PerturbationGenerator,
    system: TargetSystem,
    x: torch.Tensor,
    clean_z: torch.Tensor,
    target: int,
    epsilon: float,
    lambda_s: float,
    lambda_a: float,
    lambda_f: float,
    lambda_n: float,
    symmetric_norm: bool = False,
) -> LossBreakdown:
    """Full training objective on one batch, differentiable end to end."""
    noise, mask = generator(x)
    delta = losses.perturbation(noise, mask, epsilon)
    x_adv = torch.clamp(x + delta, -1.0, 1.0)

    if generator.mask_decoder is None:
        snr_part = lambda_n * (
            losses.loss_norm_symmetric(x, x_adv) if symmetric_norm else losses.loss_norm(x, x_adv)
        )
    else:
        mask_norm = losses.normalize_mask(mask)
        norm_part = (
            losses.loss_norm_symmetric(x, x_adv) if symmetric_norm else losses.loss_norm(x, x_adv)
        )
        snr_part = lambda_f * losses.loss_f(mask_norm) + lambda_n * norm_part

    scores = system.scores_tensor(x_adv)
    z_adv = system.embed_tensor(x_adv)
    asr_part = losses.loss_asr(
        system.speaker_loss(scores, target),
        losses.loss_angular(clean_z, z_adv),
        lambda_s,
        lambda_a,
    )
    return LossBreakdown(total=losses.loss_total(snr_part, asr_part), snr=snr_part, asr=asr_part)


class SaliencyEncoderDecoderAttack(TransformerMixin, BaseEstimator):
    """Trainable impersonation attack against a frozen target system.

    fit(X) trains the generator on attacker-side waveforms; transform(X)
    and attack(w) produce adversarial audio with a fixed infinity-norm
    budget of epsilon.
    """

    def __init__(
        self,
        target_system: TargetSystem,
        target: int = 1,
        epsilon: float = 0.05,
        lambda_s: float = 1.0,
        lambda_a: float = 1.0,
        lambda_f: float = 0.1,
        lambda_n: float = 1.0,
        epochs: int = 10,
        lr: float = 1e-3,
        batch_size: int = 8,
        n_residual: int = 6,
        use_saliency: bool = True,
        symmetric_norm: bool = False,
        seed: int = 0,
    ):
        self.target_system = target_system
        self.target = target
        self.epsilon = epsilon
        self.lambda_s = lambda_s
        self.lambda_a = lambda_a
        self.lambda_f = lambda_f
        self.lambda_n = lambda_n
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.n_residual = n_residual
        self.use_saliency = use_saliency
        self.symmetric_norm = symmetric_norm
        self.seed = seed

    def _validate_params_strict(self) -> None:
        self.target_system.check_target(self.target)
        if not 0.0 < self.epsilon <= 1.0:
            raise InvalidArguments(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.epochs < 1 or self.batch_size < 1 or self.n_residual < 0:
            raise InvalidArguments("epochs and batch_size must be positive, n_residual >= 0")
        if self.lr <= 0:
            raise InvalidArguments("lr must be positive")
        for name in ("lambda_s", "lambda_a", "lambda_f", "lambda_n"):
            if getattr(self, name) < 0:
                raise InvalidArguments(f"{name} must be non-negative")

    def fit(self, X, y=None):
        self._validate_params_strict()
        X = check_waveform_batch(X, "X")

        torch.manual_seed(self.seed)
        generator = PerturbationGenerator(n_residual=self.n_residual, use_saliency=self.use_saliency)
        opt = torch.optim.Adam(generator.parameters(), lr=self.lr)
        xt = torch.as_tensor(X, dtype=torch.float32)
        with torch.no_grad():
            clean_z = self.target_system.embed_tensor(xt)
        rng = np.random.default_rng(self.seed)

        generator.train()
        self.loss_curve_ = []
        n = X.shape[0]
        for _ in range(self.epochs):
            order = rng.permutation(n)
            sums = np.zeros(3)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                parts = composite_loss(
                    generator,
                    self.target_system,
                    xt[idx],
                    clean_z[idx],
                    self.target,
                    self.epsilon,
                    self.lambda_s,
                    self.lambda_a,
                    self.lambda_f,
                    self.lambda_n,
                    self.symmetric_norm,
                )
                opt.zero_grad()
                parts.total.backward()
                opt.step()
                sums += idx.size * np.array(
                    [
                        float(parts.total.detach()),
                        float(parts.snr.detach()),
                        float(parts.asr.detach()),
                    ]
                )
            self.loss_curve_.append(
                {"total": sums[0] / n, "snr": sums[1] / n, "asr": sums[2] / n}
            )

        generator.eval()
        self.generator_ = generator
        self.n_features_in_ = X.shape[1]
        return self

    def _require_fitted(self) -> None:
        if not hasattr(self, "generator_"):
            raise NotFitted("SaliencyEncoderDecoderAttack is not fitted")

    def _forward_single(self, samples: np.ndarray):
        x = torch.as_tensor(samples, dtype=torch.float32).unsqueeze(0)
        with torch.no_grad():
            noise, mask = self.generator_(x)
        noise = noise[0].numpy().astype(np.float64)
        mask = mask[0].numpy().astype(np.float64)
        # Composed in float64 so delta reconstructs exactly from (noise, mask, eps).
        delta = float(self.epsilon) * noise * mask
        x_adv = np.clip(samples + delta, -1.0, 1.0)
        return noise, mask, delta, x_adv

    def attack(self, w) -> AttackOutput:
        """Single generator forward pass; the target system is not queried.

        The reported delta is epsilon*(noise ⊙ mask) before clipping, so it
        reconstructs exactly from the reported noise and mask; x_adv is
        clip(x + delta).
        """
        self._require_fitted()
        samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
        t0 = time.perf_counter()
        noise, mask, delta, x_adv = self._forward_single(samples)
        elapsed = time.perf_counter() - t0
        mask_norm = losses.normalize_mask(torch.as_tensor(mask)).numpy()
        return AttackOutput(
            x_adv=Waveform(x_adv),
            delta=delta,
            noise=noise,
            mask=mask,
            mask_norm=mask_norm,
            gen_time_s=elapsed,
        )

    def transform(self, X) -> np.ndarray:
        self._require_fitted()
        X = check_waveform_batch(X, "X")
        return np.stack([self._forward_single(row)[3] for row in X])


def save_attacker(attack: SaliencyEncoderDecoderAttack, path, meta: dict | None = None) -> None:
    attack._require_fitted()
    path = Path(path)
    try:
        torch.save(attack.generator_.state_dict(), path)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc
    params = {k: v for k, v in attack.get_params().items() if k != "target_system"}
    sidecar = {
        "params": params,
        "n_features_in": int(attack.n_features_in_),
        "loss_curve": attack.loss_curve_,
    }
    if meta:
        sidecar.update(meta)
    path.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_attacker(path, target_system: TargetSystem) -> tuple[SaliencyEncoderDecoderAttack, dict]:
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not path.exists() or not sidecar_path.exists():
        raise IOFailure(f"missing checkpoint {path} or sidecar {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    attack = SaliencyEncoderDecoderAttack(target_system=target_system, **sidecar["params"])
    generator = PerturbationGenerator(
        n_residual=attack.n_residual, use_saliency=attack.use_saliency
    )
    generator.load_state_dict(torch.load(path, weights_only=True))
    generator.eval()
    attack.generator_ = generator
    attack.n_features_in_ = int(sidecar["n_features_in"])
    attack.loss_curve_ = list(sidecar["loss_curve"])
    return attack, sidecar
