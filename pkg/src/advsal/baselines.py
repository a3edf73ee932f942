"""Reference attacks: FGSM, iterative FGSM, and Carlini-Wagner L2.

All three are white-box attacks against the same frozen target system
and share the AttackOutput contract with the generator-based attack.
The one-step and iterative sign attacks run through a single descent
routine, so the one-step attack is bit-identical to the iterative one
with a single iteration and a full-size step.
"""

from __future__ import annotations

import time

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin

from .audio import Waveform
from .errors import InvalidArguments, NotFitted
from .ssed import AttackOutput
from .target import TargetSystem, decide_csi, decide_osi
from .validation import check_waveform_batch


def _to_samples(w) -> np.ndarray:
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def _sign_descent(
    system: TargetSystem, target: int, samples: np.ndarray, epsilon: float, step: float, iterations: int
) -> np.ndarray:
    """Projected gradient-sign descent on the speaker loss.

    Each iterate stays inside the epsilon ball around the input and
    inside the valid amplitude range. Returns the float64 perturbation,
    which is exactly zero when epsilon is zero.
    """
    x0 = torch.as_tensor(samples, dtype=torch.float32)
    x = x0.clone()
    for _ in range(iterations):
        x.requires_grad_(True)
        loss = system.speaker_loss(system.scores_tensor(x.unsqueeze(0)), target)
        (grad,) = torch.autograd.grad(loss, x)
        with torch.no_grad():
            x = x - step * torch.sign(grad)
            x = x0 + torch.clamp(x - x0, -epsilon, epsilon)
            x = torch.clamp(x, -1.0, 1.0)
    return (x - x0).numpy().astype(np.float64)


class _SignAttackBase(TransformerMixin, BaseEstimator):
    """Common plumbing for the training-free sign attacks."""

    def _budget(self) -> tuple[float, float, int]:
        raise NotImplementedError

    def _validate(self) -> None:
        self.target_system.check_target(self.target)
        epsilon, step, iterations = self._budget()
        if not 0.0 <= epsilon <= 1.0:
            raise InvalidArguments(f"epsilon must be in [0, 1], got {epsilon}")
        if step < 0 or step > epsilon:
            raise InvalidArguments(f"step must be in [0, epsilon], got {step}")
        if iterations < 1:
            raise InvalidArguments(f"iterations must be >= 1, got {iterations}")

    def fit(self, X=None, y=None):
        self._validate()
        self.fitted_ = True
        return self

    def _require_fitted(self) -> None:
        if not getattr(self, "fitted_", False):
            raise NotFitted(f"{type(self).__name__} is not fitted")

    def attack(self, w) -> AttackOutput:
        self._require_fitted()
        samples = _to_samples(w)
        epsilon, step, iterations = self._budget()
        t0 = time.perf_counter()
        delta = _sign_descent(self.target_system, self.target, samples, epsilon, step, iterations)
        elapsed = time.perf_counter() - t0
        x_adv = np.clip(samples + delta, -1.0, 1.0)
        return AttackOutput(x_adv=Waveform(x_adv), delta=delta, gen_time_s=elapsed)

    def transform(self, X) -> np.ndarray:
        self._require_fitted()
        X = check_waveform_batch(X, "X")
        return np.stack([self.attack(row).x_adv.samples for row in X])


class FastGradientSignAttack(_SignAttackBase):
    """Single signed gradient step of size epsilon."""

    def __init__(self, target_system: TargetSystem, target: int = 1, epsilon: float = 0.05):
        self.target_system = target_system
        self.target = target
        self.epsilon = epsilon

    def _budget(self):
        return float(self.epsilon), float(self.epsilon), 1


class IterativeGradientSignAttack(_SignAttackBase):
    """k signed steps with projection back into the epsilon ball.

    step defaults to epsilon / 5. With iterations=1 and step=epsilon the
    result equals the one-step attack bit for bit.
    """

    def __init__(
        self,
        target_system: TargetSystem,
        target: int = 1,
        epsilon: float = 0.05,
        step: float | None = None,
        iterations: int = 10,
    ):
        self.target_system = target_system
        self.target = target
        self.epsilon = epsilon
        self.step = step
        self.iterations = iterations

    def _budget(self):
        step = self.epsilon / 5.0 if self.step is None else float(self.step)
        return float(self.epsilon), step, int(self.iterations)


class CarliniWagnerL2Attack(TransformerMixin, BaseEstimator):
    """L2-minimal attack via a tanh change of variable.

    Minimizes ||x' - x||_2^2 + c * max(speaker_loss, -kappa) with Adam
    and keeps the best successful iterate. An unsuccessful run returns
    the final iterate with converged=False instead of raising.
    """

    def __init__(
        self,
        target_system: TargetSystem,
        target: int = 1,
        c: float = 1000.0,
        steps: int = 100,
        lr: float = 0.01,
        kappa: float = 0.0,
    ):
        self.target_system = target_system
        self.target = target
        self.c = c
        self.steps = steps
        self.lr = lr
        self.kappa = kappa

    def fit(self, X=None, y=None):
        self.target_system.check_target(self.target)
        if self.c < 0:
            raise InvalidArguments(f"c must be non-negative, got {self.c}")
        if self.steps < 1:
            raise InvalidArguments(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0 or self.kappa < 0:
            raise InvalidArguments("lr must be positive and kappa non-negative")
        self.fitted_ = True
        return self

    def _decision(self, scores: np.ndarray) -> int:
        system = self.target_system
        return (
            decide_csi(scores)
            if system.task == "csi"
            else decide_osi(scores, system.theta)
        )

    def attack(self, w) -> AttackOutput:
        if not getattr(self, "fitted_", False):
            raise NotFitted("CarliniWagnerL2Attack is not fitted")
        samples = _to_samples(w)
        system = self.target_system
        t0 = time.perf_counter()

        x0 = torch.as_tensor(samples, dtype=torch.float32)
        # atanh needs |x| < 1; the shrink keeps the inverse finite.
        v = torch.atanh(x0.clamp(-1.0 + 1e-6, 1.0 - 1e-6)).requires_grad_(True)
        opt = torch.optim.Adam([v], lr=self.lr)

        best: torch.Tensor | None = None
        best_l2 = np.inf
        for _ in range(self.steps):
            x_adv = torch.tanh(v)
            l2 = (x_adv - x0).pow(2).sum()
            speaker = system.speaker_loss(system.scores_tensor(x_adv.unsqueeze(0)), self.target)
            objective = l2 + self.c * torch.clamp(speaker, min=-self.kappa)
            opt.zero_grad()
            objective.backward()
            opt.step()

            with torch.no_grad():
                cand = torch.tanh(v)
                scores = system.scores_tensor(cand.unsqueeze(0))[0].numpy()
                if self._decision(scores) == system.check_target(self.target):
                    cand_l2 = float((cand - x0).pow(2).sum())
                    if cand_l2 < best_l2:
                        best_l2 = cand_l2
                        best = cand.clone()

        if best is None:
            with torch.no_grad():
                best = torch.tanh(v)
            converged = False
        else:
            converged = True
        delta = (best - x0).numpy().astype(np.float64)
        elapsed = time.perf_counter() - t0
        x_adv = np.clip(samples + delta, -1.0, 1.0)
        return AttackOutput(
            x_adv=Waveform(x_adv),
            delta=delta,
            converged=converged,
            gen_time_s=elapsed,
        )

    def transform(self, X) -> np.ndarray:
        X = check_waveform_batch(X, "X")
        return np.stack([self.attack(row).x_adv.samples for row in X])


class CleanPassThrough(TransformerMixin, BaseEstimator):
    """No-attack reference: emits the input unchanged (delta = 0)."""

    def __init__(self, target_system: TargetSystem | None = None, target: int = 1):
        self.target_system = target_system
        self.target = target

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def attack(self, w) -> AttackOutput:
        samples = _to_samples(w)
        return AttackOutput(
            x_adv=Waveform(samples.copy()),
            delta=np.zeros_like(samples),
            gen_time_s=0.0,
        )

    def transform(self, X) -> np.ndarray:
        X = check_waveform_batch(X, "X")
        return X.copy()
