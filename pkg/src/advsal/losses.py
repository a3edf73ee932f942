"""Differentiable objective pieces for the attacks.

Every function accepts either a single utterance (1-D) or a batch
(leading batch dimension) and reduces to a scalar tensor by averaging
over the batch. Inputs may be lists, numpy arrays, or torch tensors;
float inputs keep their dtype so the functions can run in float64.
"""

from __future__ import annotations

import torch

from .errors import InvalidArguments, InvalidTarget, LengthMismatch

COSINE_FLOOR = 1e-12


def _as_float_tensor(x) -> torch.Tensor:
    t = torch.as_tensor(x)
    if not torch.is_floating_point(t):
        t = t.to(torch.get_default_dtype())
    return t


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise LengthMismatch(f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


def normalize_mask(m) -> torch.Tensor:
    """Min-max normalize along the last axis; a constant mask maps to zeros."""
    m = _as_float_tensor(m)
    lo = m.amin(dim=-1, keepdim=True)
    hi = m.amax(dim=-1, keepdim=True)
    span = hi - lo
    safe = torch.where(span > 0, span, torch.ones_like(span))
    return torch.where(span > 0, (m - lo) / safe, torch.zeros_like(m))


def perturbation(noise, mask, epsilon: float) -> torch.Tensor:
    """delta = epsilon * (noise ⊙ mask), the raw mask, not the normalized one."""
    n = _as_float_tensor(noise)
    m = _as_float_tensor(mask)
    _check_same_shape(n, m, "perturbation")
    return float(epsilon) * n * m


def loss_f(mask_norm) -> torch.Tensor:
    """L2 norm of the normalized mask over samples, averaged over the batch."""
    m = _as_float_tensor(mask_norm)
    return torch.linalg.vector_norm(m, dim=-1).mean()


def loss_norm(x, x_adv) -> torch.Tensor:
    """One-sided hinge on negative-going deviation: mean of relu(x - x')^2."""
    x = _as_float_tensor(x)
    x_adv = _as_float_tensor(x_adv)
    _check_same_shape(x, x_adv, "loss_norm")
    return torch.relu(x - x_adv).pow(2).mean()


def loss_norm_symmetric(x, x_adv) -> torch.Tensor:
    """Two-sided variant: mean squared perturbation."""
    x = _as_float_tensor(x)
    x_adv = _as_float_tensor(x_adv)
    _check_same_shape(x, x_adv, "loss_norm_symmetric")
    return (x_adv - x).pow(2).mean()


def loss_snr(mask_norm, x, x_adv, lambda_f: float, lambda_n: float) -> torch.Tensor:
    return lambda_f * loss_f(mask_norm) + lambda_n * loss_norm(x, x_adv)


def loss_angular(z, z_adv) -> torch.Tensor:
    """Mean cosine similarity between clean and adversarial embeddings.

    Minimizing this pushes the adversarial embedding away from the clean
    one. The denominator is floored so a zero embedding yields 0, not NaN.
    """
    z = _as_float_tensor(z)
    z_adv = _as_float_tensor(z_adv)
    _check_same_shape(z, z_adv, "loss_angular")
    dot = (z * z_adv).sum(dim=-1)
    denom = torch.linalg.vector_norm(z, dim=-1) * torch.linalg.vector_norm(z_adv, dim=-1)
    return (dot / denom.clamp_min(COSINE_FLOOR)).mean()


def _check_scores_target(s: torch.Tensor, target: int, min_k: int) -> int:
    k = s.shape[-1]
    if k < min_k:
        raise InvalidArguments(f"need at least {min_k} enrolled score(s), got {k}")
    target = int(target)
    if not 1 <= target <= k:
        raise InvalidTarget(f"target position {target} outside 1..{k}")
    return target


def loss_speaker_csi(scores, target: int) -> torch.Tensor:
    """Closed-set margin: best non-target score minus target score.

    Negative iff the target speaker already wins. `target` is a 1-based
    enrollment position.
    """
    s = _as_float_tensor(scores)
    target = _check_scores_target(s, target, min_k=2)
    mask = torch.zeros(s.shape[-1], dtype=torch.bool, device=s.device)
    mask[target - 1] = True
    others = s.masked_fill(mask, float("-inf"))
    margin = others.amax(dim=-1) - s[..., target - 1]
    return margin.mean()


def loss_speaker_osi(scores, target: int, theta: float) -> torch.Tensor:
    """Open-set margin: max(best non-target, theta) minus target score.

    With a single enrolled speaker this reduces to theta - s_target.
    """
    s = _as_float_tensor(scores)
    target = _check_scores_target(s, target, min_k=1)
    mask = torch.zeros(s.shape[-1], dtype=torch.bool, device=s.device)
    mask[target - 1] = True
    others = s.masked_fill(mask, float("-inf"))
    best_other = others.amax(dim=-1)
    theta_t = torch.as_tensor(float(theta), dtype=s.dtype, device=s.device)
    margin = torch.maximum(best_other, theta_t) - s[..., target - 1]
    return margin.mean()


def loss_asr(speaker_loss, angular_loss, lambda_s: float, lambda_a: float) -> torch.Tensor:
    return lambda_s * _as_float_tensor(speaker_loss) + lambda_a * _as_float_tensor(angular_loss)


def loss_total(snr_loss, asr_loss) -> torch.Tensor:
    return _as_float_tensor(snr_loss) + _as_float_tensor(asr_loss)
