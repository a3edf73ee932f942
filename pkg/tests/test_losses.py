"""Objective pieces: worked-example values, gradients, and edge behavior.

Every closed-form example is asserted at 1e-9. Gradient checks run in
float64 against central finite differences with step 1e-4 on fixtures
chosen away from the hinge and max kinks.
"""

import math

import numpy as np
import pytest
import torch
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from advsal.errors import InvalidArguments, InvalidTarget, LengthMismatch
from advsal.losses import (
    loss_angular,
    loss_asr,
    loss_f,
    loss_norm,
    loss_norm_symmetric,
    loss_snr,
    loss_speaker_csi,
    loss_speaker_osi,
    loss_total,
    normalize_mask,
    perturbation,
)

TOL = 1e-9
FD_STEP = 1e-4
FD_RTOL = 1e-3


def t64(x):
    return torch.tensor(x, dtype=torch.float64)


class TestNormalizeMask:
    def test_spread_values(self):
        out = normalize_mask(t64([2.0, 4.0, 6.0]))
        np.testing.assert_allclose(out.numpy(), [0.0, 0.5, 1.0], atol=TOL)

    def test_constant_mask_maps_to_zeros(self):
        out = normalize_mask(t64([5.0, 5.0, 5.0]))
        np.testing.assert_allclose(out.numpy(), [0.0, 0.0, 0.0], atol=TOL)

    def test_unit_interval_identity(self):
        out = normalize_mask(t64([0.0, 1.0]))
        np.testing.assert_allclose(out.numpy(), [0.0, 1.0], atol=TOL)

    def test_batch_rows_normalized_independently(self):
        out = normalize_mask(t64([[2.0, 4.0, 6.0], [1.0, 1.0, 1.0]]))
        np.testing.assert_allclose(
            out.numpy(), [[0.0, 0.5, 1.0], [0.0, 0.0, 0.0]], atol=TOL
        )

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(
            st.floats(min_value=-100, max_value=100),
            min_size=2,
            max_size=16,
        ),
        st.floats(min_value=0.01, max_value=50),
        st.floats(min_value=-40, max_value=40),
    )
    def test_positive_affine_invariance(self, values, a, b):
        # only meaningful while a*span survives float64 rounding against b
        span = max(values) - min(values)
        scale = abs(b) + a * max(abs(v) for v in values) + 1.0
        assume(a * span == 0.0 or a * span > scale * 1e-9)
        m = t64(values)
        np.testing.assert_allclose(
            normalize_mask(a * m + b).numpy(),
            normalize_mask(m).numpy(),
            atol=1e-7,
        )

    def test_range_always_unit_interval(self, rng):
        m = t64(rng.normal(size=(5, 40)))
        out = normalize_mask(m)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestPerturbation:
    def test_worked_example(self):
        out = perturbation(t64([1.0, -1.0]), t64([1.0, 0.5]), 0.05)
        np.testing.assert_allclose(out.numpy(), [0.05, -0.025], atol=TOL)

    def test_zero_epsilon(self):
        out = perturbation(t64([0.7, -0.2]), t64([0.5, 0.5]), 0.0)
        np.testing.assert_allclose(out.numpy(), [0.0, 0.0], atol=TOL)

    def test_zero_mask(self):
        out = perturbation(t64([0.7, -0.2]), t64([0.0, 0.0]), 0.05)
        np.testing.assert_allclose(out.numpy(), [0.0, 0.0], atol=TOL)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(LengthMismatch):
            perturbation(t64([1.0, 2.0]), t64([1.0]), 0.05)


class TestLossF:
    def test_hand_arithmetic(self):
        val = float(loss_f(t64([0.0, 0.5, 1.0])))
        assert val == pytest.approx(math.sqrt(1.25), abs=TOL)

    def test_zeros(self):
        assert float(loss_f(t64([0.0, 0.0, 0.0]))) == pytest.approx(0.0, abs=TOL)

    def test_four_ones(self):
        assert float(loss_f(t64([1.0, 1.0, 1.0, 1.0]))) == pytest.approx(2.0, abs=TOL)

    def test_batch_mean(self):
        batch = t64([[0.0, 0.5, 1.0], [1.0, 1.0, 1.0]])
        expected = (math.sqrt(1.25) + math.sqrt(3.0)) / 2
        assert float(loss_f(batch)) == pytest.approx(expected, abs=TOL)


class TestLossNorm:
    def test_identical_signals(self):
        x = t64([0.3, -0.4])
        assert float(loss_norm(x, x.clone())) == pytest.approx(0.0, abs=TOL)

    def test_hand_arithmetic(self):
        val = float(loss_norm(t64([1.0, 1.0]), t64([0.9, 1.2])))
        assert val == pytest.approx(0.005, abs=TOL)

    def test_positive_delta_inactive_hinge(self):
        x = t64([0.1, 0.2, -0.3])
        x_adv = x + 0.05
        assert float(loss_norm(x, x_adv)) == pytest.approx(0.0, abs=TOL)

    def test_symmetric_variant(self):
        val = float(loss_norm_symmetric(t64([1.0, 1.0]), t64([0.9, 1.2])))
        assert val == pytest.approx((0.01 + 0.04) / 2, abs=TOL)


class TestLossSnr:
    def test_zero_weights(self):
        val = loss_snr(t64([0.0, 0.5, 1.0]), t64([1.0, 1.0]), t64([0.9, 1.2]), 0.0, 0.0)
        assert float(val) == pytest.approx(0.0, abs=TOL)

    def test_reduces_to_loss_f(self):
        val = loss_snr(t64([0.0, 0.5, 1.0]), t64([1.0, 1.0]), t64([1.0, 1.0]), 1.0, 0.0)
        assert float(val) == pytest.approx(math.sqrt(1.25), abs=TOL)

    def test_linearity(self, rng):
        m = t64(rng.uniform(0, 1, size=16))
        x = t64(rng.uniform(-0.5, 0.5, size=32))
        x_adv = t64(rng.uniform(-0.5, 0.5, size=32))
        combined = float(loss_snr(m, x, x_adv, 2.0, 3.0))
        separate = 2.0 * float(loss_f(m)) + 3.0 * float(loss_norm(x, x_adv))
        assert combined == pytest.approx(separate, abs=TOL)


class TestLossAngular:
    def test_identical_unit_vectors(self):
        z = t64([1.0, 0.0])
        assert float(loss_angular(z, z.clone())) == pytest.approx(1.0, abs=TOL)

    def test_orthogonal(self):
        assert float(loss_angular(t64([1.0, 0.0]), t64([0.0, 1.0]))) == pytest.approx(
            0.0, abs=TOL
        )

    def test_antipodal(self):
        z = t64([0.6, -0.8])
        assert float(loss_angular(z, -z)) == pytest.approx(-1.0, abs=TOL)

    def test_scale_invariance(self, rng):
        z = t64(rng.normal(size=8))
        z_adv = t64(rng.normal(size=8))
        assert float(loss_angular(3.0 * z, 0.5 * z_adv)) == pytest.approx(
            float(loss_angular(z, z_adv)), abs=1e-12
        )

    def test_zero_embedding_floored_not_nan(self):
        val = float(loss_angular(t64([0.0, 0.0]), t64([1.0, 0.0])))
        assert val == 0.0

    def test_bounded(self, rng):
        z = t64(rng.normal(size=(10, 6)))
        z_adv = t64(rng.normal(size=(10, 6)))
        val = float(loss_angular(z, z_adv))
        assert -1.0 - 1e-12 <= val <= 1.0 + 1e-12


class TestLossSpeakerCsi:
    def test_target_trailing(self):
        assert float(loss_speaker_csi(t64([0.9, 0.1, 0.3]), 3)) == pytest.approx(
            0.6, abs=TOL
        )

    def test_target_winning(self):
        assert float(loss_speaker_csi(t64([0.1, 0.8, 0.3]), 2)) == pytest.approx(
            -0.5, abs=TOL
        )

    def test_tied_scores(self):
        assert float(loss_speaker_csi(t64([0.5, 0.5]), 1)) == pytest.approx(0.0, abs=TOL)

    def test_single_speaker_rejected(self):
        with pytest.raises(InvalidArguments):
            loss_speaker_csi(t64([0.5]), 1)

    def test_target_out_of_range(self):
        with pytest.raises(InvalidTarget):
            loss_speaker_csi(t64([0.5, 0.5]), 3)


class TestLossSpeakerOsi:
    def test_theta_dominates(self):
        assert float(loss_speaker_osi(t64([0.2, 0.5]), 1, 0.6)) == pytest.approx(
            0.4, abs=TOL
        )

    def test_target_above_theta(self):
        assert float(loss_speaker_osi(t64([0.9, 0.1]), 1, 0.6)) == pytest.approx(
            -0.3, abs=TOL
        )

    def test_other_above_theta(self):
        assert float(loss_speaker_osi(t64([0.7, 0.8]), 2, 0.6)) == pytest.approx(
            -0.1, abs=TOL
        )

    def test_single_enrolled_reduces_to_theta_margin(self):
        assert float(loss_speaker_osi(t64([0.45]), 1, 0.6)) == pytest.approx(
            0.15, abs=TOL
        )


class TestCompositeLosses:
    def test_asr_speaker_only(self):
        s = loss_speaker_csi(t64([0.9, 0.1]), 2)
        a = loss_angular(t64([1.0, 0.0]), t64([0.0, 1.0]))
        assert float(loss_asr(s, a, 1.0, 0.0)) == pytest.approx(float(s), abs=TOL)

    def test_asr_angular_only(self):
        s = loss_speaker_csi(t64([0.9, 0.1]), 2)
        a = loss_angular(t64([1.0, 0.0]), t64([0.5, 0.5]))
        assert float(loss_asr(s, a, 0.0, 1.0)) == pytest.approx(float(a), abs=TOL)

    def test_asr_zero_weights(self):
        assert float(loss_asr(t64(0.7), t64(-0.2), 0.0, 0.0)) == pytest.approx(
            0.0, abs=TOL
        )

    def test_total_zero(self):
        assert float(loss_total(t64(0.0), t64(0.0))) == pytest.approx(0.0, abs=TOL)

    def test_total_additivity(self, rng):
        snr = float(rng.normal())
        asr = float(rng.normal())
        assert float(loss_total(t64(snr), t64(asr))) == pytest.approx(
            snr + asr, abs=TOL
        )


def central_difference(f, x0, step=FD_STEP):
    """Gradient of scalar f at 1-D point x0 by central differences."""
    g = np.zeros_like(x0)
    for i in range(x0.size):
        up = x0.copy()
        dn = x0.copy()
        up[i] += step
        dn[i] -= step
        g[i] = (f(up) - f(dn)) / (2 * step)
    return g


def autograd_gradient(f, x0):
    x = torch.tensor(x0, dtype=torch.float64, requires_grad=True)
    f(x).backward()
    return x.grad.numpy()


def assert_grad_matches(f_np, f_t, x0):
    fd = central_difference(f_np, x0)
    ag = autograd_gradient(f_t, x0)
    scale = max(np.linalg.norm(fd), np.linalg.norm(ag), 1e-12)
    assert np.linalg.norm(fd - ag) / scale < FD_RTOL


class TestGradients:
    """Central-difference checks for each differentiable piece."""

    def test_loss_f(self, rng):
        x0 = rng.uniform(0.2, 0.8, size=12)
        assert_grad_matches(
            lambda v: float(loss_f(t64(v))),
            lambda v: loss_f(v),
            x0,
        )

    def test_loss_norm(self, rng):
        # Keep x - x' away from 0 so the hinge is smooth at the probe point.
        x = rng.uniform(-0.5, 0.5, size=12)
        offsets = np.where(rng.uniform(size=12) < 0.5, 0.05, -0.05)
        x_adv0 = x + offsets
        assert_grad_matches(
            lambda v: float(loss_norm(t64(x), t64(v))),
            lambda v: loss_norm(t64(x), v),
            x_adv0,
        )

    def test_loss_angular_wrt_adv(self, rng):
        z = rng.normal(size=8)
        z_adv0 = rng.normal(size=8)
        assert_grad_matches(
            lambda v: float(loss_angular(t64(z), t64(v))),
            lambda v: loss_angular(t64(z), v),
            z_adv0,
        )

    def test_loss_speaker_csi(self, rng):
        # Distinct scores keep the max away from ties.
        s0 = np.array([0.9, 0.1, 0.4, -0.2])
        assert_grad_matches(
            lambda v: float(loss_speaker_csi(t64(v), 2)),
            lambda v: loss_speaker_csi(v, 2),
            s0,
        )

    def test_loss_speaker_osi(self):
        s0 = np.array([0.7, 0.2, 0.4])
        assert_grad_matches(
            lambda v: float(loss_speaker_osi(t64(v), 2, 0.5)),
            lambda v: loss_speaker_osi(v, 2, 0.5),
            s0,
        )

    def test_loss_snr_wrt_mask(self, rng):
        x = rng.uniform(-0.5, 0.5, size=10)
        x_adv = x - 0.03
        m0 = rng.uniform(0.2, 0.8, size=10)
        assert_grad_matches(
            lambda v: float(loss_snr(t64(v), t64(x), t64(x_adv), 0.5, 2.0)),
            lambda v: loss_snr(v, t64(x), t64(x_adv), 0.5, 2.0),
            m0,
        )

    def test_loss_total_composite(self, rng):
        """End-to-end through perturbation, both loss arms, w.r.t. the noise."""
        x = rng.uniform(-0.4, 0.4, size=10)
        mask = rng.uniform(0.3, 0.9, size=10)
        scores_w = rng.normal(size=(3, 10))
        n0 = rng.uniform(-0.6, 0.6, size=10)

        def full(v_t):
            delta = perturbation(v_t, torch.as_tensor(mask), 0.05)
            x_adv = torch.as_tensor(x) + delta
            s = (torch.as_tensor(scores_w) @ x_adv).unsqueeze(0)
            snr = loss_snr(normalize_mask(v_t), torch.as_tensor(x), x_adv, 0.3, 1.5)
            asr = loss_asr(
                loss_speaker_csi(s, 2),
                loss_angular(torch.as_tensor(x).unsqueeze(0), x_adv.unsqueeze(0)),
                1.0,
                1.0,
            )
            return loss_total(snr, asr)

        assert_grad_matches(lambda v: float(full(t64(v))), full, n0)
