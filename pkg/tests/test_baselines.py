"""Sign-based and L2 baseline attacks."""

import numpy as np
import pytest
import torch

from advsal import (
    CarliniWagnerL2Attack,
    CleanPassThrough,
    FastGradientSignAttack,
    IterativeGradientSignAttack,
    load_split,
    synthesize,
)
from advsal.errors import InvalidArguments, NotFitted


@pytest.fixture(scope="module")
def probe(tiny_manifest):
    u = next(r for r in tiny_manifest.utterances if r.split == "test")
    return synthesize(tiny_manifest, u.speaker_id, u.utterance_id)


class _GradientStub:
    """Target stand-in whose speaker loss has a fixed gradient in x."""

    def __init__(self, grad):
        self.grad = torch.tensor(grad, dtype=torch.float32)

    def scores_tensor(self, x):
        return x

    def speaker_loss(self, scores, target):
        return (scores[0] * self.grad).sum()

    def check_target(self, target):
        return target


class TestFgsm:
    def test_zero_epsilon_identity(self, csi_system, probe):
        atk = FastGradientSignAttack(csi_system, target=1, epsilon=0.0).fit()
        out = atk.attack(probe)
        np.testing.assert_array_equal(out.x_adv.samples, probe.samples)

    def test_sign_formula_on_stub(self):
        atk = FastGradientSignAttack(_GradientStub([1.0, -1.0, 0.0]), target=1, epsilon=0.01)
        atk.fit()
        out = atk.attack(np.zeros(3))
        np.testing.assert_allclose(out.delta, [-0.01, 0.01, 0.0], atol=1e-9)

    def test_budget_on_real_system(self, csi_system, probe):
        atk = FastGradientSignAttack(csi_system, target=2, epsilon=0.05).fit()
        out = atk.attack(probe)
        assert np.abs(out.x_adv.samples - probe.samples).max() <= 0.05 + 1e-7

    def test_unfitted_rejected(self, csi_system, probe):
        with pytest.raises(NotFitted):
            FastGradientSignAttack(csi_system).attack(probe)

    def test_no_mask_fields(self, csi_system, probe):
        out = FastGradientSignAttack(csi_system, target=1, epsilon=0.02).fit().attack(probe)
        assert out.noise is None and out.mask is None and out.mask_norm is None


class TestBim:
    def test_single_full_step_equals_fgsm_bitwise(self, csi_system, probe):
        fgsm = FastGradientSignAttack(csi_system, target=2, epsilon=0.05).fit()
        bim = IterativeGradientSignAttack(
            csi_system, target=2, epsilon=0.05, step=0.05, iterations=1
        ).fit()
        np.testing.assert_array_equal(
            bim.attack(probe).x_adv.samples, fgsm.attack(probe).x_adv.samples
        )

    def test_default_step_is_fifth_of_epsilon(self, csi_system):
        atk = IterativeGradientSignAttack(csi_system, epsilon=0.05)
        assert atk._budget()[1] == pytest.approx(0.01)

    def test_budget_after_many_iterations(self, csi_system, probe):
        atk = IterativeGradientSignAttack(
            csi_system, target=2, epsilon=0.03, iterations=12
        ).fit()
        out = atk.attack(probe)
        assert np.abs(out.x_adv.samples - probe.samples).max() <= 0.03 + 1e-7

    def test_more_iterations_lower_speaker_loss(self, csi_system, probe):
        def margin(x_adv):
            with torch.no_grad():
                s = csi_system.scores_tensor(
                    torch.tensor(x_adv, dtype=torch.float32)
                )
            return float(csi_system.speaker_loss(s, 2))

        one = IterativeGradientSignAttack(
            csi_system, target=2, epsilon=0.05, iterations=1
        ).fit()
        ten = IterativeGradientSignAttack(
            csi_system, target=2, epsilon=0.05, iterations=10
        ).fit()
        assert margin(ten.attack(probe).x_adv.samples) <= margin(
            one.attack(probe).x_adv.samples
        )

    def test_oversized_step_rejected(self, csi_system):
        with pytest.raises(InvalidArguments):
            IterativeGradientSignAttack(csi_system, epsilon=0.05, step=0.2).fit()


class TestCarliniWagner:
    def test_zero_c_degenerates_to_identity(self, csi_system, tiny_manifest):
        target = 2
        u = next(
            r
            for r in tiny_manifest.utterances
            if r.split == "test" and r.speaker_id != target
        )
        imposter = synthesize(tiny_manifest, u.speaker_id, u.utterance_id)
        atk = CarliniWagnerL2Attack(csi_system, target=target, c=0.0, steps=20).fit()
        out = atk.attack(imposter)
        assert out.converged is False
        # Adam turns float32 rounding noise into lr-sized steps, so the
        # degenerate objective keeps x' near x rather than exactly at it.
        np.testing.assert_allclose(out.x_adv.samples, imposter.samples, atol=1e-2)
        assert np.sqrt(np.mean(out.delta**2)) < 1e-3

    def test_negative_c_rejected(self, csi_system):
        with pytest.raises(InvalidArguments):
            CarliniWagnerL2Attack(csi_system, c=-1.0).fit()

    def test_beats_fgsm_at_small_budget(self, csi_system, tiny_manifest):
        """The unconstrained-L2 attack succeeds where a one-step 0.01-budget
        attack does not."""
        target = 2
        records = [
            u
            for u in tiny_manifest.utterances
            if u.split == "test" and u.speaker_id != target
        ][:3]
        waves = [
            synthesize(tiny_manifest, u.speaker_id, u.utterance_id) for u in records
        ]
        fgsm = FastGradientSignAttack(csi_system, target=target, epsilon=0.01).fit()
        cw = CarliniWagnerL2Attack(csi_system, target=target).fit()
        fgsm_hits = sum(
            csi_system.decide(fgsm.attack(w).x_adv) == target for w in waves
        )
        cw_hits = sum(csi_system.decide(cw.attack(w).x_adv) == target for w in waves)
        assert cw_hits > fgsm_hits


class TestCleanPassThrough:
    def test_zero_delta(self, probe):
        out = CleanPassThrough().fit().attack(probe)
        np.testing.assert_array_equal(out.delta, np.zeros(len(probe)))
        np.testing.assert_array_equal(out.x_adv.samples, probe.samples)

    def test_output_not_aliased(self, probe):
        out = CleanPassThrough().fit().attack(probe)
        out.x_adv.samples[0] = 0.123
        assert probe.samples[0] != 0.123

    def test_transform_copies_batch(self, tiny_manifest):
        X, _, _ = load_split(tiny_manifest, "test")
        out = CleanPassThrough().fit().transform(X)
        np.testing.assert_array_equal(out, X)
        assert out is not X
