import numpy as np
import pytest
import torch

from uniland.errors import ConfigurationError, ShapeError
from uniland.model.apae import ExpertRouter, GatingDecision, topk_stable


def stable_topk_oracle(values: np.ndarray, k: int) -> np.ndarray:
    """Reference: descending sort, ties keep original (= lower-first) order."""
    order = np.argsort(-values, axis=-1, kind="stable")
    return order[..., :k]


class TestTopkStable:
    def test_basic(self):
        scores, idx = topk_stable(torch.tensor([[0.1, 0.7, 0.2]]), 2)
        assert idx.tolist() == [[1, 2]]
        assert scores.tolist() == [[pytest.approx(0.7), pytest.approx(0.2)]]

    def test_tie_prefers_lower_index(self):
        values = torch.tensor([[0.3, 0.5, 0.5, 0.2]])
        _, idx = topk_stable(values, 2)
        assert idx.tolist() == [[1, 2]]

    def test_all_equal_selects_prefix(self):
        values = torch.ones(2, 5)
        scores, idx = topk_stable(values, 3)
        assert idx.tolist() == [[0, 1, 2], [0, 1, 2]]
        assert torch.equal(scores, torch.ones(2, 3))

    def test_tie_among_later_entries(self):
        values = torch.tensor([[0.9, 0.4, 0.4, 0.4, 0.1]])
        _, idx = topk_stable(values, 3)
        assert idx.tolist() == [[0, 1, 2]]

    def test_k_bounds(self):
        values = torch.ones(1, 4)
        with pytest.raises(ConfigurationError):
            topk_stable(values, 0)
        with pytest.raises(ConfigurationError):
            topk_stable(values, 5)

    def test_matches_oracle_on_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 12))
            k = int(rng.integers(1, n + 1))
            vals = rng.random((4, n))
            _, idx = topk_stable(torch.from_numpy(vals), k)
            np.testing.assert_array_equal(idx.numpy(), stable_topk_oracle(vals, k))

    def test_quantized_ties_match_oracle(self):
        # Coarse quantization forces many exact float ties.
        rng = np.random.default_rng(1)
        vals = np.round(rng.random((16, 9)) * 3) / 3.0
        _, idx = topk_stable(torch.from_numpy(vals), 4)
        np.testing.assert_array_equal(idx.numpy(), stable_topk_oracle(vals, 4))


class TestExpertRouter:
    def test_decision_contract(self):
        torch.manual_seed(0)
        router = ExpertRouter(channels=16, num_experts=6, topk=3, heads=2)
        x = torch.randn(4, 16, 5, 5)
        gate = router(x)
        assert isinstance(gate, GatingDecision)
        assert gate.distribution.shape == (4, 6)
        assert gate.indices.shape == (4, 3)
        assert gate.scores.shape == (4, 3)
        assert gate.logits.shape == (4, 6)
        assert torch.all((gate.distribution.sum(-1) - 1.0).abs() < 1e-6)
        # scores are exactly the distribution entries at the selected indices
        assert torch.equal(gate.scores, gate.distribution.gather(1, gate.indices))

    def test_distribution_is_softmax_of_logits(self):
        torch.manual_seed(1)
        router = ExpertRouter(channels=8, num_experts=5, topk=2, heads=2)
        gate = router(torch.randn(3, 8, 4, 4))
        recomputed = torch.softmax(gate.logits, dim=-1)
        assert torch.allclose(gate.distribution, recomputed, atol=1e-7)

    def test_indices_are_exact_topk(self):
        torch.manual_seed(2)
        router = ExpertRouter(channels=8, num_experts=7, topk=4, heads=2)
        gate = router(torch.randn(6, 8, 4, 4))
        oracle = stable_topk_oracle(gate.distribution.detach().numpy(), 4)
        np.testing.assert_array_equal(gate.indices.numpy(), oracle)

    def test_channels_divisible_by_four(self):
        with pytest.raises(ConfigurationError, match="divisible by 4"):
            ExpertRouter(channels=10, num_experts=4, topk=2)

    def test_reduced_divisible_by_heads(self):
        with pytest.raises(ConfigurationError, match="heads"):
            ExpertRouter(channels=16, num_experts=4, topk=2, heads=3)

    def test_topk_in_range(self):
        with pytest.raises(ConfigurationError, match="topk"):
            ExpertRouter(channels=16, num_experts=4, topk=5)

    def test_wrong_channels_at_forward(self):
        router = ExpertRouter(channels=16, num_experts=4, topk=2)
        with pytest.raises(ShapeError, match="expects 16"):
            router(torch.randn(1, 8, 4, 4))

    def test_gradient_reaches_parameters(self):
        torch.manual_seed(3)
        router = ExpertRouter(channels=8, num_experts=4, topk=2, heads=2)
        gate = router(torch.randn(2, 8, 4, 4))
        gate.distribution.sum().backward()
        for name, p in router.named_parameters():
            assert p.grad is not None, name

    def test_override_k(self):
        torch.manual_seed(4)
        router = ExpertRouter(channels=8, num_experts=6, topk=2, heads=2)
        gate = router(torch.randn(2, 8, 4, 4), k=5)
        assert gate.indices.shape == (2, 5)
