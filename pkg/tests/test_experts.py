import pytest
import torch

from uniland.errors import ConfigurationError, ShapeError
from uniland.model.apae import PrototypeExpert


class TestPrototypeExpert:
    def test_hand_conv_oracle(self):
        """channels=1, rank=1, weights pinned by hand.

        Reduce kernel: center tap 1.0, right-neighbor tap 0.5 (zero padding).
        Expand: scalar 2.0. Bias: 0.5. Input [[1,2],[3,4]]:
        reduce -> [[1+0.5*2, 2+0], [3+0.5*4, 4+0]] = [[2,2],[5,4]]
        expand -> [[4,4],[10,8]]; +bias -> [[4.5,4.5],[10.5,8.5]].
        """
        expert = PrototypeExpert(channels=1, rank=1)
        with torch.no_grad():
            expert.reduce.weight.zero_()
            expert.reduce.weight[0, 0, 1, 1] = 1.0
            expert.reduce.weight[0, 0, 1, 2] = 0.5
            expert.expand.weight.fill_(2.0)
            expert.bias.fill_(0.5)
        x = torch.tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
        out = expert(x)
        expected = torch.tensor([[[[4.5, 4.5], [10.5, 8.5]]]])
        assert torch.equal(out, expected)

    def test_output_shape_matches_input(self):
        expert = PrototypeExpert(channels=8, rank=2)
        x = torch.randn(3, 8, 5, 5)
        assert expert(x).shape == x.shape

    def test_channel_mismatch(self):
        expert = PrototypeExpert(channels=8, rank=2)
        with pytest.raises(ShapeError, match="expects 8 channels"):
            expert(torch.randn(1, 4, 5, 5))

    def test_rank_bounds(self):
        with pytest.raises(ConfigurationError, match="rank"):
            PrototypeExpert(channels=8, rank=0)
        with pytest.raises(ConfigurationError, match="rank"):
            PrototypeExpert(channels=8, rank=9)

    def test_low_rank_structure(self):
        # The 3x3 stage maps to `rank` channels, the 1x1 expands back.
        expert = PrototypeExpert(channels=16, rank=4)
        assert expert.reduce.weight.shape == (4, 16, 3, 3)
        assert expert.expand.weight.shape == (16, 4, 1, 1)
        assert expert.reduce.bias is None
        assert expert.expand.bias is None
        assert expert.bias.shape == (16,)

    def test_gradients_flow(self):
        expert = PrototypeExpert(channels=4, rank=2)
        x = torch.randn(2, 4, 6, 6, requires_grad=True)
        expert(x).sum().backward()
        assert x.grad is not None and torch.isfinite(x.grad).all()
        assert expert.bias.grad is not None
