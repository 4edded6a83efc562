"""Tests for the assembled model: shapes, routing wiring, gradient sparsity."""
import pytest
import torch

from uniland.errors import ShapeError
from uniland.model.backbone import ConvBackbone
from uniland.model.config import BACKBONE_PROFILES
from uniland.model.network import UnifiedLandmarkModel

from conftest import tiny_model_config


def tiny_images(batch=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(batch, 3, 64, 64, generator=g)


class TestBackbone:
    def test_tiny_output_shapes(self):
        backbone = ConvBackbone(BACKBONE_PROFILES["tiny"])
        x1, x2 = backbone(tiny_images())
        assert x1.shape == (2, 32, 8, 8)
        assert x2.shape == (2, 64, 4, 4)

    def test_input_shape_validation(self):
        backbone = ConvBackbone(BACKBONE_PROFILES["tiny"])
        with pytest.raises(ShapeError, match="images"):
            backbone(torch.rand(2, 1, 64, 64))
        with pytest.raises(ShapeError, match="64x64"):
            backbone(torch.rand(2, 3, 32, 32))

    def test_batch_independence(self):
        # GroupNorm normalizes per sample, so a sample's features must not
        # depend on its batch neighbors.
        backbone = ConvBackbone(BACKBONE_PROFILES["tiny"]).eval()
        imgs = tiny_images(batch=3)
        with torch.no_grad():
            full, _ = backbone(imgs)
            solo, _ = backbone(imgs[1:2])
        assert torch.allclose(full[1], solo[0], atol=1e-6)


class TestModelForward:
    def test_output_shapes(self):
        model = UnifiedLandmarkModel(tiny_model_config())
        out = model(tiny_images())
        assert out.index_logits.shape == (2, 12, 17)
        assert out.coords.shape == (2, 12, 2)
        assert torch.all(out.coords > 0) and torch.all(out.coords < 1)

    def test_gates_present_per_scale(self):
        model = UnifiedLandmarkModel(tiny_model_config())
        out = model(tiny_images())
        assert len(out.gates) == 2
        for gate in out.gates:
            assert gate.distribution.shape == (2, 4)
            assert gate.indices.shape == (2, 2)
            assert torch.allclose(gate.distribution.sum(dim=-1), torch.ones(2), atol=1e-6)

    def test_routing_free_model_has_no_gates(self):
        model = UnifiedLandmarkModel(tiny_model_config(use_ape=False))
        out = model(tiny_images())
        assert out.gates == ()
        assert not hasattr(model, "extract1")

    def test_prompt_free_model_runs(self):
        model = UnifiedLandmarkModel(tiny_model_config(use_prompts=False))
        out = model(tiny_images())
        assert out.index_logits.shape == (2, 12, 17)

    def test_eval_forward_is_deterministic(self):
        model = UnifiedLandmarkModel(tiny_model_config()).eval()
        imgs = tiny_images()
        with torch.no_grad():
            a = model(imgs)
            b = model(imgs)
        assert torch.equal(a.index_logits, b.index_logits)
        assert torch.equal(a.coords, b.coords)

    def test_token_count_property(self):
        assert UnifiedLandmarkModel(tiny_model_config()).token_count == 80


class TestGradientSparsity:
    def test_unselected_experts_get_no_gradient(self):
        torch.manual_seed(0)
        model = UnifiedLandmarkModel(tiny_model_config())
        out = model(tiny_images(batch=1))
        (out.index_logits.sum() + out.coords.sum()).backward()
        for extractor, gate in ((model.extract1, out.gates[0]), (model.extract2, out.gates[1])):
            selected = set(gate.indices.flatten().tolist())
            for idx, expert in enumerate(extractor.experts):
                grads = [p.grad for p in expert.parameters()]
                if idx in selected:
                    assert any(g is not None and g.abs().sum() > 0 for g in grads), idx
                else:
                    assert all(g is None or torch.all(g == 0) for g in grads), idx

    def test_router_always_gets_gradient(self):
        torch.manual_seed(0)
        model = UnifiedLandmarkModel(tiny_model_config())
        out = model(tiny_images(batch=1))
        (out.index_logits.sum() + out.coords.sum()).backward()
        mix_grad = model.extract1.router.mix.weight.grad
        assert mix_grad is not None and mix_grad.abs().sum() > 0
