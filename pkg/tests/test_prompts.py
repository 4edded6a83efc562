"""Tests for prompt lookup (similarity argmax over prototype cells) and prompt fusion."""
import math

import pytest
import torch
from torch import nn

from uniland.errors import ConfigurationError, ShapeError
from uniland.model.ppad import FusionBlock, Prompt, PromptGenerator


def identity_generator(dim=4, similarity="dot"):
    """Generator whose projections are identities, so similarity acts on raw inputs."""
    gen = PromptGenerator(map_channels=dim, dim=dim, similarity=similarity)
    with torch.no_grad():
        gen.project_map.weight.copy_(torch.eye(dim).view(dim, dim, 1, 1))
        gen.project_map.bias.zero_()
        gen.project_query.weight.copy_(torch.eye(dim))
        gen.project_query.bias.zero_()
    return gen


def axis_map(dim=4):
    """2x2 prototype map whose cells are scaled unit vectors e0..e3 (row-major)."""
    cells = torch.zeros(1, dim, 2, 2)
    scales = [5.0, 3.0, 4.0, 2.0]
    for flat, scale in enumerate(scales):
        h, w = divmod(flat, 2)
        cells[0, flat, h, w] = scale
    return cells


class TestPromptSelection:
    def test_argmax_picks_most_similar_cell(self):
        gen = identity_generator()
        pmap = axis_map()
        queries = torch.stack([
            torch.tensor([0.0, 1.0, 0.0, 0.0]),   # aligned with cell 1
            torch.tensor([0.0, 0.0, 0.0, 1.0]),   # aligned with cell 3
            torch.tensor([1.0, 0.0, 0.0, 0.0]),   # aligned with cell 0
        ]).unsqueeze(0)
        prompt = gen(queries, pmap)
        assert prompt.indices.tolist() == [[1, 3, 0]]

    def test_vectors_are_gathered_rows(self):
        gen = identity_generator()
        pmap = axis_map()
        queries = torch.randn(2, 5, 4)
        pmap = pmap.expand(2, -1, -1, -1)
        prompt = gen(queries, pmap)
        rows = gen.project_map(pmap).flatten(2).transpose(1, 2)
        for b in range(2):
            for q in range(5):
                assert torch.equal(prompt.vectors[b, q], rows[b, prompt.indices[b, q]])

    def test_projected_queries_returned(self):
        gen = PromptGenerator(map_channels=6, dim=4)
        queries = torch.randn(1, 3, 4)
        pmap = torch.randn(1, 6, 2, 2)
        prompt = gen(queries, pmap)
        assert torch.equal(prompt.projected_queries, gen.project_query(queries))

    def test_dot_similarity_matches_hand_formula(self):
        gen = PromptGenerator(map_channels=4, dim=4, similarity="dot")
        q = torch.randn(1, 3, 4)
        r = torch.randn(1, 7, 4)
        sim = gen.similarity_matrix(q, r)
        expected = q @ r.transpose(1, 2) / math.sqrt(4)
        assert torch.equal(sim, expected)

    def test_dot_argmax_invariant_to_positive_query_scale(self):
        gen = identity_generator()
        pmap = torch.randn(1, 4, 3, 3)
        queries = torch.randn(1, 6, 4)
        base = gen(queries, pmap).indices
        scaled = gen(queries * 7.5, pmap).indices
        assert torch.equal(base, scaled)

    def test_cosine_argmax_invariant_to_cell_magnitude(self):
        gen = identity_generator(similarity="cosine")
        pmap = axis_map()
        boosted = pmap * torch.tensor([1.0, 100.0, 1.0, 1.0]).view(1, 4, 1, 1)
        # Boosting one channel rescales whole cells (each cell lives on one axis),
        # which cosine similarity ignores.
        queries = torch.randn(1, 6, 4)
        assert torch.equal(gen(queries, pmap).indices, gen(queries, boosted).indices)

    def test_dot_argmax_follows_cell_magnitude(self):
        gen = identity_generator(similarity="dot")
        pmap = axis_map()
        queries = torch.ones(1, 2, 4)  # equal alignment, magnitude decides
        prompt = gen(queries, pmap)
        assert prompt.indices.tolist() == [[0, 0]]  # cell 0 has the largest scale

    def test_gradient_skips_unselected_cells(self):
        gen = identity_generator()
        pmap = axis_map().requires_grad_(True)
        queries = torch.tensor([[[0.0, 1.0, 0.0, 0.0]]])  # selects cell 1 only
        prompt = gen(queries, pmap)
        prompt.vectors.sum().backward()
        grad = pmap.grad[0]  # (C, 2, 2)
        assert grad[:, 0, 1].abs().sum() > 0          # cell 1 = (h=0, w=1)
        for h, w in [(0, 0), (1, 0), (1, 1)]:
            assert torch.all(grad[:, h, w] == 0)

    def test_channel_mismatch_raises(self):
        gen = PromptGenerator(map_channels=8, dim=4)
        with pytest.raises(ShapeError, match="channels"):
            gen(torch.randn(1, 3, 4), torch.randn(1, 6, 2, 2))

    def test_unknown_similarity_rejected(self):
        with pytest.raises(ConfigurationError, match="similarity"):
            PromptGenerator(map_channels=4, dim=4, similarity="euclidean")


class TestFusionBlock:
    def make_prompt(self, batch=2, n_q=3, dim=8, seed=0):
        g = torch.Generator().manual_seed(seed)
        return Prompt(
            vectors=torch.randn(batch, n_q, dim, generator=g),
            indices=torch.zeros(batch, n_q, dtype=torch.long),
            projected_queries=torch.randn(batch, n_q, dim, generator=g),
        )

    def test_zero_output_weight_leaves_queries_unchanged(self):
        fuse = FusionBlock(dim=8)
        with torch.no_grad():
            fuse.output.weight.zero_()
        queries = torch.randn(2, 3, 8)
        assert torch.equal(fuse(queries, self.make_prompt()), queries)

    def test_zero_alpha_drops_affinity_branch(self):
        fuse = FusionBlock(dim=8)
        with torch.no_grad():
            fuse.alpha.zero_()
        queries = torch.randn(2, 3, 8)
        prompt = self.make_prompt()
        expected = queries + fuse.output(prompt.vectors)
        assert torch.equal(fuse(queries, prompt), expected)

    def test_matches_hand_formula(self):
        torch.manual_seed(4)
        fuse = FusionBlock(dim=8)
        with torch.no_grad():
            fuse.alpha.uniform_(0.5, 1.5)
        queries = torch.randn(2, 3, 8)
        prompt = self.make_prompt(seed=5)
        a = fuse.affinity(prompt.projected_queries * prompt.vectors)
        normed = a / a.norm(dim=-1, keepdim=True).clamp_min(FusionBlock.EPS)
        expected = queries + fuse.output(fuse.alpha * normed + prompt.vectors)
        assert torch.equal(fuse(queries, prompt), expected)

    def test_normalized_affinity_rows_are_unit_length(self):
        fuse = FusionBlock(dim=8)
        prompt = self.make_prompt()
        a = fuse.affinity(prompt.projected_queries * prompt.vectors)
        normed = a / a.norm(dim=-1, keepdim=True).clamp_min(FusionBlock.EPS)
        assert torch.allclose(normed.norm(dim=-1), torch.ones(2, 3), atol=1e-6)

    def test_zero_affinity_stays_finite(self):
        # Degenerate prompt (all zeros) must not divide by zero.
        fuse = FusionBlock(dim=8)
        prompt = Prompt(
            vectors=torch.zeros(1, 2, 8),
            indices=torch.zeros(1, 2, dtype=torch.long),
            projected_queries=torch.zeros(1, 2, 8),
        )
        out = fuse(torch.randn(1, 2, 8), prompt)
        assert torch.isfinite(out).all()

    def test_gradients_reach_all_parameters(self):
        fuse = FusionBlock(dim=8)
        queries = torch.randn(2, 3, 8, requires_grad=True)
        prompt = self.make_prompt()
        fuse(queries, prompt).sum().backward()
        for name, p in fuse.named_parameters():
            assert p.grad is not None, name
            assert p.grad.abs().sum() > 0, name
        assert queries.grad is not None
