import numpy as np
import pytest
import torch

from m3pt.config import desk_config
from m3pt.matcher import MatchHead, TagPrediction, rank_predictions, rank_topk
from m3pt.model import M3PT

from oracles import check_grad_sampled


@pytest.fixture
def head():
    torch.manual_seed(0)
    return MatchHead(16)


def test_match_probability_normalized(head):
    p = head(torch.randn(5, 16), torch.randn(5, 16))
    assert ((p >= 0) & (p <= 1)).all()


def test_match_zero_readout_gives_half(head):
    with torch.no_grad():
        head.classify[-1].weight.zero_()
        head.classify[-1].bias.zero_()
    p = head(torch.randn(4, 16), torch.randn(4, 16))
    assert torch.allclose(p, torch.full((4,), 0.5), atol=1e-6)


def test_match_dim_mismatch(head):
    with pytest.raises(ValueError):
        head(torch.randn(1, 16), torch.randn(1, 8))


def test_match_gradients_match_finite_differences(rng):
    torch.manual_seed(0)
    head = MatchHead(8).double()
    c = torch.randn(3, 8, dtype=torch.float64, requires_grad=True)
    t = torch.randn(3, 8, dtype=torch.float64, requires_grad=True)
    labels = torch.tensor([1.0, 0.0, 1.0], dtype=torch.float64)

    def fn():
        p = head(c, t)
        return -(labels * p.log() + (1 - labels) * (1 - p).log()).sum()

    check_grad_sampled(fn, [c, t] + list(head.parameters()), rng)


def test_rank_predictions_order_and_threshold():
    scores = torch.tensor([0.9, 0.4, 0.9])
    preds = rank_predictions(scores, ["A", "B", "C"], pi=0.5)
    assert [p.tag for p in preds] == ["A", "C", "B"]
    assert [p.accepted for p in preds] == [True, True, False]
    assert [p.tag_id for p in preds] == [0, 2, 1]


def test_rank_predictions_pi_one_accepts_nothing():
    scores = torch.tensor([1.0, 0.99])
    preds = rank_predictions(scores, ["A", "B"], pi=1.0)
    assert not any(p.accepted for p in preds)


def test_rank_predictions_monotone_in_pi():
    scores = torch.rand(10)
    tags = [f"t{i}" for i in range(10)]
    sizes = []
    for pi in (0.1, 0.3, 0.5, 0.7, 0.9):
        sizes.append(sum(p.accepted for p in rank_predictions(scores, tags, pi)))
    assert sizes == sorted(sizes, reverse=True)


def test_rank_predictions_errors():
    with pytest.raises(ValueError):
        rank_predictions(torch.zeros(0), [], 0.5)
    with pytest.raises(ValueError):
        rank_predictions(torch.zeros(2), ["a", "b"], 1.5)


def test_rank_topk_prefix_property():
    scores = torch.rand(8)
    preds = rank_predictions(scores, [f"t{i}" for i in range(8)], 0.5)
    top3 = rank_topk(preds, 3)
    top5 = rank_topk(preds, 5)
    assert top3 == top5[:3]
    assert rank_topk(preds, 8) == preds
    assert rank_topk(preds, 1)[0].tag_id == int(torch.argmax(scores))


def test_rank_topk_bounds():
    preds = [TagPrediction(0, "a", 0.5, False)]
    with pytest.raises(ValueError):
        rank_topk(preds, 0)
    with pytest.raises(ValueError):
        rank_topk(preds, 2)


def test_predict_tags_end_to_end(tiny_dataset):
    ds = tiny_dataset
    cfg = desk_config(dropout=0.0)
    torch.manual_seed(0)
    model = M3PT(cfg, len(ds.tokens), ds.G, ds.C)
    poi = ds.pois[0]
    texts = [ds.tokens.encode(t) for t in poi.texts]
    grids = [img.grid for img in poi.images]
    preds = model.predict_tags(texts, grids, ds.tags, ds.tokens)
    assert len(preds) == len(ds.tags)
    scores = [p.score for p in preds]
    assert scores == sorted(scores, reverse=True)
    for p in preds:
        assert p.accepted == (p.score > cfg.pi)


def test_score_invariant_to_candidate_order(tiny_dataset):
    """Scoring tag t does not depend on which other tags are in the batch."""
    ds = tiny_dataset
    torch.manual_seed(0)
    model = M3PT(desk_config(dropout=0.0), len(ds.tokens), ds.G, ds.C)
    model.eval()
    poi = ds.pois[0]
    texts = [[ds.tokens.encode(t) for t in poi.texts]]
    grids = [[img.grid for img in poi.images]]
    content = model.content_embeddings(texts, grids)
    tag_tokens = [ds.tokens.encode(t) for t in ds.tags.tags]
    embs = model.encode_tag_batch(tag_tokens)
    full = model.score_all_tags(content, embs)[0]
    reversed_scores = model.score_all_tags(content, embs.flip(0))[0].flip(0)
    assert torch.allclose(full, reversed_scores, atol=1e-6)
