"""Synthetic page generator: determinism, self-consistency, corpus layout."""

import numpy as np
import pytest

from balloonseg import data, synthetic

WHITE_CUTOFF = 245  # balloons paint pure white; everything else stays below


def white_mask(image: np.ndarray) -> np.ndarray:
    return (image >= WHITE_CUTOFF).all(axis=-1)


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        spec = synthetic.SynthSpec()
        a = synthetic.generate_synthetic_page(spec, 123)
        b = synthetic.generate_synthetic_page(spec, 123)
        assert np.array_equal(a.image, b.image)
        assert [ann.vertices for ann in a.annotations] == \
               [ann.vertices for ann in b.annotations]

    def test_different_seeds_differ(self):
        spec = synthetic.SynthSpec()
        a = synthetic.generate_synthetic_page(spec, 1)
        b = synthetic.generate_synthetic_page(spec, 2)
        assert not np.array_equal(a.image, b.image)


class TestContent:
    def test_zero_balloons_gives_empty_mask(self):
        spec = synthetic.SynthSpec(balloons_per_page=(0, 0))
        page = synthetic.generate_synthetic_page(spec, 7)
        assert page.annotations == []
        mask = data.rasterize(page.annotations, spec.page_h, spec.page_w,
                              spec.page_h, spec.page_w)
        assert mask.sum() == 0

    @pytest.mark.parametrize("seed", [3, 17, 92])
    def test_ground_truth_matches_painted_carrier(self, seed):
        # IoU between each rasterized outline and the white paint it produced
        spec = synthetic.SynthSpec()
        page = synthetic.generate_synthetic_page(spec, seed)
        assert page.annotations, "expected at least one balloon"
        white = white_mask(page.image)
        for ann in page.annotations:
            gt = data.rasterize([ann], spec.page_h, spec.page_w,
                                spec.page_h, spec.page_w).astype(bool)
            xs = [v[0] for v in ann.vertices]
            ys = [v[1] for v in ann.vertices]
            x0 = max(0, int(min(xs)) - 2)
            x1 = min(spec.page_w, int(max(xs)) + 3)
            y0 = max(0, int(min(ys)) - 2)
            y1 = min(spec.page_h, int(max(ys)) + 3)
            w = white[y0:y1, x0:x1]
            g = gt[y0:y1, x0:x1]
            union = (w | g).sum()
            iou = (w & g).sum() / union if union else 1.0
            assert iou >= 0.98, f"balloon {ann.id}: IoU {iou:.4f}"

    def test_vertices_within_tolerated_bounds(self):
        spec = synthetic.SynthSpec()
        for seed in range(10):
            page = synthetic.generate_synthetic_page(spec, seed)
            for ann in page.annotations:
                for x, y in ann.vertices:
                    assert -0.1 * spec.page_w <= x <= 1.1 * spec.page_w
                    assert -0.1 * spec.page_h <= y <= 1.1 * spec.page_h

    def test_balloon_fraction_within_spec_bounds(self):
        spec = synthetic.SynthSpec()
        lo, hi = spec.balloon_frac_bounds
        for seed in range(100):
            page = synthetic.generate_synthetic_page(spec, seed)
            mask = data.rasterize(page.annotations, spec.page_h, spec.page_w,
                                  spec.page_h, spec.page_w)
            frac = mask.mean()
            assert lo <= frac <= hi, f"seed {seed}: fraction {frac:.3f}"

    def test_zero_page_dims_rejected(self):
        with pytest.raises(ValueError):
            synthetic.SynthSpec(page_w=0)


class TestCorpus:
    def test_books_assigned_in_groups(self):
        spec = synthetic.SynthSpec()
        samples = synthetic.generate_corpus(spec, 16, seed=5, pages_per_book=8)
        assert len(samples) == 16
        assert {s.book_id for s in samples} == {"book00", "book01"}
        assert len({s.page_id for s in samples}) == 16

    def test_corpus_deterministic(self):
        spec = synthetic.SynthSpec()
        a = synthetic.generate_corpus(spec, 4, seed=9)
        b = synthetic.generate_corpus(spec, 4, seed=9)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.image, sb.image)
