import numpy as np
import pytest

from detkit.cascade import (
    CascadeConfig, StageOutput, assign_labels, cascade_inference,
    constant_classifier, identity_regressor, jitter_boxes, max_ious,
    oracle_regressor, quality_distribution, refine, simulate_refinement,
)
from detkit.geometry import Box, Delta, encode, iou


class TestConfig:
    def test_defaults(self):
        cfg = CascadeConfig()
        assert cfg.thresholds == (0.5, 0.6, 0.7)
        assert cfg.score_fusion == "average"

    def test_thresholds_strictly_increasing(self):
        with pytest.raises(ValueError):
            CascadeConfig(thresholds=(0.5, 0.5, 0.7))
        with pytest.raises(ValueError):
            CascadeConfig(thresholds=(0.7, 0.6))
        with pytest.raises(ValueError):
            CascadeConfig(thresholds=(0.0, 0.5))

    def test_stage_output_parallel_arrays(self):
        with pytest.raises(ValueError):
            StageOutput([Box(0, 0, 1, 1)], [], [1])


class TestAssignLabels:
    def test_coincident_high_threshold(self):
        gt = Box(10, 10, 20, 20)
        got = assign_labels([gt], [(gt, 3)], u=0.7)
        assert got == [(3, 0)]

    def test_threshold_crossing(self):
        # iou(proposal, gt) = 0.55 exactly
        proposal = Box(0, 0, 1, 1)
        gt = Box(0, 0, 1, 0.55)
        assert iou(proposal, gt) == pytest.approx(0.55)
        assert assign_labels([proposal], [(gt, 2)], u=0.6) == [(0, -1)]
        assert assign_labels([proposal], [(gt, 2)], u=0.5) == [(2, 0)]

    def test_no_ground_truth(self):
        got = assign_labels([Box(0, 0, 1, 1)], [], u=0.5)
        assert got == [(0, -1)]

    def test_argmax_matching(self):
        p = Box(0, 0, 10, 10)
        gts = [(Box(5, 5, 15, 15), 1), (Box(0, 0, 10, 9), 2)]
        label, idx = assign_labels([p], gts, u=0.5)[0]
        assert (label, idx) == (2, 1)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(0)
        gts = [(Box(10, 10, 30, 30), 1), (Box(40, 40, 70, 80), 2)]
        proposals = jitter_boxes([g for g, _ in gts] * 20, rng, 0.3, 0.3)
        prev_fg = None
        for u in (0.5, 0.6, 0.7, 0.8):
            fg = {i for i, (label, _) in
                  enumerate(assign_labels(proposals, gts, u)) if label >= 1}
            if prev_fg is not None:
                assert fg <= prev_fg
            prev_fg = fg

    def test_background_class_rejected(self):
        with pytest.raises(ValueError):
            assign_labels([Box(0, 0, 1, 1)], [(Box(0, 0, 1, 1), 0)], u=0.5)


class TestRefine:
    def test_zero_deltas(self):
        boxes = [Box(0, 0, 2, 2), Box(1, 1, 4, 5)]
        zeros = [Delta(0, 0, 0, 0)] * 2
        assert refine(boxes, zeros) == boxes

    def test_exact_round_trip(self):
        proposals = [Box(0, 0, 2, 2), Box(5, 5, 9, 9)]
        targets = [Box(1, 1, 3, 3), Box(4, 6, 10, 8)]
        deltas = [encode(p, g) for p, g in zip(proposals, targets)]
        refined = refine(proposals, deltas)
        for got, want in zip(refined, targets):
            assert got.as_xyxy() == pytest.approx(want.as_xyxy(), abs=1e-12)

    def test_halfway_steps_converge(self):
        p = Box(0, 0, 2, 2)
        g = Box(10, 10, 18, 18)
        d0 = iou(p, g)
        for _ in range(2):
            p = refine([p], [encode(p, g).scaled(0.5)])[0]
        assert iou(p, g) > d0
        gap = max(abs(u - v) for u, v in zip(p.as_xyxy(), g.as_xyxy()))
        assert gap < max(abs(u - v) for u, v in
                         zip(Box(0, 0, 2, 2).as_xyxy(), g.as_xyxy()))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            refine([Box(0, 0, 1, 1)], [])


class TestCascadeInference:
    def test_identity_stages_preserve_boxes(self):
        proposals = [Box(0, 0, 4, 4), Box(2, 2, 8, 10)]
        stage = (constant_classifier(2), identity_regressor())
        dets = cascade_inference(proposals, [stage] * 3)
        assert [d.box for d in dets] == proposals

    def test_single_stage(self):
        proposals = [Box(0, 0, 4, 4)]
        stage = (constant_classifier(3), identity_regressor())
        dets = cascade_inference(proposals, [stage],
                                 CascadeConfig(thresholds=(0.5,)))
        assert len(dets) == 1
        assert dets[0].box == proposals[0]

    def test_oracle_regressors_reach_ground_truth(self):
        rng = np.random.default_rng(1)
        gts = [Box(10, 10, 30, 30), Box(50, 40, 90, 100)]
        proposals = jitter_boxes(gts * 10, rng, 0.2, 0.2)
        stage = (constant_classifier(2), oracle_regressor(gts))
        dets = cascade_inference(proposals, [stage] * 3)
        for d in dets:
            best = max(iou(d.box, g) for g in gts)
            assert best > 1.0 - 1e-9

    def test_stage_count_mismatch(self):
        stage = (constant_classifier(2), identity_regressor())
        with pytest.raises(ValueError):
            cascade_inference([Box(0, 0, 1, 1)], [stage] * 2)

    def test_score_fusion_average_vs_last(self):
        proposals = [Box(0, 0, 4, 4)]

        def clf_factory(p_fg):
            def classify(boxes):
                return [(1.0 - p_fg, p_fg) for _ in boxes]
            return classify

        stages = [(clf_factory(p), identity_regressor())
                  for p in (0.2, 0.4, 0.9)]
        avg = cascade_inference(proposals, stages,
                                CascadeConfig(score_fusion="average"))
        last = cascade_inference(proposals, stages,
                                 CascadeConfig(score_fusion="last"))
        assert avg[0].score == pytest.approx(0.5)
        assert last[0].score == pytest.approx(0.9)


class TestQualityDistribution:
    def test_perfect_proposals(self):
        gts = [Box(0, 0, 10, 10), Box(20, 20, 30, 30)]
        counts = quality_distribution(gts, gts, bins=10)
        assert counts[-1] == 2
        assert counts[:-1].sum() == 0

    def test_disjoint_proposals(self):
        counts = quality_distribution([Box(50, 50, 60, 60)],
                                      [Box(0, 0, 10, 10)], bins=10)
        assert counts[0] == 1
        assert counts[1:].sum() == 0

    def test_requires_ground_truth(self):
        with pytest.raises(ValueError):
            quality_distribution([Box(0, 0, 1, 1)], [])

    def test_jittered_fraction_reported(self):
        rng = np.random.default_rng(2)
        gts = [Box(10, 10, 50, 50)]
        proposals = jitter_boxes(gts * 200, rng, 0.3, 0.3)
        counts = quality_distribution(proposals, gts, bins=10)
        assert counts.sum() == 200
        frac_high = float(np.mean(max_ious(proposals, gts) >= 0.7))
        assert 0.0 <= frac_high < 0.5  # heavy jitter keeps quality low


class TestSimulateRefinement:
    def test_quality_improves_monotonically(self):
        ok = 0
        for seed in range(20):
            stages = simulate_refinement(seed)
            fracs = [float(np.mean(s >= 0.7)) for s in stages]
            if all(b >= a for a, b in zip(fracs, fracs[1:])):
                ok += 1
        assert ok >= 19

    def test_deterministic(self):
        a = simulate_refinement(5)
        b = simulate_refinement(5)
        for u, v in zip(a, b):
            assert np.array_equal(u, v)

    def test_stage_count(self):
        stages = simulate_refinement(0, thresholds=(0.5, 0.6))
        assert len(stages) == 3  # raw proposals + one per stage
