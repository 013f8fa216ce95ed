import json

import numpy as np
import pytest

from ensemblecam import faithfulness as ff
from ensemblecam.cam import RetentionMask
from ensemblecam.model import forward
from ensemblecam.ops import ShapeError
from ensemblecam.rng import make_rng
from ensemblecam.synthdata import SynthSpec, render_image

from helpers import const_image, passthrough_model


def synth_samples(n, seed=5):
    spec = SynthSpec(per_class=max(n, 1), seed=seed)
    samples = []
    for i in range(n):
        label = i % 2
        img = render_image(spec, "spoof" if label else "live", i)[None]
        samples.append((f"img{i}", img, label))
    return samples


class TestRetainRegions:
    def test_all_ones_mask_identity(self, rng):
        img = rng.uniform(size=(1, 3, 8, 8))
        mask = RetentionMask(np.ones((8, 8), bool), 64)
        np.testing.assert_array_equal(ff.retain_regions(img, mask), img)

    def test_all_zeros_mask(self, rng):
        img = rng.uniform(size=(1, 3, 8, 8))
        mask = RetentionMask(np.zeros((8, 8), bool), 0)
        assert not ff.retain_regions(img, mask).any()

    def test_checkerboard_matches_loop_oracle(self, rng):
        img = rng.uniform(size=(1, 3, 6, 6))
        board = np.indices((6, 6)).sum(axis=0) % 2 == 0
        out = ff.retain_regions(img, RetentionMask(board, int(board.sum())))
        for c in range(3):
            for i in range(6):
                for j in range(6):
                    expected = img[0, c, i, j] if board[i, j] else 0.0
                    assert out[0, c, i, j] == expected

    def test_fill_value(self, rng):
        img = rng.uniform(size=(1, 3, 4, 4))
        mask = RetentionMask(np.zeros((4, 4), bool), 0)
        out = ff.retain_regions(img, mask, fill=0.25)
        assert (out == 0.25).all()

    def test_resolution_mismatch_rejected(self, rng):
        img = rng.uniform(size=(1, 3, 8, 8))
        with pytest.raises(ShapeError):
            ff.retain_regions(img, RetentionMask(np.ones((4, 4), bool), 16))


class TestRandomMask:
    def test_full_count_all_ones(self):
        mask = ff.random_mask(64, 8, 8, make_rng(0, 0))
        assert mask.mask.all()

    def test_single_pixel(self):
        mask = ff.random_mask(1, 8, 8, make_rng(0, 0))
        assert mask.mask.sum() == 1

    def test_exact_cardinality(self):
        for count in (5, 17, 40):
            assert ff.random_mask(count, 8, 8, make_rng(1, count)).retained_count == count

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ff.random_mask(0, 8, 8, make_rng(0, 0))
        with pytest.raises(ValueError):
            ff.random_mask(65, 8, 8, make_rng(0, 0))

    def test_per_index_determinism(self):
        m1 = ff.random_mask(10, 8, 8, make_rng(7, 2, 3))
        m2 = ff.random_mask(10, 8, 8, make_rng(7, 2, 3))
        m3 = ff.random_mask(10, 8, 8, make_rng(7, 2, 4))
        np.testing.assert_array_equal(m1.mask, m2.mask)
        assert (m1.mask != m3.mask).any()


class TestConfidenceDrop:
    def test_identity_masking_zero_drop(self, rng):
        model = passthrough_model(w_live=2.0)
        img = const_image(0.8)
        assert ff.confidence_drop(model, img, img) == pytest.approx(0.0)

    def test_softmax_fixture_drop_50_points(self):
        # passthrough logits: original m=1 -> (ln 13.5 + ln(2/3), 0) giving
        # softmax (0.9, 0.1); all-zero mask -> m=0 -> (ln(2/3), 0) giving (0.4, 0.6)
        model = passthrough_model(w_live=float(np.log(13.5)),
                                  b_live=float(np.log(2.0 / 3.0)))
        img = const_image(1.0)
        masked = ff.retain_regions(img, RetentionMask(np.zeros((64, 64), bool), 0))
        orig = forward(model, img)
        np.testing.assert_allclose(orig.probabilities, [0.9, 0.1], atol=1e-12)
        np.testing.assert_allclose(forward(model, masked).probabilities, [0.4, 0.6],
                                   atol=1e-12)
        assert ff.confidence_drop(model, img, masked) == pytest.approx(50.0, abs=1e-9)
        assert ff.prediction_change(model, img, masked) is True

    def test_paper_style_arithmetic_99_to_80(self):
        # probabilities 99% then 80% for the same class -> 19.0 points
        model = passthrough_model(w_live=float(np.log(99.0) - np.log(4.0)),
                                  b_live=float(np.log(4.0)))
        img = const_image(1.0)
        masked = ff.retain_regions(img, RetentionMask(np.zeros((64, 64), bool), 0))
        orig = forward(model, img)
        assert orig.confidence == pytest.approx(0.99, abs=1e-12)
        assert forward(model, masked).probabilities[0] == pytest.approx(0.80, abs=1e-12)
        assert ff.confidence_drop(model, img, masked) == pytest.approx(19.0, abs=1e-9)

    def test_negative_drop_not_clamped(self):
        model = passthrough_model(w_live=-1.0, b_live=1.0)
        img = const_image(1.0)  # logit0 = 0 -> (0.5, 0.5), pred 0
        masked = ff.retain_regions(img, RetentionMask(np.zeros((64, 64), bool), 0))
        # masked: logit0 = 1 -> confidence rises
        assert ff.confidence_drop(model, img, masked) < 0.0


class TestPredictionChange:
    def test_unmasked_false(self):
        model = passthrough_model(w_live=1.0)
        img = const_image(0.5)
        assert ff.prediction_change(model, img, img) is False

    def test_zero_mask_on_biased_model_false(self):
        # model biased to live stays live on an all-black input
        model = passthrough_model(w_live=1.0, b_live=0.2)
        img = const_image(0.9)
        masked = ff.retain_regions(img, RetentionMask(np.zeros((64, 64), bool), 0))
        assert ff.prediction_change(model, img, masked) is False


class TestEvaluateDataset:
    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            ff.evaluate_dataset(passthrough_model(), [], seed=0)

    def test_full_random_mask_zero_drop(self):
        model = passthrough_model(w_live=1.0)
        samples = synth_samples(1)
        report = ff.evaluate_dataset(model, samples, methods=["random"], seed=0)
        # the random mask is area-matched to the ensemble, not full; check
        # the invariant directly with a manual full mask instead
        _, img, _ = samples[0]
        full = RetentionMask(np.ones((64, 64), bool), 64 * 64)
        assert ff.confidence_drop(model, img, ff.retain_regions(img, full)) == 0.0
        assert not ff.prediction_change(model, img, ff.retain_regions(img, full))
        assert report.rows[0].method == "random"

    def test_aggregate_arithmetic(self):
        rows = [ff.ImageRecord("a", "m", 0, 0.9, 0, 0.8, 10),
                ff.ImageRecord("b", "m", 0, 0.8, 0, 0.6, 10),
                ff.ImageRecord("c", "m", 1, 0.7, 0, 0.4, 10)]
        drops = [r.drop for r in rows]
        np.testing.assert_allclose(drops, [10.0, 20.0, 30.0], atol=1e-9)
        assert np.mean(drops) == pytest.approx(20.0)
        changes = [r.changed for r in rows]
        assert changes == [False, False, True]
        assert 100.0 * sum(changes) / 3 == pytest.approx(33.333333, abs=1e-4)

    def test_report_aggregates_match_records(self):
        model = passthrough_model(w_live=2.0, b_spoof=0.3)
        report = ff.evaluate_dataset(model, synth_samples(4), seed=3)
        for row in report.rows:
            rs = [r for r in report.records if r.method == row.method]
            assert row.average_confidence_drop == pytest.approx(
                float(np.mean([r.drop for r in rs])))
            assert row.prediction_change_pct == pytest.approx(
                100.0 * sum(r.changed for r in rs) / len(rs))
            assert 0.0 <= row.prediction_change_pct <= 100.0

    def test_random_count_matches_ensemble_count(self):
        model = passthrough_model(w_live=2.0)
        report = ff.evaluate_dataset(model, synth_samples(3), seed=1)
        by_image = {}
        for r in report.records:
            by_image.setdefault(r.image_id, {})[r.method] = r.retained_count
        for counts in by_image.values():
            assert counts["random"] == counts["ensemble"]

    def test_order_independence(self):
        model = passthrough_model(w_live=2.0, b_spoof=0.1)
        samples = synth_samples(4)
        r1 = ff.evaluate_dataset(model, samples, seed=9)
        r2 = ff.evaluate_dataset(model, list(reversed(samples)), seed=9)
        key = lambda rec: (rec.image_id, rec.method)
        recs1 = sorted(r1.records, key=key)
        recs2 = sorted(r2.records, key=key)
        assert [(r.image_id, r.method, r.masked_confidence) for r in recs1] \
            == [(r.image_id, r.method, r.masked_confidence) for r in recs2]

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            ff.evaluate_dataset(passthrough_model(), synth_samples(1),
                                methods=["not_a_method"], seed=0)


class TestReportSerialization:
    def test_json_round_trip(self, tmp_path):
        model = passthrough_model(w_live=2.0)
        report = ff.evaluate_dataset(model, synth_samples(2), seed=4, dataset_id="unit")
        path = tmp_path / "report.json"
        report.write_json(path)
        payload = json.loads(path.read_text())
        assert payload["seed"] == 4
        assert payload["dataset_id"] == "unit"
        assert len(payload["records"]) == len(report.records)
        assert payload["full_scale_reference"]["ensemble"]["confidence_drop"] == 15.43

    def test_csv_layout_metric_rows_method_columns(self, tmp_path):
        model = passthrough_model(w_live=2.0)
        report = ff.evaluate_dataset(model, synth_samples(2), seed=4)
        path = tmp_path / "report.csv"
        report.write_csv(path)
        lines = path.read_text().splitlines()
        header = next(l for l in lines if l.startswith("Metric"))
        assert header.split(",")[1:] == list(ff.METHOD_NAMES)
        assert any(l.startswith("Average Confidence Drop") for l in lines)
        assert any(l.startswith("Prediction Change Percentage") for l in lines)

    def test_deterministic_bytes(self, tmp_path):
        model = passthrough_model(w_live=2.0)
        samples = synth_samples(2)
        r1 = ff.evaluate_dataset(model, samples, seed=4)
        r2 = ff.evaluate_dataset(model, samples, seed=4)
        assert r1.to_json() == r2.to_json()
