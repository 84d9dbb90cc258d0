import math
import random

import pytest

from agrifleet.fielddata import (
    ClassLabel,
    DegenerateSpectrum,
    GridSpec,
    ImageRecord,
    NoisyOracleClassifier,
    OracleClassifier,
    RecordStore,
    build_heatmap,
    make_classifier,
    ndvi,
    sample_spectrum,
)
from agrifleet.geo import GeoPoint, unproject, LocalPoint


ORIGIN = GeoPoint(9.0, 38.7)


def record_at(i, local_x=5.0, local_y=5.0, true_class=ClassLabel.SOIL, red=0.3, nir=0.35, uav=1):
    pos = unproject(ORIGIN, LocalPoint(local_x, local_y))
    return ImageRecord(
        record_id=f"{uav}-{i:05d}",
        uav_id=uav,
        position=pos,
        tick=i,
        red=red,
        nir=nir,
        true_class=true_class,
    )


class TestNdvi:
    def test_balanced_spectrum_is_zero(self):
        assert ndvi(record_at(0, red=0.4, nir=0.4)) == 0.0

    def test_pure_nir_is_one(self):
        assert ndvi(record_at(0, red=0.0, nir=0.5)) == 1.0

    def test_arithmetic(self):
        assert ndvi(record_at(0, red=0.2, nir=0.6)) == pytest.approx(0.5)

    def test_degenerate(self):
        with pytest.raises(DegenerateSpectrum):
            ndvi(record_at(0, red=0.0, nir=0.0))

    def test_bounded_and_monotone_in_nir(self):
        rng = random.Random(2)
        for _ in range(300):
            red = rng.uniform(0.01, 1.0)
            nir1 = rng.uniform(0.0, 0.99)
            nir2 = min(1.0, nir1 + rng.uniform(0.001, 0.2))
            v1 = ndvi(record_at(0, red=red, nir=nir1))
            v2 = ndvi(record_at(0, red=red, nir=nir2))
            assert -1.0 <= v1 <= 1.0
            assert v2 >= v1

    def test_spectra_separate_classes(self):
        rng = random.Random(3)
        values = {}
        for label in ClassLabel:
            red, nir = sample_spectrum(label, rng, jitter=0.0)
            values[label] = ndvi(record_at(0, red=red, nir=nir))
        ordered = sorted(values.values())
        assert all(b - a > 0.05 for a, b in zip(ordered, ordered[1:]))


class TestClassifiers:
    def test_oracle_returns_truth(self):
        clf = OracleClassifier()
        rec = record_at(0, true_class=ClassLabel.BROADLEAF_WEED)
        assert clf.classify(rec) == (ClassLabel.BROADLEAF_WEED, 1.0)

    def test_noisy_with_zero_epsilon_is_oracle(self):
        clf = NoisyOracleClassifier(epsilon=0.0, seed=1)
        for i in range(50):
            rec = record_at(i, true_class=ClassLabel.GRASS)
            label, _ = clf.classify(rec)
            assert label is ClassLabel.GRASS

    def test_noisy_accuracy_near_target(self):
        epsilon = 0.034
        clf = NoisyOracleClassifier(epsilon=epsilon, seed=7)
        n = 15336
        hits = 0
        for i in range(n):
            rec = record_at(i, true_class=ClassLabel(i % 4))
            label, _ = clf.classify(rec)
            hits += label is rec.true_class
        accuracy = hits / n
        sigma = math.sqrt(epsilon * (1 - epsilon) / n)
        assert abs(accuracy - (1 - epsilon)) <= 3 * sigma

    def test_factory(self):
        assert make_classifier("oracle").name == "oracle"
        assert make_classifier("noisy_oracle", epsilon=0.1, seed=2).name == "noisy_oracle"
        with pytest.raises(ValueError):
            make_classifier("cnn")


class TestRecordStore:
    def test_fresh_ingest(self):
        store = RecordStore()
        count = store.ingest("m1", [record_at(i) for i in range(100)])
        assert count == 100
        assert len(store) == 100

    def test_duplicate_manifest_ignored(self):
        store = RecordStore()
        records = [record_at(i) for i in range(100)]
        store.ingest("m1", records)
        again = store.ingest("m1", records)
        assert again == 0
        assert len(store) == 100
        assert store.duplicate_manifests == ["m1"]

    def test_overlapping_manifests_store_union(self):
        store = RecordStore()
        store.ingest("m1", [record_at(i) for i in range(20)])
        store.ingest("m2", [record_at(i) for i in range(10, 40)])
        assert len(store) == 40

    def test_jsonl_round_trip(self, tmp_path):
        path = tmp_path / "records.jsonl"
        store = RecordStore(path)
        store.ingest("m1", [record_at(i, true_class=ClassLabel.CROP) for i in range(7)])
        reloaded = RecordStore(path)
        assert len(reloaded) == 7
        assert reloaded.records[0].true_class is ClassLabel.CROP


class TestHeatmap:
    def spec(self, width=4, height=4, cell=10.0):
        return GridSpec(origin=ORIGIN, cell_size_m=cell, width=width, height=height)

    def test_empty_records_all_nodata(self):
        grid = build_heatmap([], self.spec(), OracleClassifier())
        assert all(cell.majority() is None for row in grid.cells for cell in row)

    def test_single_class_uniform(self):
        records = [
            record_at(i, local_x=5 + 10 * (i % 4), local_y=5 + 10 * (i // 4 % 4),
                      true_class=ClassLabel.CROP)
            for i in range(16)
        ]
        grid = build_heatmap(records, self.spec(), OracleClassifier())
        for row in grid.cells:
            for cell in row:
                label, conf = cell.majority()
                assert label is ClassLabel.CROP
                assert conf == 1.0

    def test_count_conservation_and_out_of_grid(self):
        records = [record_at(i) for i in range(10)] + [
            record_at(100 + i, local_x=500.0) for i in range(3)
        ]
        grid = build_heatmap(records, self.spec(), OracleClassifier())
        assert grid.binned == 10
        assert grid.out_of_grid == 3

    def test_majority_tie_breaks_to_lower_enum(self):
        records = [
            record_at(0, true_class=ClassLabel.GRASS),
            record_at(1, true_class=ClassLabel.SOIL),
        ]
        grid = build_heatmap(records, self.spec(), OracleClassifier())
        label, conf = grid.cells[0][0].majority()
        assert label is ClassLabel.SOIL
        assert conf == 0.5

    def test_determinism_with_seeded_classifier(self):
        records = [record_at(i, true_class=ClassLabel(i % 4)) for i in range(200)]
        g1 = build_heatmap(records, self.spec(), NoisyOracleClassifier(0.2, seed=5))
        g2 = build_heatmap(records, self.spec(), NoisyOracleClassifier(0.2, seed=5))
        assert g1.to_json() == g2.to_json()

    def test_weed_rectangle_matches_ground_truth(self):
        # records on a regular grid; truth: weed inside x in [10, 30), soil elsewhere
        records = []
        idx = 0
        for gx in range(8):
            for gy in range(8):
                x, y = gx * 5 + 2.5, gy * 5 + 2.5
                truth = ClassLabel.BROADLEAF_WEED if 10 <= x < 30 else ClassLabel.SOIL
                records.append(record_at(idx, local_x=x, local_y=y, true_class=truth))
                idx += 1
        spec = GridSpec(origin=ORIGIN, cell_size_m=5.0, width=8, height=8)
        grid = build_heatmap(records, spec, OracleClassifier())
        for row_i, row in enumerate(grid.cells):
            for col_i, cell in enumerate(row):
                label, _ = cell.majority()
                cx = col_i * 5 + 2.5
                expected = ClassLabel.BROADLEAF_WEED if 10 <= cx < 30 else ClassLabel.SOIL
                assert label is expected
