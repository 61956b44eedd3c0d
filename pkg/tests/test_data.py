import numpy as np
import pytest
from dataclasses import replace

from rbal.data import (
    CsvParseError,
    GeneratorConfig,
    MonitoringStream,
    StreamConfigError,
    generate_z24_analog,
    labels_from_indices,
    load_feature_csv,
    read_feature_csv,
    write_stream_csv,
)


class TestGenerator:
    def test_default_counts(self):
        cfg = GeneratorConfig()
        # 1000 rows, cold block [300, 380), damage from 884, tail 116 split in halves
        np.testing.assert_array_equal(cfg.class_counts(), [804, 80, 58, 58])
        stream = generate_z24_analog(cfg)
        assert len(stream) == 1000
        np.testing.assert_array_equal(stream.class_counts(), cfg.class_counts())

    def test_segment_positions(self):
        labels = generate_z24_analog().labels
        assert np.all(labels[300:380] == 2)
        assert labels[299] == 1 and labels[380] == 1
        assert np.all(labels[884:942] == 3) and np.all(labels[942:] == 4)

    def test_same_seed_identical(self):
        a = generate_z24_analog(GeneratorConfig(seed=3))
        b = generate_z24_analog(GeneratorConfig(seed=3))
        assert a.features.tobytes() == b.features.tobytes()
        assert not np.array_equal(a.features, generate_z24_analog(GeneratorConfig(seed=4)).features)

    def test_cold_rows_stiffer(self):
        s = generate_z24_analog()
        assert s.features[s.labels == 2, 0].mean() > s.features[s.labels == 1, 0].mean()
        assert s.features[s.labels == 4, 0].mean() < s.features[s.labels == 1, 0].mean()

    def test_sample_means_match_configuration(self):
        cfg = GeneratorConfig(total_count=20_000, seed=1)
        s = generate_z24_analog(cfg)
        means = np.asarray(cfg.means)
        covs = np.asarray(cfg.covariances)
        for k in range(4):
            rows = s.features[s.labels == k + 1]
            tol = 3 * np.sqrt(np.diag(covs[k])) / np.sqrt(len(rows))
            assert np.all(np.abs(rows.mean(axis=0) - means[k]) <= tol)

    def test_cold_variance_doubled(self):
        cfg = GeneratorConfig()
        covs = np.asarray(cfg.covariances)
        np.testing.assert_allclose(np.diag(covs[0]), 0.06**2)
        np.testing.assert_allclose(covs[1], 2 * covs[0])

    @pytest.mark.parametrize("change", [
        {"total_count": 10, "damage_start_fraction": 0.95},  # damage tail of one row empties class 4
        {"cold_block": (0.3, 0.3)},
        {"damage_start_fraction": 1.0},
        {"cold_block": (0.5, 0.9)},
    ])
    def test_invalid_configs(self, change):
        with pytest.raises(StreamConfigError):
            generate_z24_analog(replace(GeneratorConfig(), **change))

    def test_dict_round_trip(self):
        cfg = GeneratorConfig(total_count=500, seed=9)
        back = GeneratorConfig.from_dict(cfg.to_dict())
        assert back.to_dict() == cfg.to_dict()
        np.testing.assert_array_equal(generate_z24_analog(back).features, generate_z24_analog(cfg).features)


class TestLabels:
    def test_reference_split(self):
        labels = labels_from_indices(3932, 3476, [(1200, 1500)])
        counts = np.bincount(labels, minlength=5)[1:]
        assert counts[2] == counts[3] == 228
        assert counts[1] == 300

    def test_odd_tail_extra_row_to_incipient(self):
        labels = labels_from_indices(11, 6)
        np.testing.assert_array_equal(labels[6:], [3, 3, 3, 4, 4])

    def test_no_cold_ranges(self):
        assert not np.any(labels_from_indices(100, 80) == 2)

    def test_damage_at_end(self):
        labels = labels_from_indices(50, 50, [(10, 20)])
        assert set(np.unique(labels)) == {1, 2}

    def test_cold_range_after_damage_rejected(self):
        with pytest.raises(StreamConfigError):
            labels_from_indices(100, 50, [(40, 60)])

    def test_pure_function(self):
        a = labels_from_indices(3932, 3476, [(1200, 1500)])
        b = labels_from_indices(3932, 3476, [(1200, 1500)])
        assert a.tobytes() == b.tobytes()


class TestCsv:
    def test_round_trip(self, tmp_path):
        s = generate_z24_analog(GeneratorConfig(total_count=200))
        path = tmp_path / "s.csv"
        write_stream_csv(s, path)
        M = read_feature_csv(path)
        np.testing.assert_allclose(M[:, :4], s.features, atol=5e-7)
        np.testing.assert_array_equal(M[:, 4], s.labels)

    def test_load_assigns_labels(self, tmp_path):
        path = tmp_path / "f.csv"
        np.savetxt(path, np.random.default_rng(0).normal(size=(20, 4)), delimiter=",")
        s = load_feature_csv(path, 14, [(2, 5)])
        np.testing.assert_array_equal(s.labels, labels_from_indices(20, 14, [(2, 5)]))

    def test_non_numeric_row_reported(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3,4\n1,2,x,4\n")
        with pytest.raises(CsvParseError, match="row 2"):
            read_feature_csv(path)

    def test_ragged_row_reported(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("1,2,3,4\n1,2,3,4\n1,2,3\n")
        with pytest.raises(CsvParseError, match="row 3"):
            read_feature_csv(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(CsvParseError):
            read_feature_csv(path)


class TestStream:
    def test_label_range_checked(self):
        with pytest.raises(ValueError):
            MonitoringStream(np.zeros((2, 4)), np.array([1, 5]))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            MonitoringStream(np.zeros((3, 4)), np.array([1, 2]))

    def test_subset(self):
        s = generate_z24_analog(GeneratorConfig(total_count=100))
        sub = s.subset([0, 50, 99])
        assert len(sub) == 3
        np.testing.assert_array_equal(sub.labels, s.labels[[0, 50, 99]])
