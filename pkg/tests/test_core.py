import json

import numpy as np
import pytest

from bgsindy import (Axis, Dataset, DatasetError, add_noise, load_dataset,
                     save_dataset, subsample)


def make_dataset(nx=16, nt=12, nf=1, boundary="periodic", seed=0):
    rng = np.random.default_rng(seed)
    fields = {name: rng.standard_normal((nx, nt))
              for name in ["u", "v"][:nf]}
    return Dataset((Axis(0.0, 0.1, nx),), Axis(0.0, 0.01, nt), fields,
                   {name: boundary for name in fields}, {"origin": "test"})


class TestDatasetValidation:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(DatasetError, match="shape"):
            Dataset((Axis(0, 0.1, 8),), Axis(0, 0.1, 4),
                    {"u": np.zeros((8, 5))}, {"u": "periodic"})

    def test_nonfinite_rejected(self):
        arr = np.zeros((8, 4))
        arr[3, 2] = np.nan
        with pytest.raises(DatasetError, match="non-finite"):
            Dataset((Axis(0, 0.1, 8),), Axis(0, 0.1, 4), {"u": arr}, {"u": "periodic"})

    def test_bad_axis(self):
        with pytest.raises(DatasetError):
            Axis(0.0, -1.0, 8)
        with pytest.raises(DatasetError):
            Axis(0.0, 1.0, 3)

    def test_fields_immutable(self):
        ds = make_dataset()
        with pytest.raises(ValueError):
            ds.fields["u"][0, 0] = 5.0


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = make_dataset(nf=2)
        save_dataset(ds, tmp_path / "d")
        back = load_dataset(tmp_path / "d")
        for name in ds.fields:
            assert back.fields[name].tobytes() == ds.fields[name].tobytes()
        assert back.boundary == ds.boundary
        assert back.metadata == ds.metadata
        assert back.space_axes == ds.space_axes
        assert back.time_axis == ds.time_axis

    def test_truncated_binary_rejected(self, tmp_path):
        ds = make_dataset()
        save_dataset(ds, tmp_path / "d")
        payload = (tmp_path / "d.bin").read_bytes()
        (tmp_path / "d.bin").write_bytes(payload[:-16])
        with pytest.raises(DatasetError, match="size mismatch"):
            load_dataset(tmp_path / "d")

    def test_malformed_header_rejected(self, tmp_path):
        ds = make_dataset()
        save_dataset(ds, tmp_path / "d")
        (tmp_path / "d.json").write_text("{not json")
        with pytest.raises(DatasetError, match="malformed"):
            load_dataset(tmp_path / "d")

    def test_nonfinite_payload_rejected(self, tmp_path):
        ds = make_dataset()
        save_dataset(ds, tmp_path / "d")
        bad = np.full(ds.total_points, np.inf)
        (tmp_path / "d.bin").write_bytes(bad.astype("<f8").tobytes())
        with pytest.raises(DatasetError, match="non-finite"):
            load_dataset(tmp_path / "d")

    def test_kdv_dataset_round_trip(self, kdv_dataset, tmp_path):
        # published sizing: 260 space points, 3001 slices at 0.001 spacing
        assert kdv_dataset.shape == (260, 3001)
        assert np.isclose(kdv_dataset.time_axis.spacing, 1e-3)
        save_dataset(kdv_dataset, tmp_path / "kdv")
        back = load_dataset(tmp_path / "kdv")
        assert back.fields["u"].tobytes() == kdv_dataset.fields["u"].tobytes()


class TestSubsample:
    def test_all_strategy_identity(self):
        ds = make_dataset()
        s = subsample(ds, ds.total_points, "all", seed=3)
        assert np.array_equal(s.indices, np.arange(ds.total_points))

    def test_all_requires_full_count(self):
        ds = make_dataset()
        with pytest.raises(DatasetError):
            subsample(ds, 5, "all")

    def test_determinism(self, kdv_dataset):
        a = subsample(kdv_dataset, 1000, "uniform-random", seed=42)
        b = subsample(kdv_dataset, 1000, "uniform-random", seed=42)
        assert np.array_equal(a.indices, b.indices)
        c = subsample(kdv_dataset, 1000, "latin-hypercube", seed=42)
        d = subsample(kdv_dataset, 1000, "latin-hypercube", seed=42)
        assert np.array_equal(c.indices, d.indices)
        assert not np.array_equal(a.indices, c.indices)

    def test_out_of_range_n(self):
        ds = make_dataset()
        with pytest.raises(DatasetError):
            subsample(ds, ds.total_points + 1, "uniform-random")

    def test_latin_hypercube_stratification(self):
        # 10 samples on a 100 x 100 grid: each 10-wide stratum of each axis
        # must contain exactly one sample
        ds = Dataset((Axis(0, 1.0, 100),), Axis(0, 1.0, 100),
                     {"u": np.zeros((100, 100))}, {"u": "periodic"})
        s = subsample(ds, 10, "latin-hypercube", seed=7)
        xi, ti = np.unravel_index(s.indices, (100, 100))
        assert sorted(np.unique(xi // 10)) == list(range(10))
        assert sorted(np.unique(ti // 10)) == list(range(10))
        assert np.bincount(xi // 10).max() == 1
        assert np.bincount(ti // 10).max() == 1

    def test_time_window(self):
        ds = make_dataset(nt=12)
        s = subsample(ds, 16 * 4, "all", time_window=(4, 8))
        _, ti = np.unravel_index(s.indices, ds.shape)
        assert ti.min() == 4 and ti.max() == 7


class TestAddNoise:
    def test_gamma_zero_identity(self):
        ds = make_dataset()
        assert add_noise(ds, "u", 0.0, seed=1) is ds

    def test_determinism_and_scale(self, kdv_dataset):
        a = add_noise(kdv_dataset, "u", 0.25, seed=5)
        b = add_noise(kdv_dataset, "u", 0.25, seed=5)
        assert np.array_equal(a.fields["u"], b.fields["u"])
        delta = a.fields["u"] - kdv_dataset.fields["u"]
        target = 0.25 * kdv_dataset.fields["u"].std()
        # >= 1e5 points: sample std within 2% of the requested amplitude
        assert abs(delta.std() / target - 1.0) < 0.02

    def test_shape_and_other_fields_untouched(self):
        ds = make_dataset(nf=2)
        noisy = add_noise(ds, "u", 0.1, seed=2)
        assert noisy.fields["u"].shape == ds.fields["u"].shape
        assert np.array_equal(noisy.fields["v"], ds.fields["v"])

    def test_unknown_field(self):
        ds = make_dataset()
        with pytest.raises(DatasetError):
            add_noise(ds, "w", 0.1)

    def test_negative_gamma(self):
        ds = make_dataset()
        with pytest.raises(DatasetError):
            add_noise(ds, "u", -0.1)
