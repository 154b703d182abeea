import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rfml.core_geometry import PointCloud
from rfml.data_io import (
    DatasetSpec,
    ExperimentReport,
    generate,
    load_csv,
    load_report,
    report_json,
    save_csv,
    save_report,
)
from rfml.errors import InvalidParameterError, ParseError


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestGenerate:
    def test_sphere_on_surface(self):
        X = generate(DatasetSpec("sphere", 1000, 0)).data
        assert np.abs(np.linalg.norm(X, axis=1) - 1).max() <= 1e-12

    def test_sphere_radius(self):
        X = generate(DatasetSpec("sphere", 200, 3, {"radius": 2.5})).data
        assert np.abs(np.linalg.norm(X, axis=1) - 2.5).max() <= 1e-12

    def test_sphere_uniformity(self):
        X = generate(DatasetSpec("sphere", 1000, 0)).data
        assert np.all(np.abs(X.mean(0)) <= 0.05)

    def test_ellipsoid_equation(self):
        a, b, c = 2.0, 1.5, 0.5
        X = generate(DatasetSpec("ellipsoid", 500, 1, {"a": a, "b": b, "c": c})).data
        q = (X[:, 0] / a) ** 2 + (X[:, 1] / b) ** 2 + (X[:, 2] / c) ** 2
        assert np.abs(q - 1).max() <= 1e-12

    def test_swiss_roll_ranges(self):
        X = generate(DatasetSpec("swiss_roll", 800, 2)).data
        t = np.hypot(X[:, 0], X[:, 2])
        assert t.min() >= 1.5 * np.pi - 1e-12 and t.max() <= 4.5 * np.pi + 1e-12
        assert X[:, 1].min() >= 0 and X[:, 1].max() <= 21
        np.testing.assert_allclose(X[:, 0], t * np.cos(t), atol=1e-12)

    def test_gaussian_surface(self):
        X = generate(DatasetSpec("gaussian", 500, 4, {"amplitude": 2.0, "width": 0.5})).data
        assert np.abs(X[:, :2]).max() <= 1.5
        np.testing.assert_allclose(X[:, 2], 2.0 * np.exp(-(X[:, :2] ** 2).sum(1) / 0.5), rtol=1e-14)

    def test_plane_flat(self):
        assert not generate(DatasetSpec("plane", 50, 0)).data[:, 2].any()

    @pytest.mark.parametrize("kind", ["swiss_roll", "sphere", "ellipsoid", "gaussian", "plane"])
    def test_deterministic(self, kind):
        a = generate(DatasetSpec(kind, 300, 11)).data
        b = generate(DatasetSpec(kind, 300, 11)).data
        assert a.tobytes() == b.tobytes() and a.shape == (300, 3)

    def test_seed_changes_stream(self):
        assert not np.array_equal(generate(DatasetSpec("sphere", 10, 0)).data,
                                  generate(DatasetSpec("sphere", 10, 1)).data)

    def test_pinned_first_sample(self):
        # Philox streams are platform independent, so the first draw is pinned
        x = generate(DatasetSpec("sphere", 1, 0)).data[0]
        g = np.random.Generator(np.random.Philox(0)).standard_normal(3)
        np.testing.assert_allclose(x, g / np.linalg.norm(g), rtol=1e-15)

    @pytest.mark.parametrize("kw", [{"kind": "torus"}, {"kind": "sphere", "n": 0},
                                    {"kind": "sphere", "params": {"radius": -1.0}},
                                    {"kind": "sphere", "params": {"a": 1.0}}])
    def test_invalid_dataset_spec(self, kw):
        with pytest.raises(InvalidParameterError):
            DatasetSpec(**kw)


class TestCsv:
    def test_plain(self, tmp_path):
        c = load_csv(write(tmp_path, "1,2\n3,4\n"))
        np.testing.assert_array_equal(c.data, [[1, 2], [3, 4]])
        assert c.labels is None

    def test_header_with_labels(self, tmp_path):
        c = load_csv(write(tmp_path, "x,y,label\n1,2,0\n3,4,1\n"), label_column="label")
        assert c.dim == 2 and c.labels.tolist() == [0, 1]

    def test_header_without_label_request(self, tmp_path):
        assert load_csv(write(tmp_path, "x,y\n1,2\n")).dim == 2

    def test_ragged(self, tmp_path):
        with pytest.raises(ParseError, match="line 3"):
            load_csv(write(tmp_path, "1,2\n3,4\n5\n"))

    def test_non_numeric(self, tmp_path):
        with pytest.raises(ParseError, match="line 2") as err:
            load_csv(write(tmp_path, "1,2\n3,abc\n"))
        assert err.value.line == 2

    def test_nan_rejected(self, tmp_path):
        with pytest.raises(ParseError, match="line 1"):
            load_csv(write(tmp_path, "1,nan\n"))

    def test_missing_label_column(self, tmp_path):
        with pytest.raises(ParseError):
            load_csv(write(tmp_path, "x,y\n1,2\n"), label_column="label")

    def test_empty(self, tmp_path):
        with pytest.raises(ParseError):
            load_csv(write(tmp_path, ""))

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 5)),
                  elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
    def test_round_trip(self, tmp_path_factory, X):
        path = tmp_path_factory.mktemp("rt") / "x.csv"
        save_csv(PointCloud(X), path)
        back = load_csv(path).data
        assert np.array_equal(back, X) or np.abs(back - X).max() <= 1e-15 * max(1.0, np.abs(X).max())

    def test_round_trip_labels(self, tmp_path):
        X = generate(DatasetSpec("ellipsoid", 40, 0)).data
        path = tmp_path / "l.csv"
        save_csv(PointCloud(X, np.arange(40) % 3), path)
        back = load_csv(path, label_column="label")
        assert back.data.tobytes() == X.tobytes() and back.labels.tolist() == (np.arange(40) % 3).tolist()


def sample_report():
    return ExperimentReport(
        config={"command": "compare", "K": 10, "methods": ["pca", "isomap", "rfml"]},
        metrics=[{"method": m, "metric": k, "K": 10, "value": v}
                 for m in ("pca", "isomap", "rfml") for k, v in (("npr", 0.1 + 1 / 3), ("accuracy", 0.5))],
        flow={"C": 1.0186, "converged_fraction": 1.0},
        dimension_histogram={2: 984, 1: 16},
    )


class TestReport:
    def test_round_trip(self, tmp_path):
        r = sample_report()
        save_report(r, tmp_path / "r.json")
        assert load_report(tmp_path / "r.json") == r

    def test_identical_bytes(self, tmp_path):
        save_report(sample_report(), tmp_path / "a.json")
        save_report(sample_report(), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_csv_rows(self, tmp_path):
        csv_path = save_report(sample_report(), tmp_path / "r.json")
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "method,metric,K,value" and len(lines) == 1 + 6

    def test_schema_and_key_order(self):
        data = json.loads(report_json(sample_report()))
        assert data["schema_version"] == "1"
        assert list(data) == ["schema_version", "config", "metrics", "flow", "dimension_histogram",
                              "curvature_histogram", "timings"]

    def test_seventeen_digits(self):
        text = report_json(ExperimentReport(flow={"x": 0.1 + 0.2, "one": 1.0}))
        assert '"x": 0.30000000000000004' in text and '"one": 1.0' in text

    def test_wrong_schema(self, tmp_path):
        p = write(tmp_path, json.dumps({"schema_version": "0"}), "r.json")
        with pytest.raises(ParseError):
            load_report(p)

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            save_report(sample_report(), tmp_path / "missing" / "r.json")

    def test_no_temp_files_left(self, tmp_path):
        save_report(sample_report(), tmp_path / "r.json")
        assert sorted(os.listdir(tmp_path)) == ["r.csv", "r.json"]
