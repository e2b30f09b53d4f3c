import dataclasses
import math

import numpy as np
import pytest

from urfcluster.dataset import (
    BINARY_COLUMNS,
    RADIUS_LIMIT,
    SCENARIO_COLUMNS,
    SCENERY_KINDS,
    STRAIGHT_RADIUS,
    VELOCITY_GROUP,
    CsvValidationError,
    FeatureMatrix,
    RoadContext,
    SceneryTemplate,
    clamp_radius,
    default_templates,
    extract_features,
    fold_heading_difference,
    generate_synthetic,
    load_csv,
    load_csv_text,
    save_csv,
    scenario_schema,
    to_csv_text,
)
from urfcluster.kinematics import ScenarioWindow, VehicleState


def car(x, y, v, heading=0.0, a=0.0):
    return VehicleState(
        position=(x, y),
        velocity=v,
        acceleration=a,
        orientation=heading,
        half_length=2.25,
        half_width=0.9,
    )


def small_matrix(labels=None):
    schema = scenario_schema()
    rows = np.array(
        [
            [20.0, 18.5, 1.0, 10.0, 11.0, 0.0, 12.5, 850.0, 27.78, 2.0],
            [5.5, 6.0, 0.0, 4.0, 3.2, 1.0, 95.0, 25.0, 13.89, 1.0],
            [30.0, 30.0, 0.0, 28.0, 27.0, 1.0, 3.0, STRAIGHT_RADIUS, 33.33, 3.0],
        ]
    )
    return FeatureMatrix(schema, rows, np.array([7, 8, 9]), labels)


class TestSchema:
    def test_column_order(self):
        assert scenario_schema().names == SCENARIO_COLUMNS
        assert SCENARIO_COLUMNS == (
            "v_eg_t-2",
            "v_eg_t0",
            "b_eg",
            "v_tg_t-2",
            "v_tg_t0",
            "b_tg",
            "delta_rel",
            "r",
            "v_lim",
            "n_L",
        )

    def test_index_of(self):
        schema = scenario_schema()
        assert schema.index_of("r") == 7
        assert schema.index_of("v_eg_t-2") == 0
        with pytest.raises(KeyError):
            schema.index_of("nope")

    def test_velocity_group(self):
        schema = scenario_schema()
        assert tuple(schema.group_members("velocity")) == VELOCITY_GROUP

    def test_binary_kinds(self):
        schema = scenario_schema()
        for col in schema.columns:
            assert (col.kind == "binary") == (col.name in BINARY_COLUMNS)


class TestFeatureMatrix:
    def test_basic_properties(self):
        mat = small_matrix()
        assert mat.m == 3
        assert mat.q == 10
        assert mat.rows.dtype == np.float64
        assert mat.row_ids.tolist() == [7, 8, 9]

    def test_arrays_immutable(self):
        mat = small_matrix()
        with pytest.raises(ValueError):
            mat.rows[0, 0] = 99.0
        with pytest.raises(dataclasses.FrozenInstanceError):
            mat.labels = ("x", "y", "z")

    def test_needs_two_rows(self):
        schema = scenario_schema()
        with pytest.raises(ValueError, match="2 rows"):
            FeatureMatrix(schema, small_matrix().rows[:1], np.array([0]))

    def test_rejects_width_mismatch(self):
        with pytest.raises(ValueError, match="width"):
            FeatureMatrix(scenario_schema(), np.zeros((2, 9)), np.array([0, 1]))

    def test_rejects_non_finite(self):
        rows = np.array(small_matrix().rows)
        rows[1, 6] = np.nan
        with pytest.raises(ValueError, match="finite"):
            FeatureMatrix(scenario_schema(), rows, np.array([0, 1, 2]))

    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValueError, match="unique"):
            FeatureMatrix(scenario_schema(), small_matrix().rows, np.array([1, 1, 2]))

    def test_binary_violation_names_cell(self):
        rows = np.array(small_matrix().rows)
        rows[2, 2] = 0.5
        with pytest.raises(ValueError, match=r"b_eg.*row 2"):
            FeatureMatrix(scenario_schema(), rows, np.array([0, 1, 2]))

    def test_labels_must_align(self):
        with pytest.raises(ValueError, match="labels"):
            small_matrix(labels=("highway", "crossing"))

    def test_content_hash_stable_and_sensitive(self):
        a = small_matrix()
        b = small_matrix()
        assert a.content_hash() == b.content_hash()

        rows = np.array(a.rows)
        rows[0, 0] += 1.0
        changed = FeatureMatrix(a.schema, rows, a.row_ids)
        assert changed.content_hash() != a.content_hash()

        relabeled = small_matrix(labels=("highway", "crossing", "highway"))
        assert relabeled.content_hash() != a.content_hash()

        other_ids = FeatureMatrix(a.schema, a.rows, np.array([1, 2, 3]))
        assert other_ids.content_hash() != a.content_hash()

    def test_take_keeps_ids_and_labels(self):
        mat = small_matrix(labels=("highway", "crossing", "roundabout"))
        sub = mat.take([2, 0])
        assert sub.row_ids.tolist() == [9, 7]
        assert sub.labels == ("roundabout", "highway")
        assert np.array_equal(sub.rows[0], mat.rows[2])


class TestDerivedValues:
    def test_clamp_radius(self):
        assert clamp_radius(RADIUS_LIMIT) == RADIUS_LIMIT
        assert clamp_radius(RADIUS_LIMIT + 0.1) == STRAIGHT_RADIUS
        assert clamp_radius(850.0) == 850.0
        with pytest.raises(ValueError):
            clamp_radius(0.0)
        with pytest.raises(ValueError):
            clamp_radius(-3.0)

    @pytest.mark.parametrize(
        "a,b,expected",
        [
            (0.0, math.pi, 180.0),
            (0.0, 1.5 * math.pi, 90.0),
            (0.25, 0.25, 0.0),
            (0.0, 2.0 * math.pi, 0.0),
            (0.0, 3.0 * math.pi, 180.0),
            (math.radians(350.0), math.radians(10.0), 20.0),
        ],
    )
    def test_fold_heading_difference(self, a, b, expected):
        assert fold_heading_difference(a, b) == pytest.approx(expected, abs=1e-9)
        assert fold_heading_difference(b, a) == pytest.approx(expected, abs=1e-9)

    def test_fold_range_property(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            a, b = rng.uniform(-20.0, 20.0, size=2)
            d = fold_heading_difference(a, b)
            assert 0.0 <= d <= 180.0


class TestExtractFeatures:
    def head_on(self):
        # 5.5 m bumper gap closing at 40 m/s: critical. Start speeds are
        # picked so ego brakes (25 -> 20) and target speeds up (18 -> 20).
        return ScenarioWindow(
            ego_start=car(-50.0, 0.0, 25.0),
            ego_end=car(0.0, 0.0, 20.0),
            target_start=car(50.0, 0.0, 18.0, heading=math.pi),
            target_end=car(10.0, 0.0, 20.0, heading=math.pi),
        )

    def test_feature_values(self):
        road = RoadContext(radius=8000.0, speed_limit=33.33, lane_count=3)
        row = extract_features(self.head_on(), road)
        assert row.shape == (10,)
        assert row[0] == 25.0  # ego speed at window start
        assert row[1] == 20.0  # ego speed at t0
        assert row[2] == 1.0  # ego decelerated
        assert row[3] == 18.0
        assert row[4] == 20.0
        assert row[5] == 0.0  # target did not slow down
        assert row[6] == pytest.approx(180.0)
        assert row[7] == STRAIGHT_RADIUS  # 8000 m exceeds the curve limit
        assert row[8] == 33.33
        assert row[9] == 3.0

    def test_equal_speeds_mean_no_braking(self):
        win = self.head_on()
        win = ScenarioWindow(
            ego_start=dataclasses.replace(win.ego_start, velocity=20.0),
            ego_end=win.ego_end,
            target_start=win.target_start,
            target_end=win.target_end,
        )
        road = RoadContext(radius=100.0, speed_limit=13.89, lane_count=1)
        assert extract_features(win, road)[2] == 0.0

    def test_non_critical_window_rejected(self):
        win = ScenarioWindow(
            ego_start=car(-50.0, 0.0, 10.0),
            ego_end=car(0.0, 0.0, 10.0),
            target_start=car(200.0, 50.0, 10.0),
            target_end=car(200.0, 30.0, 10.0),
        )
        road = RoadContext(radius=100.0, speed_limit=13.89, lane_count=1)
        with pytest.raises(ValueError, match="critical"):
            extract_features(win, road)

    def test_road_context_validation(self):
        with pytest.raises(ValueError):
            RoadContext(radius=-1.0, speed_limit=10.0, lane_count=1)
        with pytest.raises(ValueError):
            RoadContext(radius=10.0, speed_limit=0.0, lane_count=1)
        with pytest.raises(ValueError):
            RoadContext(radius=10.0, speed_limit=10.0, lane_count=0)


class TestCsv:
    def test_round_trip_exact(self):
        # The format carries no id column: loaded ids are positional.
        mat = small_matrix()
        text = to_csv_text(mat)
        back = load_csv_text(text)
        assert np.array_equal(back.rows, mat.rows)
        assert back.row_ids.tolist() == [0, 1, 2]
        assert back.labels is None

    def test_round_trip_hash_with_positional_ids(self):
        mat = FeatureMatrix(
            scenario_schema(), small_matrix().rows, np.arange(3), None
        )
        back = load_csv_text(to_csv_text(mat))
        assert back.content_hash() == mat.content_hash()

    def test_round_trip_with_labels(self):
        mat = small_matrix(labels=("highway", "crossing", "roundabout"))
        text = to_csv_text(mat)
        assert text.splitlines()[0].endswith(",type")
        back = load_csv_text(text)
        assert back.labels == mat.labels
        assert np.array_equal(back.rows, mat.rows)

    def test_header_line(self):
        header = to_csv_text(small_matrix()).splitlines()[0]
        assert header == ",".join(SCENARIO_COLUMNS)

    def test_header_mismatch_rejected(self):
        text = to_csv_text(small_matrix())
        broken = text.replace("delta_rel", "delta")
        with pytest.raises(CsvValidationError, match="header"):
            load_csv_text(broken)

    def test_cell_errors_collected(self):
        lines = to_csv_text(small_matrix()).splitlines()
        cells0 = lines[1].split(",")
        cells0[6] = "oops"
        cells1 = lines[2].split(",")
        cells1[2] = "0.5"
        text = "\n".join([lines[0], ",".join(cells0), ",".join(cells1), lines[3]])
        with pytest.raises(CsvValidationError) as exc:
            load_csv_text(text)
        errors = exc.value.errors
        assert len(errors) == 2
        assert {e["column"] for e in errors} == {"delta_rel", "b_eg"}
        assert {e["row"] for e in errors} == {0, 1}
        for e in errors:
            assert e["message"]

    def test_too_few_rows(self):
        lines = to_csv_text(small_matrix()).splitlines()
        with pytest.raises(CsvValidationError):
            load_csv_text("\n".join(lines[:2]))

    def test_file_round_trip(self, tmp_path):
        mat = FeatureMatrix(
            scenario_schema(),
            small_matrix().rows,
            np.arange(3),
            ("highway", "highway", "crossing"),
        )
        path = tmp_path / "rows.csv"
        save_csv(mat, path)
        back = load_csv(path)
        assert back.content_hash() == mat.content_hash()


class TestTemplates:
    def test_default_kinds(self):
        kinds = tuple(t.kind for t in default_templates())
        assert kinds == SCENERY_KINDS

    def test_radius_range_validated(self):
        with pytest.raises(ValueError):
            SceneryTemplate(
                kind="highway",
                lane_count_range=(1, 2),
                speed_limit_set=(27.78,),
                radius_range=(10.0, RADIUS_LIMIT + 1.0),
                angle_range_deg=(0.0, 30.0),
                speed_range=(10.0, 20.0),
            )

    def test_angle_range_validated(self):
        with pytest.raises(ValueError):
            SceneryTemplate(
                kind="crossing",
                lane_count_range=(1, 2),
                speed_limit_set=(13.89,),
                radius_range=(10.0, 100.0),
                angle_range_deg=(-5.0, 30.0),
                speed_range=(10.0, 20.0),
            )

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            SceneryTemplate(
                kind="airstrip",
                lane_count_range=(1, 2),
                speed_limit_set=(13.89,),
                radius_range=(10.0, 100.0),
                angle_range_deg=(0.0, 30.0),
                speed_range=(10.0, 20.0),
            )


class TestGenerateSynthetic:
    def test_shape_and_labels(self):
        mat = generate_synthetic(seed=0)
        assert mat.m == 600
        assert mat.q == 10
        assert mat.labels is not None
        assert mat.labels[:200] == ("highway",) * 200
        assert mat.labels[200:400] == ("crossing",) * 200
        assert mat.labels[400:] == ("roundabout",) * 200
        assert mat.row_ids.tolist() == list(range(600))

    def test_deterministic(self):
        a = generate_synthetic(seed=12)
        b = generate_synthetic(seed=12)
        c = generate_synthetic(seed=13)
        assert a.content_hash() == b.content_hash()
        assert a.content_hash() != c.content_hash()

    def test_rows_respect_templates(self):
        mat = generate_synthetic(seed=5)
        by_kind = {t.kind: t for t in default_templates()}
        schema = mat.schema
        col = {name: schema.index_of(name) for name in schema.names}
        for i in range(mat.m):
            t = by_kind[mat.labels[i]]
            row = mat.rows[i]
            assert t.speed_range[0] <= row[col["v_eg_t-2"]] <= t.speed_range[1]
            assert row[col["b_eg"]] == (1.0 if row[col["v_eg_t0"]] < row[col["v_eg_t-2"]] else 0.0)
            assert row[col["b_tg"]] == (1.0 if row[col["v_tg_t0"]] < row[col["v_tg_t-2"]] else 0.0)
            assert t.angle_range_deg[0] <= row[col["delta_rel"]] <= t.angle_range_deg[1]
            r = row[col["r"]]
            assert r == STRAIGHT_RADIUS or t.radius_range[0] <= r <= t.radius_range[1]
            assert row[col["v_lim"]] in t.speed_limit_set
            assert t.lane_count_range[0] <= row[col["n_L"]] <= t.lane_count_range[1]
            assert row[col["n_L"]] == int(row[col["n_L"]])

    def test_straight_fraction_shows_up(self):
        mat = generate_synthetic(seed=5)
        r = mat.rows[:, mat.schema.index_of("r")]
        highway = r[:200]
        city = r[200:]
        assert (highway == STRAIGHT_RADIUS).all()
        assert not (city == STRAIGHT_RADIUS).any()
        # A fractional setting must emit both straight and curved segments.
        mixed = SceneryTemplate(
            kind="crossing",
            lane_count_range=(1, 2),
            speed_limit_set=(13.89,),
            radius_range=(10.0, 100.0),
            angle_range_deg=(60.0, 120.0),
            speed_range=(11.0, 17.0),
            straight_fraction=0.5,
        )
        sample = generate_synthetic((mixed,), count_per_template=60, seed=5)
        rs = sample.rows[:, sample.schema.index_of("r")]
        assert (rs == STRAIGHT_RADIUS).any()
        assert (rs != STRAIGHT_RADIUS).any()

    def test_count_sequence(self):
        mat = generate_synthetic(count_per_template=(5, 3, 2), seed=1)
        assert mat.m == 10
        assert mat.labels.count("highway") == 5
        assert mat.labels.count("crossing") == 3
        assert mat.labels.count("roundabout") == 2

    def test_count_validation(self):
        with pytest.raises(ValueError):
            generate_synthetic(count_per_template=(5, 3), seed=1)
        with pytest.raises(ValueError):
            generate_synthetic(count_per_template=0, seed=1)
