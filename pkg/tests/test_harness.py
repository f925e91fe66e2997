import io

import numpy as np
import pytest

from imputebench.ampute import Mechanism, MissingnessSpec, ampute
from imputebench.datagen import (
    PopulationSpec,
    draw_sample,
    generate_population,
    ground_truth,
)
from imputebench.downstream import ParamSet, estimate_params
from imputebench.forest import ForestParams
from imputebench.harness import (
    CSV_HEADER,
    ExperimentConfig,
    SummaryTable,
    export_figure_data,
    figure_sample_fit,
    format_table,
    run_cell,
    run_decomposition,
    run_table1,
    run_table2,
)
from imputebench.imputers import (
    Draw,
    Forest,
    Pmm,
    Predict,
    SoftImpute,
    impute_dispatch,
    impute_predict,
)
from imputebench.linmodel import predict
from imputebench.stochastics import Purpose, SeedSpec, make_stream, substream_id

FIELDS = ParamSet.field_names()


@pytest.fixture(scope="module")
def table1_small():
    cfg = ExperimentConfig(t_rep=20, pop_size=100_000)
    return cfg, run_table1(cfg)


def _tiny_cfg(**overrides):
    defaults = dict(t_rep=3, pop_size=20_000, n_sample=500, base_seed=77)
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestExperimentConfig:
    @pytest.mark.parametrize("kwargs", [
        {"t_rep": 0},
        {"n_sample": 0},
        {"n_sample": 2_000_001},
        {"base_seed": -1},
        {"populations": (PopulationSpec(r_squared=0.8), PopulationSpec(r_squared=0.8))},
        {"mechanisms": (MissingnessSpec(Mechanism.MCAR), MissingnessSpec(Mechanism.MCAR))},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentConfig(**kwargs)

    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.t_rep == 200
        assert cfg.n_sample == 1000
        assert cfg.pop_size == 1_000_000
        assert cfg.base_seed == 123
        assert [p.r_squared for p in cfg.populations] == [0.8, 0.2]


class TestRunCell:
    def test_matches_manual_replication(self):
        cfg = _tiny_cfg(t_rep=1)
        spec = PopulationSpec(r_squared=0.2)
        mech = MissingnessSpec(Mechanism.MAR_RIGHT)
        pop = generate_population(
            PopulationSpec(r_squared=0.2, size=cfg.pop_size),
            make_stream(SeedSpec(cfg.base_seed, substream_id(1, 0, Purpose.POPULATION))),
        )
        cell_id = 5
        got = run_cell(pop, spec, mech, Draw(), cfg, cell_id)

        def rep_stream(t, purpose):
            return make_stream(SeedSpec(cfg.base_seed, substream_id(cell_id, t, purpose)))

        sample = draw_sample(pop, cfg.n_sample, rep_stream(1, Purpose.SAMPLING))
        inc = ampute(sample, mech, rep_stream(1, Purpose.AMPUTATION))
        completed = impute_dispatch(inc, Draw(), rep_stream(1, Purpose.IMPUTATION))
        expected = estimate_params(completed, sample)
        np.testing.assert_array_equal(got.as_array(), expected.as_array())

    def test_rep_streams_stable_under_longer_runs(self):
        # the t-th replication must not depend on t_rep, so the two-rep
        # mean recombines exactly from the one-rep mean and rep two
        spec = PopulationSpec(r_squared=0.2)
        mech = MissingnessSpec(Mechanism.MCAR)
        cfg1 = _tiny_cfg(t_rep=1)
        cfg2 = _tiny_cfg(t_rep=2)
        pop = generate_population(
            PopulationSpec(r_squared=0.2, size=cfg1.pop_size),
            make_stream(SeedSpec(77, substream_id(0, 0, Purpose.POPULATION))),
        )
        mean1 = run_cell(pop, spec, mech, Draw(), cfg1, 3).as_array()
        mean2 = run_cell(pop, spec, mech, Draw(), cfg2, 3).as_array()

        def rep_stream(t, purpose):
            return make_stream(SeedSpec(77, substream_id(3, t, purpose)))

        sample = draw_sample(pop, cfg2.n_sample, rep_stream(2, Purpose.SAMPLING))
        inc = ampute(sample, mech, rep_stream(2, Purpose.AMPUTATION))
        completed = impute_dispatch(inc, Draw(), rep_stream(2, Purpose.IMPUTATION))
        rep2 = estimate_params(completed, sample).as_array()
        np.testing.assert_allclose(mean2, 0.5 * (mean1 + rep2), atol=1e-12)

    def test_error_names_cell_and_replication(self):
        cfg = _tiny_cfg(t_rep=2, n_sample=1000)
        spec = PopulationSpec(r_squared=0.2)
        mech = MissingnessSpec(Mechanism.MCAR)
        pop = generate_population(
            PopulationSpec(r_squared=0.2, size=cfg.pop_size),
            make_stream(SeedSpec(77, 0)),
        )
        with pytest.raises(RuntimeError, match=r"method=pmm.*replication 1"):
            run_cell(pop, spec, mech, Pmm(donors=600), cfg, 0)


class TestRunTable1:
    def test_row_layout(self, table1_small):
        _, table = table1_small
        layout = [(r.signal, r.method, r.mechanism) for r in table.rows]
        assert layout == [
            ("high", "truth", "none"),
            ("high", "predict", "MCAR"),
            ("high", "predict", "MAR"),
            ("high", "draw", "MCAR"),
            ("high", "draw", "MAR"),
            ("low", "truth", "none"),
            ("low", "predict", "MCAR"),
            ("low", "predict", "MAR"),
            ("low", "draw", "MCAR"),
            ("low", "draw", "MAR"),
        ]

    def test_truth_rows_match_analytic(self, table1_small):
        _, table = table1_small
        for r_squared, signal in ((0.8, "high"), (0.2, "low")):
            truth = table.truth_params(signal)
            gt = ground_truth(PopulationSpec(r_squared=r_squared)).params
            assert truth.p90 == pytest.approx(10.0, abs=0.3)
            for name in ("mu", "sigma", "rho", "gamma", "r2_y", "delta", "r2_x"):
                assert getattr(truth, name) == pytest.approx(getattr(gt, name), abs=0.01), name
        assert table.truth_params("nope") is None

    def test_truth_rows_report_zero_error(self, table1_small):
        _, table = table1_small
        for signal in ("high", "low"):
            truth = table.truth_params(signal)
            assert truth.mse_full == 0.0
            assert truth.mse_missing == 0.0

    def test_method_rows_have_stderr(self, table1_small):
        _, table = table1_small
        for row in table.rows:
            if row.method == "truth":
                assert row.stderr is None
            else:
                assert row.stderr.shape == (len(FIELDS),)
                assert np.all(row.stderr >= 0)

    def test_method_substitution_checked(self):
        with pytest.raises(ValueError, match="expects methods"):
            run_table1(_tiny_cfg(methods=(Pmm(),)))


class TestMarkdownFlags:
    def test_predict_rows_flag_biased_fields_only(self, table1_small):
        _, table = table1_small
        text = format_table(table, style="markdown")
        lines = text.strip().split("\n")
        assert len(lines) == 2 + 10
        starred_by_key = {}
        for line in lines[2:]:
            cells = [c.strip() for c in line.strip("|").split("|")]
            key = tuple(cells[:3])
            starred = {
                FIELDS[i] for i, cell in enumerate(cells[3:]) if cell.endswith("*")
            }
            starred_by_key[key] = starred
        biased = {"sigma", "p90", "rho", "r2_y", "delta", "r2_x"}
        for signal in ("high", "low"):
            assert starred_by_key[(signal, "truth", "none")] == set()
            for mech in ("MCAR", "MAR"):
                assert starred_by_key[(signal, "predict", mech)] == biased, (signal, mech)
                draw_starred = starred_by_key[(signal, "draw", mech)]
                assert "mse_full" not in draw_starred
                assert "mse_missing" not in draw_starred


class TestRunTable2:
    def test_row_layout_cheap_config(self):
        cfg = ExperimentConfig(
            methods=(Forest(params=ForestParams(n_trees=15)), SoftImpute(), Pmm()),
            t_rep=2,
            pop_size=50_000,
            base_seed=77,
        )
        table = run_table2(cfg)
        layout = [(r.signal, r.method, r.mechanism) for r in table.rows]
        expected = []
        for signal in ("high", "low"):
            expected.append((signal, "truth", "none"))
            for method in ("forest", "softimpute", "pmm"):
                for mech in ("MCAR", "MAR"):
                    expected.append((signal, method, mech))
        assert layout == expected

    def test_method_substitution_checked(self):
        with pytest.raises(ValueError, match="expects methods"):
            run_table2(_tiny_cfg(methods=(Predict(), Draw())))


class TestDeterminism:
    def test_repeat_run_byte_identical(self):
        cfg = _tiny_cfg()
        a = format_table(run_table1(cfg), style="csv")
        b = format_table(run_table1(cfg), style="csv")
        assert a == b

    def test_thread_count_does_not_change_results(self):
        cfg = _tiny_cfg()
        serial = format_table(run_table1(cfg, threads=1), style="csv")
        pooled = format_table(run_table1(cfg, threads=2), style="csv")
        assert serial == pooled

    def test_config_order_does_not_change_cells(self):
        fwd = _tiny_cfg()
        rev = _tiny_cfg(
            populations=tuple(reversed(fwd.populations)),
            mechanisms=tuple(reversed(fwd.mechanisms)),
        )
        by_key = {}
        for row in run_table1(fwd).rows:
            by_key[(row.signal, row.method, row.mechanism)] = row.params.as_array()
        for row in run_table1(rev).rows:
            np.testing.assert_array_equal(
                row.params.as_array(), by_key[(row.signal, row.method, row.mechanism)]
            )


class TestFormatTable:
    def test_empty_table(self):
        assert format_table(SummaryTable(rows=())) == CSV_HEADER + "\n"

    def test_csv_parses_back(self, table1_small):
        _, table = table1_small
        lines = format_table(table, style="csv").strip().split("\n")
        assert lines[0] == CSV_HEADER
        assert len(lines) == 11
        for line in lines[1:]:
            parts = line.split(",")
            assert len(parts) == 3 + len(FIELDS)
            for value in parts[3:]:
                float(value)
                assert len(value.split(".")[1]) == 3

    def test_unknown_style(self):
        with pytest.raises(ValueError):
            format_table(SummaryTable(rows=()), style="latex")


class TestFigure:
    def test_export_shape_and_determinism(self):
        cfg = _tiny_cfg(n_sample=1000)
        buf_a, buf_b = io.StringIO(), io.StringIO()
        n_a = export_figure_data(cfg, buf_a)
        n_b = export_figure_data(cfg, buf_b)
        assert buf_a.getvalue() == buf_b.getvalue()
        lines = buf_a.getvalue().strip().split("\n")
        assert lines[0] == "x1,y,status,method"
        assert n_a == n_b == len(lines) - 1 == 2 * cfg.n_sample

        counts = {"predict": 0, "draw": 0}
        for line in lines[1:]:
            x1, y, status, method = line.split(",")
            float(x1), float(y)
            assert status in ("observed", "imputed")
            if status == "imputed":
                counts[method] += 1
        assert counts["predict"] == counts["draw"]
        assert 400 <= counts["predict"] <= 600

    def test_predict_completion_sits_on_fitted_plane(self):
        cfg = _tiny_cfg(n_sample=1000)
        fit, inc = figure_sample_fit(cfg)
        completed = impute_predict(inc)
        resid = completed.data.y[inc.mask] - predict(fit, inc.missing_rows())
        assert np.max(np.abs(resid)) < 1e-10

    def test_file_output(self, tmp_path):
        cfg = _tiny_cfg(n_sample=200)
        out = tmp_path / "figure.csv"
        n = export_figure_data(cfg, out)
        text = out.read_text()
        assert len(text.strip().split("\n")) == n + 1


class TestRunDecomposition:
    def test_grid_coverage(self):
        cfg = _tiny_cfg(n_sample=1000)
        results = run_decomposition(cfg, Draw(), repeats=5)
        keys = {(signal, mech) for signal, mech, _ in results}
        assert keys == {
            ("high", "MCAR"), ("high", "MAR"), ("low", "MCAR"), ("low", "MAR"),
        }
        for _, _, result in results:
            assert result.total > 0
            assert result.variance > 0
