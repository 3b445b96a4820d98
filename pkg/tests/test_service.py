import numpy as np
import pandas as pd
import pytest

from src.api.models import AggregateStats, RunReport, load_run_config
from src.core.errors import ConfigError
from src.framework.regularizers import Variant
from src.services.experiment_service import ExperimentService, ablation_warnings, verify_theorems


class TestRunConfig:
    def test_valid(self, write_config):
        cfg = load_run_config(write_config())
        assert cfg.dataset_name == "planted"
        assert cfg.spec.variant == Variant.TSGCN
        assert cfg.repeat_seeds == [0, 1]

    def test_overrides(self, write_config):
        cfg = load_run_config(write_config(), {"spec.alpha": 0.4, "repeat_seeds": [3], "spec.beta": None})
        assert cfg.spec.alpha == 0.4 and cfg.spec.beta == 0.2
        assert cfg.repeat_seeds == [3]

    def test_every_violation_reported(self, write_config, tmp_path):
        path = write_config(
            dataset={"content": str(tmp_path / "nope.content")},
            spec={"rank": "d/2^9"},
            export_layer=5,
        )
        with pytest.raises(ConfigError) as err:
            load_run_config(path)
        text = " | ".join(err.value.violations)
        assert "dataset.content" in text and "export_layer" in text
        assert err.value.exit_code == 1

    def test_rank_resolving_to_zero(self, write_config):
        with pytest.raises(ConfigError) as err:
            load_run_config(write_config(spec={"rank": "d/2^9"}))
        assert any("rank" in v for v in err.value.violations)

    def test_pydantic_errors_collected(self, write_config):
        with pytest.raises(ConfigError) as err:
            load_run_config(write_config(train={"lr": -1.0, "hidden_units": 0}))
        assert len(err.value.violations) >= 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "absent.yaml")


class TestRun:
    def test_report_written_and_round_trips(self, write_config):
        service = ExperimentService(load_run_config(write_config()))
        report = service.run()
        files = list(service.output_dir.glob("planted_tsgcn_*.report"))
        assert len(files) == 1
        assert RunReport.read(files[0]) == report
        assert [s.seed for s in report.seeds] == [0, 1]
        assert report.operator["path"] == "woodbury"
        assert report.config["spec"]["variant"] == "tsgcn"

    def test_aggregate_recomputable(self, write_config):
        report = ExperimentService(load_run_config(write_config())).run(write=False)
        assert AggregateStats.from_seeds(report.seeds) == report.aggregate
        acc = np.array([s.accuracy for s in report.seeds])
        assert report.aggregate.mean_accuracy == pytest.approx(acc.mean())
        assert report.aggregate.std_accuracy == pytest.approx(acc.std())

    def test_three_node_fixture_one_epoch(self, write_config, toy_dir):
        path = write_config(
            dataset={"name": "toy3", "content": str(toy_dir / "toy3.content"), "edges": str(toy_dir / "toy3.cites")},
            split={"per_class": 1, "n_val": 0, "n_test": 1},
            semantic={"k": 1},
            spec={"variant": "gcn"},
            train={"max_epochs": 1},
            repeat_seeds=[0],
        )
        service = ExperimentService(load_run_config(path))
        report = service.run()
        assert report.seeds[0].epochs == 1
        assert RunReport.read(next(service.output_dir.glob("toy3_gcn_*.report"))) == report


class TestGrid:
    def test_two_by_two(self, write_config):
        service = ExperimentService(load_run_config(write_config(repeat_seeds=[0])))
        grid = service.grid([0.5, 1.0], [0.2, 0.4], [2])
        assert len(grid.cells) == 4
        assert all(c.status == "ok" for c in grid.cells)
        summary = pd.read_csv(grid.summary_path)
        assert len(summary) == 4
        for cell, (_, row) in zip(grid.cells, summary.iterrows()):
            assert row.mean_accuracy == pytest.approx(cell.report.aggregate.mean_accuracy)

    def test_failed_cell_recorded(self, write_config):
        service = ExperimentService(load_run_config(write_config(repeat_seeds=[0])))
        grid = service.grid([1.0], [0.2], ["d/2^9", 2])
        statuses = [c.status for c in grid.cells]
        assert statuses == ["failed", "ok"]
        assert grid.cells[0].error

    def test_full_rank_matches_exact(self, write_config):
        service = ExperimentService(load_run_config(write_config(repeat_seeds=[0], workers=2)))
        n = service.dataset.num_nodes
        grid = service.grid([1.0], [0.2], [n, "exact"])
        full, exact = (c.report.aggregate.mean_accuracy for c in grid.cells)
        assert abs(full - exact) <= 1e-6
        assert grid.cells[1].report.variant == "tsgcn_inv"


class TestAblation:
    def test_five_columns_and_determinism(self, write_config):
        cfg = load_run_config(write_config(repeat_seeds=[0]))
        first = ExperimentService(cfg).ablate()
        assert list(first.columns) == ["gcn", "tsgcn_s", "tsgcn_t", "tsgcn_inv", "tsgcn"]
        second = ExperimentService(cfg).ablate()
        assert first.columns["gcn"].seeds[0].accuracy == second.columns["gcn"].seeds[0].accuracy

    def test_ordering_warning(self, write_config):
        report = ExperimentService(load_run_config(write_config(repeat_seeds=[0]))).run(write=False)
        worse = report.model_copy(update={"aggregate": report.aggregate.model_copy(update={"mean_accuracy": 0.1})})
        better = report.model_copy(update={"aggregate": report.aggregate.model_copy(update={"mean_accuracy": 0.9})})
        warnings = ablation_warnings({"tsgcn": worse, "tsgcn_s": better, "tsgcn_t": worse, "tsgcn_inv": worse})
        assert len(warnings) == 1 and "tsgcn_s" in warnings[0]


class TestVerifyTheorems:
    def test_grid_of_rows(self):
        report = verify_theorems(seeds=5, nodes_max=16)
        assert len(report.rows) == 8 * 5
        assert report.passed

    def test_single_variant(self):
        report = verify_theorems([Variant.GCN], seeds=1)
        assert len(report.rows) == 1 and report.rows[0].variant == "gcn"

    def test_injected_fault(self):
        report = verify_theorems([Variant.APPNP], seeds=2, perturb=1e-4)
        assert not report.passed


class TestExportEmbeddings:
    @pytest.fixture
    def trained(self, write_config):
        cfg = load_run_config(write_config(repeat_seeds=[0], save_checkpoint=True))
        service = ExperimentService(cfg)
        service.run()
        return service, service.output_dir / "planted_tsgcn_seed0.npz"

    def test_last_layer_on_simplex(self, trained):
        service, ckpt = trained
        frame = pd.read_csv(service.export_embeddings(ckpt, 2))
        assert len(frame) == service.dataset.num_nodes
        assert list(frame.columns[:2]) == ["node_id", "label"]
        np.testing.assert_allclose(frame.iloc[:, 2:].sum(axis=1), 1.0, atol=1e-9)

    def test_hidden_layer_nonnegative(self, trained):
        service, ckpt = trained
        frame = pd.read_csv(service.export_embeddings(ckpt, 1))
        assert (frame.iloc[:, 2:].to_numpy() >= 0).all()

    def test_reexport_identical(self, trained, tmp_path):
        service, ckpt = trained
        a = service.export_embeddings(ckpt, 2, tmp_path / "a.csv")
        b = service.export_embeddings(ckpt, 2, tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_layer_out_of_range(self, trained):
        service, ckpt = trained
        with pytest.raises(ConfigError):
            service.export_embeddings(ckpt, 3)

    def test_service_from_checkpoint(self, trained):
        _, ckpt = trained
        service = ExperimentService.from_checkpoint(ckpt)
        assert service.config.dataset_name == "planted"
