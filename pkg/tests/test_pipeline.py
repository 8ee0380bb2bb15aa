"""End-to-end experiment orchestration."""

import numpy as np
import pytest

from melcgraph.data import make_split
from melcgraph.pipeline import (
    DEFAULT_RATIOS,
    MODELS,
    ExperimentConfig,
    default_search_space,
    grand_hyper_from,
    make_val_objective,
    metrics_row,
    model_features,
    run_experiment,
    standardize,
)
from melcgraph.search import bayes_opt
from melcgraph.simulate import SimConfig, generate_dataset

PIPE_SIM = SimConfig(
    n_samples=6,
    cells_per_sample=80,
    n_channels=8,
    field_size_px=256,
    tumor_radius_px=90.0,
    class_mean_shift=30.0,
    noise_sd=8.0,
    spatial_smoothing=60.0,
)
FAST_GRAND = {"max_epochs": 60, "patience": 60, "hidden_width": 8}


@pytest.fixture(scope="module")
def sim():
    return generate_dataset(PIPE_SIM, seed=0)


class TestStandardize:
    def test_zero_mean_unit_sd(self):
        rng = np.random.default_rng(0)
        X = rng.normal(3.0, 2.5, size=(50, 4))
        Z = standardize(X)
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(Z.std(axis=0), 1.0, atol=1e-12)

    def test_constant_columns_map_to_zero(self):
        X = np.column_stack([np.full(10, 7.0), np.arange(10.0)])
        Z = standardize(X)
        np.testing.assert_array_equal(Z[:, 0], 0.0)
        assert Z[:, 1].std() == pytest.approx(1.0)


class TestExperimentConfig:
    def test_defaults(self):
        config = ExperimentConfig()
        assert config.model == "grand"
        assert config.ratios == DEFAULT_RATIOS == (0.7, 0.1, 0.2)
        assert config.reduce == "none"

    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(model="svm")

    def test_models_tuple(self):
        assert MODELS == ("grand", "forest", "gbdt")


class TestGrandHyperFrom:
    def test_empty_overrides_give_defaults(self):
        hyper = grand_hyper_from({})
        assert hyper.drop_rate == 0.45
        assert hyper.learning_rate == 0.003

    def test_overrides_apply(self):
        hyper = grand_hyper_from({"drop_rate": 0.2, "max_epochs": 10})
        assert hyper.drop_rate == 0.2
        assert hyper.max_epochs == 10

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            grand_hyper_from({"dropout": 0.5})


class TestModelFeatures:
    def test_none_returns_raw_width(self, sim):
        table, _ = sim
        feats = model_features(table, ExperimentConfig(reduce="none"))
        assert feats.shape == (table.n_cells, table.n_features)

    def test_pca_returns_requested_width(self, sim):
        table, _ = sim
        feats = model_features(table, ExperimentConfig(reduce="pca", d_out=3))
        assert feats.shape == (table.n_cells, 3)

    def test_reducer_kwargs_forwarded(self, sim):
        table, _ = sim
        config = ExperimentConfig(
            reduce="umap", d_out=2, reducer={"n_neighbors": 5, "n_epochs": 5}
        )
        assert model_features(table, config).shape == (table.n_cells, 2)


class TestRunExperiment:
    def test_grand_result_contract(self, sim):
        table, manifest = sim
        config = ExperimentConfig(
            graph_mode="spatial", k=6, model="grand", grand=FAST_GRAND, seed=0
        )
        result = run_experiment(table, manifest, config)
        assert result["model"] == "grand"
        assert result["embedding"] == "spatial graph (k=6)"
        assert result["reduction"] == "none"
        assert result["scores"].shape == (table.n_cells,)
        assert (result["scores"] >= 0).all() and (result["scores"] <= 1).all()
        assert 0.0 <= result["metrics"].accuracy <= 1.0

    def test_test_rows_drive_the_report(self, sim):
        table, manifest = sim
        config = ExperimentConfig(model="gbdt", trees={"n_rounds": 20}, seed=1)
        result = run_experiment(table, manifest, config)
        masks = result["split"].masks(table)
        assert result["metrics"].n_evaluated == int(masks["test"].sum())

    def test_deterministic_given_seed(self, sim):
        table, manifest = sim
        config = ExperimentConfig(
            graph_mode="feature", k=5, model="grand", grand=FAST_GRAND, seed=3
        )
        a = run_experiment(table, manifest, config)
        b = run_experiment(table, manifest, config)
        np.testing.assert_array_equal(a["scores"], b["scores"])
        assert a["metrics"] == b["metrics"]

    def test_forest_and_gbdt_paths(self, sim):
        table, manifest = sim
        for model in ("forest", "gbdt"):
            config = ExperimentConfig(
                model=model, trees={"n_trees": 10} if model == "forest" else {"n_rounds": 10}
            )
            result = run_experiment(table, manifest, config)
            assert result["embedding"] == "tabular"
            assert result["metrics"].n_evaluated > 0

    def test_learns_the_planted_signal(self, sim):
        table, manifest = sim
        config = ExperimentConfig(model="gbdt", seed=0)
        result = run_experiment(table, manifest, config)
        assert result["metrics"].accuracy > 0.8

    def test_per_sample_reporting(self, sim):
        table, manifest = sim
        config = ExperimentConfig(
            model="gbdt", trees={"n_rounds": 20}, per_sample=True
        )
        result = run_experiment(table, manifest, config)
        assert 0.0 <= result["metrics"].accuracy <= 1.0

    def test_reduction_label_carries_width(self, sim):
        table, manifest = sim
        config = ExperimentConfig(model="gbdt", reduce="pca", d_out=4)
        result = run_experiment(table, manifest, config)
        assert result["reduction"] == "pca-4"


class TestMetricsRow:
    def test_projects_report_fields(self, sim):
        table, manifest = sim
        result = run_experiment(
            table, manifest, ExperimentConfig(model="gbdt", trees={"n_rounds": 10})
        )
        row = metrics_row(result)
        assert row["embedding"] == "tabular"
        assert row["accuracy"] == result["metrics"].accuracy
        assert set(row) == {"embedding", "reduction", "accuracy", "f1", "auroc"}


class TestSearchSpaces:
    def test_every_model_has_a_space(self):
        for model in MODELS:
            space = default_search_space(model)
            assert space.dim >= 2

    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError):
            default_search_space("svm")

    def test_grand_space_names(self):
        names = {p.name for p in default_search_space("grand").params}
        assert names == {
            "learning_rate",
            "drop_rate",
            "propagation_order",
            "consistency_weight",
        }


class TestValObjective:
    def test_tree_objective_returns_val_accuracy(self, sim):
        table, manifest = sim
        objective = make_val_objective(
            table, table.features, manifest, "gbdt", seed=0
        )
        value = objective({"n_rounds": 12, "max_depth": 3})
        assert 0.0 <= value <= 1.0
        # recompute by hand on the same fixed split
        from melcgraph.trees import fit_gbdt, predict_ensemble

        split = make_split(manifest, DEFAULT_RATIOS, 0)
        masks = split.masks(table)
        model = fit_gbdt(
            table.features[masks["train"]],
            table.label[masks["train"]],
            n_rounds=12,
            max_depth=3,
        )
        preds = predict_ensemble(model, table.features[masks["val"]]) >= 0.5
        want = float((preds == (table.label[masks["val"]] == 1)).mean())
        assert value == pytest.approx(want)

    def test_grand_objective_requires_graph(self, sim):
        table, manifest = sim
        with pytest.raises(ValueError, match="graph"):
            make_val_objective(table, table.features, manifest, "grand")

    def test_grand_objective_runs(self, sim):
        from melcgraph.graph import GraphConfig, build_graph

        table, manifest = sim
        graph = build_graph(table, GraphConfig(k=5, mode="spatial"))
        objective = make_val_objective(
            table,
            table.features,
            manifest,
            "grand",
            graph=graph,
            train_epochs=20,
        )
        value = objective({"hidden_width": 8, "patience": 20})
        assert 0.0 <= value <= 1.0

    def test_search_improves_or_matches_first_probe(self, sim):
        table, manifest = sim
        objective = make_val_objective(table, table.features, manifest, "gbdt")
        space = default_search_space("gbdt")
        result = bayes_opt(objective, space, patience=3, max_evals=12, seed=0)
        assert result.best_value >= result.values[0]
