"""
End-to-end experiments and hyperparameter search
================================================

run_experiment wires the whole pipeline for one configuration: split by
sample, build the requested graph, reduce features, train, and score the
held-out cells.  Comparing configurations is then just a matter of
collecting rows; the search at the end tunes a model on validation
accuracy with a Gaussian-process surrogate.
"""

from melcgraph.metrics import format_results_table
from melcgraph.pipeline import (
    ExperimentConfig,
    default_search_space,
    make_val_objective,
    metrics_row,
    run_experiment,
    standardize,
)
from melcgraph.search import bayes_opt
from melcgraph.simulate import SimConfig, generate_dataset

config = SimConfig(
    n_samples=8,
    cells_per_sample=200,
    n_channels=16,
    field_size_px=384,
    tumor_radius_px=130.0,
    class_mean_shift=12.0,
    noise_sd=16.0,
    spatial_smoothing=90.0,
)
table, manifest = generate_dataset(config, seed=11)

# Three ways to classify the same cells.  The graph models keep the
# epoch budget small here; defaults are an order of magnitude larger.
fast_grand = {"max_epochs": 250, "patience": 60}
experiments = [
    ExperimentConfig(graph_mode="spatial", model="grand", grand=fast_grand),
    ExperimentConfig(graph_mode="feature", model="grand", grand=fast_grand),
    ExperimentConfig(model="gbdt", trees={"n_rounds": 120}),
]

rows = []
for exp in experiments:
    result = run_experiment(table, manifest, exp)
    rows.append(metrics_row(result))

print(format_results_table(rows))

# Tune the boosting model on validation accuracy.  The objective never
# touches test cells; the table above is where test numbers come from.
feats = standardize(table.features)
objective = make_val_objective(table, feats, manifest, "gbdt", seed=0)
space = default_search_space("gbdt")
found = bayes_opt(objective, space, patience=6, max_evals=15, seed=0)

print(f"\nsearch finished after {len(found.values)} evaluations")
print(f"best validation accuracy {found.best_value:.3f} with:")
for name, value in sorted(found.best_config.items()):
    print(f"  {name} = {value}")
