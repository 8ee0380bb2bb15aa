"""Synthetic multi-channel imaging data with planted class structure."""

import numpy as np
import pytest

from melcgraph.ingest import load_sample
from melcgraph.simulate import (
    MASK_DISK_RADIUS_PX,
    SimConfig,
    emit_images,
    generate_dataset,
    load_sim_config,
    save_sim_config,
)

SMALL = SimConfig(
    n_samples=4,
    cells_per_sample=60,
    n_channels=6,
    field_size_px=128,
    tumor_radius_px=40.0,
)


class TestSimConfig:
    def test_defaults_are_valid(self):
        config = SimConfig()
        assert config.n_samples == 12
        assert config.fraction_melanoma == 0.75
        assert config.cells_per_sample == 500
        assert config.n_channels == 40

    def test_bad_counts_rejected(self):
        with pytest.raises(ValueError):
            SimConfig(n_samples=0)
        with pytest.raises(ValueError):
            SimConfig(cells_per_sample=-1)

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            SimConfig(fraction_melanoma=1.5)
        SimConfig(fraction_melanoma=0.0)
        SimConfig(fraction_melanoma=1.0)

    def test_radius_must_fit_in_field(self):
        with pytest.raises(ValueError):
            SimConfig(field_size_px=100, tumor_radius_px=60.0)

    def test_negative_scales_rejected(self):
        with pytest.raises(ValueError):
            SimConfig(noise_sd=-1.0)
        with pytest.raises(ValueError):
            SimConfig(class_mean_shift=-0.1)

    def test_json_round_trip(self, tmp_path):
        config = SimConfig(n_samples=3, noise_sd=7.5)
        path = tmp_path / "sim.json"
        save_sim_config(config, path)
        assert load_sim_config(path) == config

    def test_unknown_json_field_rejected(self, tmp_path):
        path = tmp_path / "sim.json"
        path.write_text('{"n_samples": 3, "bogus": 1}')
        with pytest.raises(Exception):
            load_sim_config(path)


class TestGenerateDataset:
    def test_shapes_and_ids(self):
        table, manifest = generate_dataset(SMALL, seed=0)
        assert table.n_cells == 4 * 60
        assert table.n_features == 6
        np.testing.assert_array_equal(table.cell_id, np.arange(1, 241))
        assert len(manifest.samples) == 4
        assert set(table.sample_id) == {s.sample_id for s in manifest.samples}

    def test_melanoma_count_rounds_from_fraction(self):
        _, manifest = generate_dataset(SMALL, seed=0)
        diagnoses = [s.diagnosis for s in manifest.samples]
        assert diagnoses.count("melanoma") == 3  # round(0.75 * 4)
        assert diagnoses.count("healthy") == 1

    def test_healthy_samples_contain_no_tumor_cells(self):
        table, manifest = generate_dataset(SMALL, seed=1)
        healthy = {s.sample_id for s in manifest.samples if s.diagnosis == "healthy"}
        for sid in healthy:
            assert table.label[table.sample_id == sid].max() == 0

    def test_tumor_cells_fall_inside_a_disk(self):
        config = SimConfig(
            n_samples=2,
            fraction_melanoma=1.0,
            cells_per_sample=400,
            n_channels=4,
            field_size_px=256,
            tumor_radius_px=80.0,
        )
        table, _ = generate_dataset(config, seed=2)
        for sid in np.unique(table.sample_id):
            inside = table.label[table.sample_id == sid] == 1
            assert 0 < inside.sum() < inside.size
            pos = np.column_stack(
                [table.x[table.sample_id == sid], table.y[table.sample_id == sid]]
            )
            tumor = pos[inside]
            center = tumor.mean(axis=0)
            # every tumor cell sits within the planted radius of the others
            assert np.linalg.norm(tumor - center, axis=1).max() <= 2 * 80.0

    def test_class_shift_moves_half_the_channels(self):
        config = SimConfig(
            n_samples=1,
            fraction_melanoma=1.0,
            cells_per_sample=600,
            n_channels=8,
            field_size_px=256,
            tumor_radius_px=100.0,
            class_mean_shift=50.0,
            noise_sd=1.0,
            spatial_smoothing=0.0,
        )
        table, _ = generate_dataset(config, seed=3)
        tumor = table.features[table.label == 1].mean(axis=0)
        normal = table.features[table.label == 0].mean(axis=0)
        gap = tumor - normal
        assert (gap > 25.0).sum() == 4  # n_channels // 2 shifted channels
        assert (np.abs(gap) < 5.0).sum() == 4

    def test_zero_noise_gives_exact_means(self):
        config = SimConfig(
            n_samples=1,
            fraction_melanoma=0.0,
            cells_per_sample=10,
            n_channels=3,
            field_size_px=64,
            tumor_radius_px=0.0,
            noise_sd=0.0,
            spatial_smoothing=0.0,
        )
        table, _ = generate_dataset(config, seed=4)
        assert np.ptp(table.features, axis=0).max() == 0.0

    def test_deterministic_given_seed(self):
        a, ma = generate_dataset(SMALL, seed=7)
        b, mb = generate_dataset(SMALL, seed=7)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.label, b.label)
        assert ma == mb

    def test_seed_changes_the_draw(self):
        a, _ = generate_dataset(SMALL, seed=0)
        b, _ = generate_dataset(SMALL, seed=1)
        assert not np.array_equal(a.features, b.features)

    def test_coordinates_inside_field(self):
        table, _ = generate_dataset(SMALL, seed=5)
        assert table.x.min() >= 0 and table.x.max() <= 128
        assert table.y.min() >= 0 and table.y.max() <= 128

    def test_manifest_records_channel_count(self):
        _, manifest = generate_dataset(SMALL, seed=0)
        assert all(s.n_channels == 6 for s in manifest.samples)


class TestEmitImages:
    def test_round_trip_through_ingest(self, tmp_path):
        config = SimConfig(
            n_samples=1,
            fraction_melanoma=1.0,
            cells_per_sample=40,
            n_channels=3,
            field_size_px=96,
            tumor_radius_px=30.0,
            noise_sd=5.0,
        )
        table, _ = generate_dataset(config, seed=0)
        emit_images(config, table, tmp_path)
        descriptors = sorted(tmp_path.glob("*/descriptor.txt"))
        assert len(descriptors) == 1
        recovered = load_sample(descriptors[0])
        assert recovered.n_cells == 40
        assert recovered.n_features == 3
        # disk averaging and 8-bit quantization leave at most rounding error
        order = np.argsort(recovered.cell_id)
        assert np.abs(recovered.features[order] - table.features).max() <= 0.5

    def test_mask_labels_match_cell_count(self, tmp_path):
        config = SimConfig(
            n_samples=1,
            cells_per_sample=25,
            n_channels=2,
            field_size_px=96,
            tumor_radius_px=20.0,
        )
        table, _ = generate_dataset(config, seed=1)
        emit_images(config, table, tmp_path)
        from melcgraph.ingest import read_pgm

        mask_path = next(tmp_path.glob("*/mask.pgm"))
        mask = read_pgm(mask_path)
        present = np.unique(mask)
        assert present.max() <= 25
        # every cell keeps at least one pixel after overlap resolution
        assert len(set(range(1, 26)) - set(present.tolist())) == 0

    def test_disk_radius_constant_is_positive(self):
        assert MASK_DISK_RADIUS_PX >= 1
