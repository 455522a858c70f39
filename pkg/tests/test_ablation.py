import csv
import io

import numpy as np
import pytest

from phqfusion.ablation import (
    ALL_ROWS,
    FUSION_ROWS,
    MODALITY_ROWS,
    Variant,
    ablation_csv,
    ablation_table,
    rows_for,
    run_ablation,
    write_ablation,
)
from phqfusion.errors import ConfigError
from phqfusion.model import ModelConfig
from phqfusion.pipeline import TrainConfig

CONFIG = ModelConfig(d=8, heads=2, layers=1, text_dim=16, d_a=5, d_v=6)
QUICK = TrainConfig(batch_size=8, lr=3e-3, epochs=1)


@pytest.fixture(scope="module")
def all_results(small_corpus, small_features):
    return run_ablation(small_corpus, None, CONFIG, QUICK, ALL_ROWS, features=small_features)


def test_row_sets():
    assert [v.modalities for v in MODALITY_ROWS] == ["T", "A", "V", "S", "TA", "TAV", "TAVS"]
    assert [(v.gate, v.bca, v.ap) for v in FUSION_ROWS] == [
        (False, False, False), (True, False, False), (True, True, False), (True, True, True)]
    assert len(ALL_ROWS) == 11
    assert len({v.key for v in ALL_ROWS}) == 10
    assert rows_for("fusion") == FUSION_ROWS
    with pytest.raises(ConfigError):
        rows_for("everything")


def test_one_result_per_row(all_results):
    assert len(all_results) == 11
    assert [r.variant for r in all_results] == list(ALL_ROWS)
    for r in all_results:
        assert {"ccc", "mae", "rmse"} <= set(r.dev)


def test_shared_variant_trained_once(all_results):
    full_modality, full_fusion = all_results[6], all_results[10]
    assert full_modality.variant.key == full_fusion.variant.key
    assert full_modality.dev == full_fusion.dev


def test_gate_off_values_are_exactly_one(all_results):
    no_gate = all_results[7]
    assert not no_gate.variant.gate
    assert np.array_equal(no_gate.gate_values, np.ones_like(no_gate.gate_values))
    gated = all_results[10].gate_values
    assert np.all((gated > 0) & (gated < 1))


def test_results_are_deterministic(small_corpus, small_features, all_results):
    again = run_ablation(small_corpus, None, CONFIG, QUICK, MODALITY_ROWS[:2], features=small_features)
    assert [r.dev for r in again] == [r.dev for r in all_results[:2]]


def test_empty_row_list(small_corpus, small_features):
    with pytest.raises(ConfigError, match="at least one"):
        run_ablation(small_corpus, None, CONFIG, QUICK, [], features=small_features)


def test_all_modalities_off(small_corpus, small_features):
    with pytest.raises(ConfigError):
        run_ablation(small_corpus, None, CONFIG, QUICK, [Variant("modality", "")], features=small_features)


def test_outputs(all_results, tmp_path):
    rows = list(csv.DictReader(io.StringIO(ablation_csv(all_results))))
    assert len(rows) == 11 and rows[0]["modalities"] == "T"
    table = ablation_table(all_results)
    assert table.count("\n") == 13
    paths = write_ablation(all_results, tmp_path)
    assert all(p.exists() for p in paths.values())


def test_checkpoints_saved_per_variant(small_corpus, small_features, tmp_path):
    run_ablation(small_corpus, None, CONFIG, QUICK, FUSION_ROWS[:2], features=small_features, out_dir=tmp_path)
    for v in FUSION_ROWS[:2]:
        assert (tmp_path / v.slug / "stage3.ckpt.json").exists()
        assert (tmp_path / v.slug / "history.json").exists()
