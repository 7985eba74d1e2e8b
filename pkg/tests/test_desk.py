"""Desk-scale measurements that share the three-seed study with the
acceptance tests."""

import json

import pytest

from legr.cli import main

from conftest import CONFIGS, DESK_SEEDS

pytestmark = pytest.mark.desk


def test_search_beats_warmup(desk_study):
    _, _, s = desk_study
    assert s["search_improved"] >= 2, s["search_improved"]


def test_longer_fitness_finetune_helps_identity(desk_study):
    _, trials, s = desk_study
    detail = [t.extra["identity_fitness"] for t in trials]
    assert s["identity_tau_helps"] >= 2, detail


def test_sweep_reports_are_complete(desk_study):
    base, trials, _ = desk_study
    assert [t.seed for t in trials] == list(DESK_SEEDS)
    for t in trials:
        for report in (t.pipeline.legr, t.pipeline.baseline):
            assert [r.zeta for r in report.rows] == base.sweep.zetas
            assert all(r.status == "ok" and r.flop_ratio <= r.zeta for r in report.rows)


def test_pretrain_four_class_shapes(tmp_path, capsys):
    assert main(["pretrain", "--manifest", str(CONFIGS / "desk_c4.json"), "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    metrics = json.loads((tmp_path / "pretrain_metrics.json").read_text())
    assert metrics["test_accuracy"] >= 0.90
