"""
Приёмочные прогоны на конфигурации по умолчанию (assets/configs/default.toml).
Долгие: запускаются явно, `pytest -m slow`.
"""

from pathlib import Path

import numpy as np
import pytest

from src.core.config import load_config
from src.models.schemas import DegradationKind
from src.services.backbone import Backbone, pretrain
from src.services.evaluation import HALF_NORMAL_MEAN, mse_psnr
from src.services.experiments import Workbench, bridge_experiment, make_split, mismatch_experiment
from src.services.prompts import PromptBank, TextPathway, encode
from src.services.sampler import SamplerTrace, restore
from src.services.toyworld import stack_pairs
from src.services.training import train_prompt, window_mean

pytestmark = pytest.mark.slow

DEFAULT_TOML = Path(__file__).resolve().parent.parent / "assets" / "configs" / "default.toml"


@pytest.fixture(scope="module")
def setup():
    config = load_config(DEFAULT_TOML).config
    config = config.model_copy(update={"experiment": config.experiment.model_copy(update={"progress": False})})
    pathway = TextPathway(config.pathway)
    result = pretrain(config.backbone, config.data, pathway)
    return config, pathway, result


@pytest.fixture(scope="module")
def trained(setup):
    config, pathway, result = setup
    backbone = Backbone(result.weights)
    train, test = make_split(config, [DegradationKind.VEIL], config.train.seed)
    report = train_prompt(config.train, PromptBank(), backbone, pathway, train)
    return backbone, report, test


def test_pretraining_halves_the_loss(setup):
    _, _, result = setup
    assert window_mean(result.losses, head=False) < 0.5 * window_mean(result.losses, head=True)


def test_ebr_prompt_training_halves_the_loss(trained):
    _, report, _ = trained
    assert report.summary.final_loss < 0.5 * report.summary.initial_loss
    assert report.summary.frozen_ok


def test_restoration_beats_degraded_input(setup, trained):
    config, pathway, _ = setup
    backbone, report, test = trained
    z_clean, z_deg = stack_pairs(test)
    trace = SamplerTrace()
    restored = restore(z_deg, encode(report.prompt, pathway, backbone.weights.e_null), backbone, config.sampler, trace)
    assert trace.nfe == config.sampler.steps
    assert len(test) == 64
    restored_mses = np.array([mse_psnr(r, c)[0] for r, c in zip(restored, z_clean)])
    input_mses = np.array([mse_psnr(d, c)[0] for d, c in zip(z_deg, z_clean)])
    assert np.mean(restored_mses < input_mses) >= 0.9


def test_ebr_beats_naive_over_seeds(setup):
    config, pathway, result = setup
    bench = Workbench(backbone=Backbone(result.weights), pathway=pathway, config=config)
    report = bridge_experiment(bench)
    assert report.ebr_beats_naive, report.verdicts
    assert report.ebr_not_worse_than_ddbm, report.verdicts


def test_naive_sampling_drifts_further_than_ebr(setup):
    config, pathway, result = setup
    bench = Workbench(backbone=Backbone(result.weights), pathway=pathway, config=config)
    mismatch = mismatch_experiment(bench)
    assert mismatch.curves["naive"].mean() > mismatch.curves["ebr"].mean()
    assert abs(mismatch.sanity - HALF_NORMAL_MEAN) <= 0.05
