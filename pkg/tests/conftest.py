"""Общие фикстуры: миниатюрные конфиги (латент 8 или 4x4, L=2, D=4) и маленький бэкбон."""

import numpy as np
import pytest

from src.models.schemas import BackboneConfig, DegradationKind, PathwayConfig
from src.services.backbone import Backbone, init_weights
from src.services.prompts import TextPathway
from src.services.toyworld import PairedSample

TINY_TOML = """
[data]
side = 4
n_train = 8
n_test = 3

[pathway]
tokens = 2
token_dim = 4
context_dim = 4
hidden_dim = 4

[backbone]
input_dim = 16
hidden_dim = 8
num_layers = 1
context_tokens = 2
context_dim = 4
time_dim = 4
attn_dim = 4
pretrain_steps = 5
batch_size = 4

[train]
iterations = 3
batch_size = 2

[sampler]
steps = 3

[experiment]
seeds = [0]
t0_candidates = [0.2, 0.4]
diagnostic_pairs = 30
progress = false
log_level = "WARNING"
"""


@pytest.fixture(autouse=True)
def _no_seed_override(monkeypatch):
    monkeypatch.delenv("BRIDGEPROMPT_SEED", raising=False)


@pytest.fixture
def tiny_pathway_config() -> PathwayConfig:
    return PathwayConfig(tokens=2, token_dim=4, context_dim=4, hidden_dim=4, seed=0)


@pytest.fixture
def tiny_backbone_config() -> BackboneConfig:
    return BackboneConfig(
        input_dim=8, hidden_dim=8, num_layers=1, context_tokens=2, context_dim=4, time_dim=4, attn_dim=4, seed=0
    )


@pytest.fixture
def tiny_pathway(tiny_pathway_config) -> TextPathway:
    return TextPathway(tiny_pathway_config)


@pytest.fixture
def tiny_backbone(tiny_backbone_config, tiny_pathway) -> Backbone:
    weights = init_weights(tiny_backbone_config, tiny_pathway.null_context())
    weights.freeze()
    return Backbone(weights)


def make_tiny_pairs(n: int = 4, dim: int = 8, seed: int = 0, kind=DegradationKind.VEIL) -> list[PairedSample]:
    rng = np.random.default_rng(seed)
    clean = rng.uniform(0.1, 0.9, size=(n, dim))
    degraded = 0.6 * clean + 0.4
    return [PairedSample(z_clean=clean[i], z_deg=degraded[i], kinds=(kind,)) for i in range(n)]


@pytest.fixture
def tiny_pairs() -> list[PairedSample]:
    return make_tiny_pairs()


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML, encoding="utf-8")
    return path
