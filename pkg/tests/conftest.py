import numpy as np
import pytest

from stpark.model import DeepPA, ModelConfig


def tiny_config(**overrides):
    base = dict(n_lots=4, history=4, horizon=2, hidden=8, n_heads=2, predictor_hidden=8,
                temporal_feature_dim=5, n_planning_areas=3, n_land_uses=2)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_inputs(cfg, batch=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(batch, cfg.history, cfg.n_lots))
    F_t = rng.normal(size=(batch, cfg.history, cfg.temporal_feature_dim))
    numeric = rng.uniform(size=(cfg.n_lots, cfg.spatial_numeric_dim))
    categorical = np.stack([np.arange(cfg.n_lots) % cfg.n_planning_areas,
                            np.arange(cfg.n_lots) % cfg.n_land_uses], axis=1)
    return X, F_t, numeric, categorical


@pytest.fixture
def tiny():
    cfg = tiny_config()
    return DeepPA(cfg, seed=3), tiny_inputs(cfg)
