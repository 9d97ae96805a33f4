import numpy as np
import pytest

from uavmec import config, dagtasks


def desk_config(num_slots=6, num_uavs=3, num_tds=4, **overrides):
    cfg = config.default_config()
    cfg["num_slots"] = num_slots
    cfg["num_uavs"] = num_uavs
    cfg["num_tds"] = num_tds
    cfg.update(overrides)
    return cfg


def make_instance(seed=0, num_slots=6, num_uavs=3, num_tds=4,
                  subtasks_per_layer=(1, 3), **overrides):
    """Scenario + generated graph with finalized budgets."""
    cfg = desk_config(num_slots=num_slots, num_uavs=num_uavs, num_tds=num_tds,
                      **overrides)
    scn = config.make_scenario(cfg)
    graph = dagtasks.generate(scn, seed=seed, subtasks_per_layer=subtasks_per_layer,
                              dependency_coeff=cfg["dependency_coeff"])
    scn = config.finalize_budgets(scn, graph, cfg)
    return scn, graph


@pytest.fixture
def desk_instance():
    return make_instance(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
