import dataclasses

import pytest

from tiersim.config import Config, SimConfig, WorkloadConfig, model_preset, preset


@pytest.fixture
def stratum_l():
    return preset("stratum-l")


@pytest.fixture
def mixtral():
    return model_preset("mixtral-8x7b")


def desk_config(layers=8, hit=0.485, input_len=512, output_len=512, **workload):
    """Mixtral dimensions on the 6-chip system with fewer layers."""
    model = dataclasses.replace(model_preset("mixtral-8x7b"), num_layers=layers)
    w = dict(arrival_rate=1.0, input_len=input_len, output_len=output_len, classifier_accuracy=1.0, seed=1)
    w.update(workload)
    return Config(preset("stratum-l"), model, WorkloadConfig(**w), SimConfig(duration=60.0, hot_hit_target=hit))
