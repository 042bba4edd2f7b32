import numpy as np
import pytest

from trifuse import ModelConfig, backend, init_model_params
from trifuse.data import SynthSpec, generate_synthetic
from trifuse.training import AdamState, TrainState


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=backend.available_backends())
def kernel_backend(request):
    """Run the decorated test once per available kernel backend."""
    previous = backend.get_backend()
    backend.set_backend(request.param)
    yield request.param
    backend.set_backend(previous)


def tiny_config(**overrides) -> ModelConfig:
    base = dict(d_model=8, n_heads=1, n_layers=1, d_ff=16, dropout_p=0.0,
                d_img=5, d_audio=4, d_text=6, max_seq_len=16)
    base.update(overrides)
    return ModelConfig(**base).validate()


def tiny_dataset(n_train=8, seed=3, informativeness=(0.8, 0.8, 0.8), **overrides):
    spec_kwargs = dict(n_train=n_train, d_img=5, d_audio=4, d_text=6,
                       img_len=(2, 4), audio_len=(2, 4), text_len=(2, 4),
                       informativeness=informativeness, seed=seed)
    spec_kwargs.update(overrides)
    return generate_synthetic(SynthSpec(**spec_kwargs))


def fresh_state(cfg: ModelConfig, seed: int) -> TrainState:
    rng = np.random.default_rng(seed)
    params = init_model_params(cfg, rng)
    return TrainState(params=params, adam=AdamState.fresh(params), rng=rng)
