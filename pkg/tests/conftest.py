import numpy as np
import pytest

from ssd_engine import ModelConfig, SsdInputs


def make_instance(
    rng: np.random.Generator,
    batch=1,
    seq=16,
    heads=2,
    pdim=4,
    ndim=4,
    groups=1,
    dtype=np.float64,
) -> SsdInputs:
    """Random contract-respecting SSD inputs: dt >= 0, a <= 0."""
    return SsdInputs(
        X=rng.standard_normal((batch, seq, heads, pdim)).astype(dtype),
        dt=rng.uniform(0.0, 1.2, size=(batch, seq, heads)).astype(dtype),
        a=-rng.uniform(0.3, 4.0, size=heads).astype(dtype),
        Bmat=rng.standard_normal((batch, seq, groups, ndim)).astype(dtype),
        Cmat=rng.standard_normal((batch, seq, groups, ndim)).astype(dtype),
    )


def as_f32(inst: SsdInputs) -> SsdInputs:
    return SsdInputs(
        X=inst.X.astype(np.float32),
        dt=inst.dt.astype(np.float32),
        a=inst.a.astype(np.float32),
        Bmat=inst.Bmat.astype(np.float32),
        Cmat=inst.Cmat.astype(np.float32),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_config(**overrides) -> ModelConfig:
    """Tiny model config with a sub-eps norm floor suitable for desk-scale numerics."""
    kwargs = dict(
        vocab_size=64,
        d_model=32,
        n_layers=2,
        d_state=8,
        head_dim=8,
        expand=2,
        n_groups=1,
        conv_kernel=4,
        chunk_size=16,
        norm_eps=1e-12,
    )
    kwargs.update(overrides)
    return ModelConfig(**kwargs)
