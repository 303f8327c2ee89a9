import numpy as np
import pytest

from deeplau.model import ModelConfig, ModelParams


def random_model(seed, V=7, E=4, H=5, L_enc=2, L_dec=2, kind="lau", residual=False,
                 std=0.5, dropout=0.0, src_vocab=None):
    """Model with all buffers (biases included) drawn from N(0, std^2)."""
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(src_vocab or V, V, E, H, L_enc, L_dec, kind, residual, dropout)
    params = ModelParams(cfg)
    for buf in params.buffers().values():
        buf[...] = rng.standard_normal(buf.shape) * std
    return params, cfg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
