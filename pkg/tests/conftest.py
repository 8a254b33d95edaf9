import numpy as np
import pytest

import deconas.autograd as ag
from deconas import space


def finite_diff_max_rel_err(fn, tensors, h=1e-5):
    """Compare analytic gradients of sum(fn()) against central differences.

    Returns the worst relative error over every element of ``tensors``.
    """
    for t in tensors:
        t.grad = None
    out = fn()
    loss = out if out.data.ndim == 0 else ag.tsum(out)
    loss.backward()
    worst = 0.0
    for t in tensors:
        analytic = t.grad.reshape(-1)
        flat = t.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(ag.tsum(fn()).data)
            flat[i] = orig - h
            fm = float(ag.tsum(fn()).data)
            flat[i] = orig
            numeric[i] = (fp - fm) / (2 * h)
        denom = np.maximum(np.abs(numeric), np.abs(analytic))
        denom[denom < 1e-6] = 1.0
        worst = max(worst, float(np.max(np.abs(numeric - analytic) / denom)))
    return worst


@pytest.fixture
def tiny_config():
    """Smallest interesting space: 1 block, 2 mix nodes, 2 ops, 4 channels."""
    return space.SearchSpaceConfig(
        num_blocks=1, mix_nodes=2, num_ops=2, feature_channels=4, scale=2,
        op_list=(space.CONV3X3, space.DEPTHWISE_SEPARABLE3X3))


@pytest.fixture
def tiny_fusion_config():
    return space.SearchSpaceConfig(
        num_blocks=1, mix_nodes=2, num_ops=2, feature_channels=4, scale=2,
        fusion_search=True,
        op_list=(space.CONV3X3, space.DEPTHWISE_SEPARABLE3X3))


@pytest.fixture
def paper_config():
    return space.SearchSpaceConfig()


PUBLISHED_DIGITS = [7, 6, 4, 3, 0, 2, 2, 3, 4, 1]
