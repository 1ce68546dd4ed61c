import numpy as np
import pytest

from dyntl.meta import L2ECfg
from dyntl.numerics import Arch, init_params
from dyntl.taskstream import StreamCfg, gen_stream


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of scalar ``f`` at vector ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_close(a, b, rel=1e-4, abs_=1e-7):
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(np.abs(a - b) <= np.maximum(abs_, rel * np.maximum(np.abs(a), np.abs(b)))))


@pytest.fixture
def small_stream():
    return gen_stream(StreamCfg(N=3, m=40, rho_s=-10, rho_t=10, seed=3))


@pytest.fixture
def fast_cfg():
    return L2ECfg(inner_steps=2, outer_epochs=3, val_count=8, hidden_dims=(8,), embed_dim=4)


@pytest.fixture
def tiny_params():
    return init_params(Arch(2, (5,), 3, 2, embed_activation="tanh"), seed=0)
