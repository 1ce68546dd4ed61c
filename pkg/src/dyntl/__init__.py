"""Dynamic transfer learning at desk scale."""

from .bounds import DiscreteInstance, compute_bound, verify_chain_inequality
from .divergence import KernelCfg, mmd2_biased, mmd2_unbiased
from .meta import L2ECfg, RunResult, run_l2e
from .numerics import Arch, ModelParams, init_params
from .taskstream import DynamicStream, StreamCfg, TaskSnapshot, gen_stream

__all__ = [
    "Arch", "DiscreteInstance", "DynamicStream", "KernelCfg", "L2ECfg", "ModelParams", "RunResult",
    "StreamCfg", "TaskSnapshot", "compute_bound", "gen_stream", "init_params", "mmd2_biased",
    "mmd2_unbiased", "run_l2e", "verify_chain_inequality",
]
__version__ = "0.1.0"
