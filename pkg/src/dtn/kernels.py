"""Kernel backend selection.

The network hot path (batch forward/backward) runs on numba-jitted
kernels by default. Set DTN_NUMBA=0 to force the pure-numpy fallback;
the fallback is also used automatically when numba is not importable.
`benchmarks/bench_kernels.py` compares the two.
"""

import os

from dtn import _kernels_numpy

TANH = 0
SIGMOID = 1


def _select():
    flag = os.environ.get("DTN_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return _kernels_numpy, "numpy"
    try:
        from dtn import _kernels_numba
    except ImportError:
        return _kernels_numpy, "numpy"
    return _kernels_numba, "numba"


_impl, BACKEND = _select()

affine_act = _impl.affine_act
affine_logits = _impl.affine_logits
softmax_rows = _impl.softmax_rows
act_vjp = _impl.act_vjp
softmax_vjp = _impl.softmax_vjp
grad_weights = _impl.grad_weights
grad_bias = _impl.grad_bias
grad_input = _impl.grad_input
nll_sum = _impl.nll_sum
nll_grad_logits = _impl.nll_grad_logits
LOG_FLOOR = _impl.LOG_FLOOR
