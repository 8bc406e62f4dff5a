"""Compare the numpy and numba kernel backends on training-sized inputs.

Run with: python3 benchmarks/bench_kernels.py [--batch N] [--dim D] [--hidden H]

Expect mixed results. Both backends route matrix products through BLAS,
so affine layers and weight gradients land within noise of each other;
the fused elementwise kernels (activations, their VJPs, the likelihood
terms) are where the compiled backend pulls ahead, mostly on larger
batches. A final end-to-end row times one full objective + gradient
evaluation through the trainer with each backend active.
"""

import argparse
import subprocess
import sys
import time
import timeit

import numpy as np

from dtn import _kernels_numpy as knp

try:
    from dtn import _kernels_numba as knb
except ImportError:
    knb = None


def _time(fn, *args, repeat=5, number=20):
    best = min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number))
    return best / number


def bench_kernels(batch, dim, hidden, classes=10):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((batch, dim))
    w1 = rng.standard_normal((hidden, dim)) * 0.1
    b1 = rng.standard_normal(hidden) * 0.1
    w2 = rng.standard_normal((classes, hidden)) * 0.1
    b2 = rng.standard_normal(classes) * 0.1
    h = knp.affine_act(x, w1, b1, 0)
    z = knp.affine_logits(h, w2, b2)
    p = knp.softmax_rows(z)
    labels = rng.integers(0, classes, size=batch)
    labels[:: 4] = -1
    dh = rng.standard_normal(h.shape)
    g = rng.standard_normal(p.shape)
    da = rng.standard_normal(h.shape)

    cases = [
        ("affine_act tanh", ("affine_act", x, w1, b1, 0)),
        ("affine_act sigmoid", ("affine_act", x, w1, b1, 1)),
        ("affine_logits", ("affine_logits", h, w2, b2)),
        ("softmax_rows", ("softmax_rows", z)),
        ("act_vjp tanh", ("act_vjp", h, dh, 0)),
        ("softmax_vjp", ("softmax_vjp", p, g)),
        ("grad_weights", ("grad_weights", da, x)),
        ("grad_bias", ("grad_bias", da)),
        ("grad_input", ("grad_input", da, w1)),
        ("nll_sum", ("nll_sum", p, labels)),
        ("nll_grad_logits", ("nll_grad_logits", p, labels)),
    ]

    print(f"\nkernels at batch={batch}, dim={dim}, hidden={hidden}, classes={classes}")
    print(f"{'kernel':<20} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, (fn_name, *args) in cases:
        t_np = _time(getattr(knp, fn_name), *args)
        if knb is None:
            print(f"{name:<20} {t_np * 1e6:>10.1f}us {'n/a':>12} {'n/a':>9}")
            continue
        fn_nb = getattr(knb, fn_name)
        fn_nb(*args)  # compile outside the timed region
        t_nb = _time(fn_nb, *args)
        print(f"{name:<20} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{t_np / t_nb:>8.2f}x")


def bench_end_to_end(batch, dim, hidden):
    """One objective + gradient evaluation with each backend active.

    Backend choice is frozen at import, so each measurement runs in a
    subprocess with DTN_NUMBA set accordingly.
    """
    script = f"""
import time
import numpy as np
from dtn import kernels, network, trainer

rng = np.random.default_rng(0)
specs = network.mlp_specs([{dim}, {hidden}, 10])
params = network.init_params(specs, rng)
x_s = rng.standard_normal(({batch // 2}, {dim}))
x_t = rng.standard_normal(({batch // 2}, {dim})) + 0.3
y_s = rng.integers(0, 10, size={batch // 2})
y_t = rng.integers(0, 10, size={batch // 2})
cfg = trainer.TrainConfig(lam=10.0, mu=10.0, batch_size={batch})
for _ in range(3):  # warm caches and any compilation
    trainer.batch_gradient(params, specs, x_s, y_s, x_t, y_t, cfg)
start = time.perf_counter()
for _ in range(50):
    trainer.batch_objective(params, specs, x_s, y_s, x_t, y_t, cfg)
    trainer.batch_gradient(params, specs, x_s, y_s, x_t, y_t, cfg)
print(kernels.BACKEND, (time.perf_counter() - start) / 50)
"""
    print(f"\nfull objective+gradient step at batch={batch}, dim={dim}, hidden={hidden}")
    for flag in ("0", "1"):
        out = subprocess.run([sys.executable, "-c", script],
                             env=dict(DTN_NUMBA=flag, PATH="/usr/bin:/bin",
                                      HOME="/root"),
                             capture_output=True, text=True)
        if out.returncode != 0:
            print(f"  DTN_NUMBA={flag}: failed\n{out.stderr}")
            continue
        backend, seconds = out.stdout.split()
        print(f"  {backend:<6} {float(seconds) * 1e3:8.3f} ms per step")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=200)
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--hidden", type=int, default=128)
    args = parser.parse_args()
    if knb is None:
        print("numba backend unavailable; timing numpy only")
    for batch in (args.batch, 4 * args.batch):
        bench_kernels(batch, args.dim, args.hidden)
    bench_end_to_end(args.batch, args.dim, args.hidden)


if __name__ == "__main__":
    main()
