"""Compare the numba and pure-numpy kernel paths.

Kernel timings run in this process: both spellings of every kernel are
importable side by side, so each is timed on the same input. The end-to-end
section starts one subprocess per path (``PROMPTCAST_NUMBA=1`` / ``0``) and
times a training step on the default model.

    python benchmarks/bench_kernels.py [--repeat 20] [--batch 32] [--no-e2e]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from promptcast import _accel as A


def best_of(fn, args, repeat):
    fn(*args)  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times) * 1e3


def kernel_cases(batch, rng):
    # shapes of the default model's TS stack: 4 heads, 10 + 64 + 32 + 4 + 8 = 118 fused rows, MLP width 256
    seq, heads, hidden = 118, 4, 256
    scores = rng.normal(size=(batch * heads * seq, seq)) * 3
    probs = A.softmax_forward_numpy(scores, 0)
    grad_s = rng.normal(size=scores.shape)
    h = rng.normal(size=(batch * seq, hidden))
    gh = rng.normal(size=h.shape)
    rows = rng.normal(size=(batch * seq, 64))
    xhat, inv = A.layernorm_forward_numpy(rows, 1e-5)
    grows = rng.normal(size=rows.shape)
    xs = rng.integers(0, 64, size=batch * 32)
    ys = rng.integers(0, 64, size=batch * 32)
    return [
        ("softmax fwd causal", "softmax_forward", (scores, seq)),
        ("softmax fwd full", "softmax_forward", (scores, 0)),
        ("softmax bwd", "softmax_backward", (probs, grad_s)),
        ("gelu fwd", "gelu_forward", (h,)),
        ("gelu bwd", "gelu_backward", (h, gh)),
        ("layernorm fwd", "layernorm_forward", (rows, 1e-5)),
        ("layernorm bwd", "layernorm_backward", (xhat, inv, grows)),
        ("polyline", "draw_polyline", (np.zeros((64, 64)), xs, ys, 1)),
    ]


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.abs(np.asarray(a) - np.asarray(b)).max())


E2E = r"""
import time, numpy as np
from promptcast import _accel, tensor as T
from promptcast.model import ModelConfig, build_model, forward
from promptcast.training import mse_loss
m = build_model(ModelConfig(context_length=32), seed=0)
r = np.random.default_rng(0)
x, y = r.normal(size=({b}, 32)), r.normal(size=({b}, 32))
def step():
    m.zero_grad()
    T.backward(mse_loss(forward(m, x, "benchmark"), y))
step()
best = min((lambda t0: (step(), time.perf_counter() - t0)[1])(time.perf_counter()) for _ in range({n}))
print(_accel.USE_NUMBA, best * 1e3)
"""


def end_to_end(batch, repeat):
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, PROMPTCAST_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", E2E.format(b=batch, n=repeat)], env=env,
                             capture_output=True, text=True, check=True)
        used, ms = res.stdout.split()
        out[used == "True"] = float(ms)
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-e2e", action="store_true", help="skip the subprocess training-step comparison")
    args = p.parse_args(argv)

    if not A.USE_NUMBA:
        sys.exit("numba path is disabled (PROMPTCAST_NUMBA or missing numba); nothing to compare")

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} {'max |diff|':>11}")
    for label, name, inputs in kernel_cases(args.batch, rng):
        f_np, f_nb = getattr(A, f"{name}_numpy"), getattr(A, f"{name}_loop")
        fresh = [a.copy() if isinstance(a, np.ndarray) else a for a in inputs]
        diff = max_diff(f_np(*inputs), f_nb(*fresh))
        t_np = best_of(f_np, inputs, args.repeat)
        t_nb = best_of(f_nb, inputs, args.repeat)
        print(f"{label:<20} {t_np:>10.3f} {t_nb:>10.3f} {t_np / t_nb:>7.2f}x {diff:>11.2e}")

    if not args.no_e2e:
        res = end_to_end(args.batch, max(3, args.repeat // 4))
        print(f"\ntraining step, batch {args.batch}: numpy {res[False]:.1f} ms, numba {res[True]:.1f} ms "
              f"({res[False] / res[True]:.2f}x)")


if __name__ == "__main__":
    main()
