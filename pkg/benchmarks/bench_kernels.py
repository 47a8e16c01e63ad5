"""Time the compiled kernels against the pure-numpy fallback.

Runs each hot kernel on training-sized inputs a few hundred times per backend
and reports the median wall time plus the compiled-over-pure speedup. Usage:

    python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from tinyasr._kernels import pure

try:
    from tinyasr._kernels import _core
except ImportError:
    _core = None


def median_ms(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


def conv_cases(rng):
    for kernel, stride in ((9, 2), (13, 1), (33, 1)):
        x = rng.normal(size=(8, 200, 64)).astype(np.float32)
        w = rng.normal(size=(kernel, 64)).astype(np.float32)
        dy = rng.normal(size=(8, -(-200 // stride), 64)).astype(np.float32)
        label = f"B8 T200 C64 K{kernel} s{stride}"
        yield f"dw_conv_fwd  {label}", lambda m, x=x, w=w, s=stride: m.dw_conv_fwd(x, w, s)
        yield (f"dw_conv_bwd  {label}",
               lambda m, x=x, w=w, s=stride, dy=dy: m.dw_conv_bwd(x, w, s, dy))


def ctc_cases(rng):
    for t_len, n_classes, u in ((100, 29, 12), (400, 44, 30)):
        logits = rng.normal(size=(t_len, n_classes))
        logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        target = np.zeros(u, dtype=np.int64)
        target[0] = rng.integers(0, n_classes - 1)
        for i in range(1, u):
            target[i] = (target[i - 1] + rng.integers(1, n_classes - 1)) % (n_classes - 1)
        label = f"T{t_len} V{n_classes} U{u}"
        yield (f"ctc_fwd_bwd  {label}",
               lambda m, lp=logp, tg=target, bl=n_classes - 1:
               m.ctc_forward_backward(np.ascontiguousarray(lp), tg, bl))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    print(f"{'case':44s} {'pure':>10s} {'compiled':>10s} {'speedup':>9s}")
    for label, call in list(conv_cases(rng)) + list(ctc_cases(rng)):
        call(pure)  # warm up caches before timing
        pure_ms = median_ms(lambda: call(pure), args.repeats)
        if _core is None:
            print(f"{label:44s} {pure_ms:8.3f}ms {'missing':>10s} {'n/a':>9s}")
            continue
        call(_core)
        core_ms = median_ms(lambda: call(_core), args.repeats)
        print(f"{label:44s} {pure_ms:8.3f}ms {core_ms:8.3f}ms "
              f"{pure_ms / core_ms:8.1f}x")
    if _core is None:
        print("compiled extension not built; showing the fallback only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
