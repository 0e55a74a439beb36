"""Timing comparison of the two compute backends.

Per-kernel timings call both implementation tables in the same process;
the end-to-end training-step timing re-launches this script in a
subprocess per backend because the dispatch table is frozen at import.

Usage:
    python3 benchmarks/bench_backends.py            # full comparison
    python3 benchmarks/bench_backends.py --repeats 9
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from dawnet import backend


def _median_time(fn, args, repeats: int) -> float:
    fn(*args)  # warm-up (also triggers jit compilation)
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def _kernel_cases(batch: int):
    """Representative shapes from the detector's forward/backward pass."""
    rng = np.random.default_rng(0)

    def r(*shape):
        return rng.standard_normal(shape)

    x_in = r(batch, 1, 800)
    w_in = r(8, 1, 7)
    y_in = backend.NUMPY_IMPL["conv1d_fw"](x_in, w_in, 2)
    x_mid = r(batch, 16, 100)
    w_mid = r(16, 16, 7)
    y_mid = backend.NUMPY_IMPL["conv1d_fw"](x_mid, w_mid, 2)
    x_t = r(batch, 32, 4)
    w_t = r(32, 16, 4)
    y_t = backend.NUMPY_IMPL["tconv1d_fw"](x_t, w_t, 4)
    sig = r(batch, 1, 1600 + 63)  # already reflect-padded length
    kern = r(3, 64)
    coef = backend.NUMPY_IMPL["dwt_fw"](sig, kern)
    return [
        ("conv1d_fw (1->8, L=800)", "conv1d_fw", (x_in, w_in, 2)),
        ("conv1d_gx (16ch, L=100)", "conv1d_gx", (y_mid, w_mid, 2,
                                                  x_mid.shape[2])),
        ("conv1d_gw (16ch, L=100)", "conv1d_gw", (y_mid, x_mid, 2,
                                                  w_mid.shape[2])),
        ("tconv1d_fw (32->16, s=4)", "tconv1d_fw", (x_t, w_t, 4)),
        ("tconv1d_gx (32->16, s=4)", "tconv1d_gx", (y_t, w_t, 4)),
        ("tconv1d_gw (32->16, s=4)", "tconv1d_gw", (y_t, x_t, 4,
                                                    w_t.shape[2])),
        ("dwt_fw (3 scales, L=1600)", "dwt_fw", (sig, kern)),
        ("dwt_gx (3 scales, L=1600)", "dwt_gx", (coef, kern,
                                                 sig.shape[2])),
        ("dwt_gk (3 scales, L=1600)", "dwt_gk", (coef, sig)),
    ]


def bench_kernels(batch: int, repeats: int) -> None:
    impls = [("numpy", backend.NUMPY_IMPL)]
    if backend.HAVE_NUMBA:
        impls.append(("numba", backend.NUMBA_IMPL))
    print(f"per-kernel median of {repeats} runs, batch {batch}")
    header = f"{'kernel':<28}" + "".join(f"{name:>12}" for name, _ in impls)
    print(header)
    for label, key, args in _kernel_cases(batch):
        row = f"{label:<28}"
        for _, impl in impls:
            ms = _median_time(impl[key], args, repeats) * 1e3
            row += f"{ms:>10.2f}ms"
        print(row)


def time_train_step(batch: int, repeats: int) -> float:
    """Median seconds for forward + composite loss + backward + Adam."""
    from dawnet import autodiff as ad
    from dawnet import training as tr
    from dawnet import wavelet
    from dawnet.model import DualDomainAutoencoder, ModelConfig

    rng = np.random.default_rng(1)
    amp = rng.standard_normal((batch, 800))
    psd = rng.standard_normal((batch, 800))
    target = np.concatenate([amp, psd], axis=1)
    model = DualDomainAutoencoder(ModelConfig(), seed=0)
    bank = wavelet.build_bank((4, 8, 16))
    opt = tr.Adam([t for _, t in model.params.items()], lr=1e-3)

    def step():
        out = model.forward(amp, psd)
        loss = tr.composite_loss(out, target, bank, 1.0, 0.1)
        opt.zero_grad()
        ad.backward(loss)
        opt.step()

    return _median_time(step, (), repeats)


def bench_train_step(batch: int, repeats: int) -> None:
    print(f"\ntraining step (batch {batch}, median of {repeats}):")
    names = ["numpy"] + (["numba"] if backend.HAVE_NUMBA else [])
    for name in names:
        env = dict(os.environ, DAWNET_BACKEND=name)
        out = subprocess.run(
            [sys.executable, __file__, "--train-step-only",
             "--batch", str(batch), "--repeats", str(repeats)],
            env=env, capture_output=True, text=True, check=True)
        print(f"{name:>8}: {out.stdout.strip()}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--train-step-only", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.train_step_only:
        secs = time_train_step(args.batch, args.repeats)
        print(f"{secs * 1e3:.1f} ms/step [{backend.BACKEND}]")
        return 0
    print(f"active backend: {backend.BACKEND} "
          f"(numba importable: {backend.HAVE_NUMBA})")
    bench_kernels(args.batch, args.repeats)
    bench_train_step(args.batch, args.repeats)
    return 0


if __name__ == "__main__":
    sys.exit(main())
