"""One-time oracle run for the synthetic-benchmark acceptance threshold.

Runs the noisy-icosphere benchmark with finite-difference gradients (the
permanent oracle mode) and prints the resulting mean geodesic errors. The
printed learned-variant error is frozen into tests/test_acceptance.py as
the golden threshold; the analytic path must match or beat it.
"""

import time

from specmatch.bench import (
    NoisyPermutation,
    PipelineConfig,
    make_synthetic_pair,
    run_pipeline,
)
from specmatch.generate import icosphere
from specmatch.learn import TrainConfig

BENCH_SEED = 7
BENCH_NOISE = 0.01


def benchmark_pair():
    return make_synthetic_pair(icosphere(3), NoisyPermutation(BENCH_NOISE),
                               seed=BENCH_SEED)


def benchmark_config(gradient_mode):
    tc = TrainConfig(
        learning_rate=1e-2,
        iterations=200,
        alpha=0.07,
        k_init=20,
        k_end=40,
        k_step=10,
        seed=0,
        gradient_mode=gradient_mode,
    )
    return PipelineConfig(
        k=40,
        alpha=0.07,
        feature_kind="xyz",
        refine=True,
        refine_k_init=20,
        refine_k_end=40,
        refine_step=1,
        train=tc,
    )


def main():
    pair = benchmark_pair()
    for mode in ("fd", "analytic"):
        cfg = benchmark_config(mode)
        for variant in ("learned", "fixed"):
            t0 = time.time()
            _, report = run_pipeline(pair, (variant, "projection"), cfg)
            print(
                f"mode={mode:8s} variant={variant:8s} "
                f"mean_error={report.mean_error:.12f} "
                f"wall={time.time() - t0:.1f}s",
                flush=True,
            )


if __name__ == "__main__":
    main()
