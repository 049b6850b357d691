"""Compare the compiled beamforming kernels against the pure-Python ones.

Run from the repository root:

    python3 benchmarks/bench_beamform.py [--repeats 3] [--threads 1 4]

Prints one table row per (kernel, backend, threads) combination with the
best wall time and the speedup of the compiled extension over the
fallback for matching settings.
"""

import argparse
import time

import numpy as np

from pwvar import _kernels
from pwvar.beamform import BeamformerConfig, das, ebmv_image
from pwvar.core import ImagingGrid, ProbeGeometry
from pwvar.phantom import (
    GaussianPulse,
    cloud_from_reflectivity,
    draw_reflectivity,
    make_phantom,
    simulate_channel_data,
)


def build_scene():
    probe = ProbeGeometry(
        element_positions=(np.arange(96) - 47.5) * 3e-4,
        center_frequency=5e6,
        sampling_frequency=2e7,
        sound_speed=1540.0,
    )
    grid = ImagingGrid.regular(-8e-3, 8e-3, 201, 1.2e-2, 3.2e-2, 301)
    phantom = make_phantom(grid, [], background=1.0)
    cloud = cloud_from_reflectivity(draw_reflectivity(phantom, seed=0))
    pulse = GaussianPulse(probe.center_frequency, fractional_bandwidth=0.6)
    data = simulate_channel_data(cloud, probe, pulse=pulse, seed=0)
    return data, grid


def best_time(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--threads", type=int, nargs="+", default=[1, 4])
    args = parser.parse_args()

    backends = _kernels.available()
    if "compiled" not in backends:
        print("note: compiled extension not built, timing fallback only")

    data, grid = build_scene()
    config = BeamformerConfig(subarray_length=48, f_number=1.75)
    pixels = grid.nx * grid.nz
    print(f"scene: {data.samples.shape[1]} elements, "
          f"{grid.nx} x {grid.nz} grid ({pixels} pixels)")
    print()
    header = f"{'kernel':<6} {'backend':<9} {'threads':>7} {'best':>10}"
    print(header)
    print("-" * len(header))

    results = {}
    for name, fn in (("das", das), ("ebmv", ebmv_image)):
        for backend in backends:
            for threads in args.threads:
                seconds = best_time(
                    lambda: fn(data, grid, config, threads=threads,
                               backend=backend),
                    args.repeats)
                results[(name, backend, threads)] = seconds
                print(f"{name:<6} {backend:<9} {threads:>7} "
                      f"{seconds:>9.3f}s")

    if "compiled" in backends:
        print()
        for name in ("das", "ebmv"):
            for threads in args.threads:
                ratio = (results[(name, "fallback", threads)]
                         / results[(name, "compiled", threads)])
                print(f"{name} x{threads}: compiled is {ratio:.1f}x faster")


if __name__ == "__main__":
    main()
