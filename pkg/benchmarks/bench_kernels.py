"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from dtnull import _kernels_py
from dtnull.beamforming import phase_set
from dtnull.channel import ScenarioSpec, generate_scenario

try:
    from dtnull import _kernels
except ImportError:
    _kernels = None


def cases():
    rng = np.random.default_rng(0)
    psi = phase_set(3).values
    x = rng.uniform(-np.pi, np.pi, size=100_000)
    yield "quantize_phases (1e5 phases, r=3)", lambda k: k.quantize_phases(x, psi)
    for M in (6, 8):
        sc = generate_scenario(ScenarioSpec(num_antennas=M), 0)
        H = np.stack(sc.interferer_channels)
        yield (f"sinr_scan (M={M}, r=3, {8 ** (M - 1)} beams)",
               lambda k, sc=sc, H=H: k.sinr_scan(sc.ue_channel, H, sc.tx_power, sc.noise_power, psi, True))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = [("python", _kernels_py)] + ([("cython", _kernels)] if _kernels is not None else [])
    if _kernels is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':45s}" + "".join(f"{name:>12s}" for name, _ in backends) + "     speedup")
    for label, fn in cases():
        times = [min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) for _, mod in backends]
        row = f"{label:45s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"  {times[0] / times[1]:8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
