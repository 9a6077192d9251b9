"""Compare the compiled and pure-Python integration kernels.

    python benchmarks/bench_backends.py [--repeat N]

Each workload is timed on every available backend (best of N runs) and the
results are checked to agree before the table is printed.
"""

import argparse
import time

import numpy as np

from bvpsens import _backend
from bvpsens.ivp import OdeSystem, Tolerance, integrate_fundamental
from bvpsens.oracle import verify
from bvpsens.problem import builtin, validate


def fundamental_t2():
    system = OdeSystem(2, "-sin(y0)")
    _, fs = integrate_fundamental(system, 0.0, [0.0, 0.5358], (0.0, 2.5), Tolerance(1e-10, 1e-10))
    return fs.traj.eval(np.linspace(0.0, 2.5, 51))


def third_order():
    system = OdeSystem(3, "-y0*y1 + sin(x)*y2 - exp(-x)*y0^3")
    _, fs = integrate_fundamental(system, 0.0, [0.2, -0.1, 0.3], (-2.0, 6.0), Tolerance(1e-11, 1e-11))
    return fs.traj.eval(np.linspace(-2.0, 6.0, 51))


def verify_t2():
    report = verify(validate(builtin("t2_pendulum")))
    return np.array([c.sup_abs for c in report.checks])


WORKLOADS = {
    "fundamental T2": fundamental_t2,
    "fundamental n=3, [-2, 6]": third_order,
    "verify T2 (29 BVP solves)": verify_t2,
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    names = _backend.available()
    print(f"backends: {', '.join(names)}")
    header = f"{'workload':<28}" + "".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, fn in WORKLOADS.items():
        timings, outputs = [], []
        for name in names:
            prev = _backend.set_backend(name)
            try:
                t, out = best_of(fn, args.repeat)
            finally:
                _backend.set_backend(prev)
            timings.append(t)
            outputs.append(out)
        if len(outputs) == 2 and not np.allclose(outputs[0], outputs[1], rtol=1e-9, atol=1e-12):
            raise SystemExit(f"{label}: backends disagree")
        line = f"{label:<28}" + "".join(f"{t * 1e3:>10.1f}ms" for t in timings)
        if len(timings) == 2:
            line += f"{timings[1] / timings[0]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
