"""Time the compiled consensus kernel against the numpy fallback.

Runs the distributed price recovery of the built-in cases and of a batch of
random instances through both kernels, checks that they agree, and prints
the mean wall time per call.

    python3 benchmarks/bench_consensus.py [--repeat N] [--random K]
"""

from __future__ import annotations

import argparse
import itertools
import logging
import time

import numpy as np

from gcts import _kernels_py
from gcts.casefile import builtin_case
from gcts.errors import GctsError
from gcts.instances import instance_stream
from gcts.market import clear_gcts
from gcts.recovery import _agent_graph, assemble_stationarity, check_licq, metropolis_weights, solve_direct

try:
    from gcts import _kernels as compiled
except ImportError:  # pragma: no cover - depends on the build
    compiled = None


def consensus_inputs(system):
    """Projection stack, weights, start points and target of one stationarity system."""
    agents = system.owners
    n = len(system.unknowns)
    proj = np.zeros((len(agents), n, n))
    x0 = np.zeros((len(agents), n))
    for i, a in enumerate(agents):
        own = [r for r in system.rows if r.owner == a]
        A = np.vstack([r.coeffs for r in own])
        b = np.array([r.rhs for r in own])
        pinv = np.linalg.pinv(A, rcond=1e-12)
        x0[i] = pinv @ b
        proj[i] = np.eye(n) - pinv @ A
    W = metropolis_weights(_agent_graph(system, agents, "complete")) if len(agents) > 1 else np.ones((1, 1))
    target = solve_direct(system).vector
    return np.ascontiguousarray(proj), np.ascontiguousarray(W), np.ascontiguousarray(x0), target


def systems(n_random: int):
    cases = [builtin_case("case1", "x24_inf"), builtin_case("case3")]
    cases += [builtin_case("case2", s) for s in ("S2", "S3", "S4", "S5")]
    cases += [d.case for d in itertools.islice(instance_stream(), n_random) if d.case is not None]
    for case in cases:
        try:
            system = assemble_stationarity(clear_gcts(case))
        except GctsError:
            continue
        if check_licq(system).ok and len(system.owners) > 1:
            yield case.name, system


def timed(fn, args, repeat):
    best = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best.append(time.perf_counter() - t)
    return out, float(np.mean(best))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--random", type=int, default=10, help="number of random instances")
    parser.add_argument("--tol", type=float, default=1e-6)
    args = parser.parse_args()
    logging.basicConfig(level=logging.ERROR)

    print(f"{'system':<22}{'unknowns':>9}{'agents':>7}{'rounds':>8}{'python ms':>11}{'compiled ms':>13}{'speedup':>9}")
    totals = [0.0, 0.0]
    for name, system in systems(args.random):
        proj, W, x0, target = consensus_inputs(system)
        call = (proj, W, x0, target, args.tol, 10_000, True)
        ref, t_py = timed(_kernels_py.consensus_rounds, call, args.repeat)
        totals[0] += t_py
        if compiled is not None:
            out, t_c = timed(compiled.consensus_rounds, call, args.repeat)
            totals[1] += t_c
            assert out[1] == ref[1] and np.allclose(out[0], ref[0], atol=1e-12), name
            speed = f"{t_py / t_c:9.1f}"
            t_c_ms = f"{1e3 * t_c:13.3f}"
        else:
            speed, t_c_ms = f"{'n/a':>9}", f"{'n/a':>13}"
        print(f"{name:<22}{len(system.unknowns):>9}{len(system.owners):>7}{ref[1]:>8}{1e3 * t_py:>11.3f}{t_c_ms}{speed}")
    if compiled is not None and totals[1] > 0:
        print(f"overall speedup {totals[0] / totals[1]:.1f}x")


if __name__ == "__main__":
    main()
