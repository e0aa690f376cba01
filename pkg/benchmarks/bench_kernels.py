"""Compare the compiled kernels against the numpy/scipy fallback.

    python3 benchmarks/bench_kernels.py [--d 8] [--repeat 5]

Inputs are the real workloads: the Gram matrix of the full state set and the
pattern mask of a protocol stage applied to every input's amplitudes.
"""

import argparse
import timeit

import numpy as np

from upb_locc import _kernels_py
from upb_locc.engine import Measure, attach_resource, iter_nodes, teleport, Candidate
from upb_locc.protocols import build_protocol
from upb_locc.upb import build_upb

try:
    from upb_locc import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def gram_inputs(d):
    states = [s.state for s in build_upb(d).states]
    ptr = np.zeros(len(states) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([s.nnz for s in states])
    keys = np.ascontiguousarray(np.concatenate([s.keys for s in states]), dtype=np.int64)
    vals = np.ascontiguousarray(np.concatenate([s.values for s in states]), dtype=np.complex128)
    return ptr, keys, vals


def mask_inputs(d):
    """Amplitudes after T4's setup, with the largest first-layer stage."""
    tree = build_protocol("T4", d)
    upb = build_upb(d)
    lay = upb.states[0].state.layout
    cands = [Candidate(i, s.label, s.state, 1.0) for i, s in enumerate(upb.states)]
    cands, lay, _ = teleport(cands, lay, tree.register, tree.to_lab, tree.dim)
    cands, lay, _ = attach_resource(cands, tree.child.resource, lay)
    stage = max((n.stage for n in iter_nodes(tree) if isinstance(n, Measure)), key=lambda s: len(s.outcomes))
    proj = max((p for _, p in stage.outcomes), key=lambda p: len(p.patterns))
    keys = np.ascontiguousarray(np.concatenate([c.state.keys for c in cands]), dtype=np.int64)
    return keys, lay.strides(), np.asarray(lay.dims, dtype=np.int64), proj.tables(lay)


def bench(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    cases = {
        "gram": (gram_inputs(args.d), "gram"),
        "pattern_mask": (mask_inputs(args.d), "pattern_mask"),
    }
    print(f"d={args.d}, best of {args.repeat}")
    print(f"{'kernel':<14}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}  agree")
    for name, (inputs, attr) in cases.items():
        py = getattr(_kernels_py, attr)
        t_py = bench(py, inputs, args.repeat)
        if compiled is None:
            print(f"{name:<14}{t_py * 1e3:>14.3f}{'n/a':>14}{'':>10}  (extension not built)")
            continue
        cy = getattr(compiled, attr)
        t_cy = bench(cy, inputs, args.repeat)
        agree = np.allclose(np.asarray(py(*inputs)), np.asarray(cy(*inputs)))
        print(f"{name:<14}{t_py * 1e3:>14.3f}{t_cy * 1e3:>14.3f}{t_py / t_cy:>9.1f}x  {agree}")


if __name__ == "__main__":
    main()
