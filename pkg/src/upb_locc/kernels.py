"""Kernel selection: the compiled extension when importable, else numpy/scipy.

Set ``UPB_LOCC_PURE=1`` to force the fallback (used by the benchmark and the
kernel parity tests). ``gram`` stays on scipy's sparse product even when the
extension is present: benchmarks/bench_kernels.py shows it ahead of the
compiled loop on the state sets this package builds.
"""

import os

from . import _kernels_py

BACKEND = "python"
pattern_mask = _kernels_py.pattern_mask
gram = _kernels_py.gram

if os.environ.get("UPB_LOCC_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        pattern_mask = _compiled.pattern_mask
