"""Hot-loop kernels: compiled extension with a pure NumPy fallback.

The Cython extension is preferred when built; set ``HYBRIDID_PURE=1`` to
force the fallback (useful for benchmarking and debugging).
"""

import os

_force_pure = os.environ.get("HYBRIDID_PURE", "").strip().lower() in {"1", "true", "yes"}

if _force_pure:
    from ._pystep import simulate_hybrid

    USING_COMPILED = False
else:
    try:
        from ._step import simulate_hybrid  # type: ignore[attr-defined]

        USING_COMPILED = True
    except ImportError:
        from ._pystep import simulate_hybrid

        USING_COMPILED = False

__all__ = ["simulate_hybrid", "USING_COMPILED"]
