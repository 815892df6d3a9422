"""GRU sequence kernels: compiled extension when built, numpy fallback otherwise.

Both backends share one contract (gru_forward / gru_backward with identical
gate packing); benchmarks/bench_gru.py compares them.
"""

try:
    from . import _gru_cy as _impl
    BACKEND = "cython"
except ImportError:  # extension not built; pure-Python install
    from . import gru_py as _impl
    BACKEND = "python"

gru_forward = _impl.gru_forward
gru_backward = _impl.gru_backward

__all__ = ["gru_forward", "gru_backward", "BACKEND"]
