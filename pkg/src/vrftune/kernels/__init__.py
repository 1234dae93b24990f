"""Hot sequence kernels with a numba backend and a pure-numpy fallback.

Backend selection is driven by the VRFTUNE_BACKEND environment variable,
read once at import time:

  - unset or "auto": use the numba backend when numba imports, else numpy
  - "numba":         require the accelerated backend (raise if unavailable)
  - "numpy":         force the pure-numpy fallback

Both backends implement the same math; `benchmarks/bench_backends.py`
compares their throughput.
"""

import os

from . import reference

_choice = os.environ.get("VRFTUNE_BACKEND", "auto").strip().lower() or "auto"
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"VRFTUNE_BACKEND={_choice!r} not understood; use 'auto', 'numba' or 'numpy'"
    )

if _choice == "numpy":
    accelerated = None
else:
    try:
        from . import accelerated
    except ImportError:
        if _choice == "numba":
            raise
        accelerated = None

_active = accelerated if accelerated is not None else reference

BACKEND = _active.BACKEND

esn_teacher_features = _active.esn_teacher_features
esn_run = _active.esn_run
lstm_run = _active.lstm_run
lstm_simplified_run = _active.lstm_simplified_run
lstm_simplified_loss_grads = _active.lstm_simplified_loss_grads
plant_run = _active.plant_run
integrator_replay = _active.integrator_replay

__all__ = [
    "BACKEND",
    "accelerated",
    "reference",
    "esn_teacher_features",
    "esn_run",
    "lstm_run",
    "lstm_simplified_run",
    "lstm_simplified_loss_grads",
    "plant_run",
    "integrator_replay",
]
