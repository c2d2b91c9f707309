"""Kernel dispatch: compiled Cython loops when available, Python otherwise.

Set ``STATEHAWK_PURE=1`` before import to force the Python fallback.
``BACKEND`` names the implementation in use.
"""

import os

from . import _pykernels

_names = (
    "ar_recursion",
    "hmm_forward",
    "hmm_backward",
    "viterbi",
    "gae",
    "run_lengths",
    "policy_rollout",
)

_impl = _pykernels
BACKEND = "python"
if os.environ.get("STATEHAWK_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

ar_recursion = _impl.ar_recursion
hmm_forward = _impl.hmm_forward
hmm_backward = _impl.hmm_backward
viterbi = _impl.viterbi
gae = _impl.gae
run_lengths = _impl.run_lengths
policy_rollout = _impl.policy_rollout

__all__ = ["BACKEND", *_names]
