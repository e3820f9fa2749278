"""Kernel dispatch: the compiled extension when it was built, else numpy.

Set ``KBQA_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
semantic_scores = _kernels_py.semantic_scores

if not os.environ.get("KBQA_PURE_PYTHON"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        semantic_scores = _kernels.semantic_scores
        BACKEND = "cython"
