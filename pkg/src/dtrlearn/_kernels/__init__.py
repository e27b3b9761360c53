"""Kernel backend selection.

The compiled extension (``_core``) is preferred; the numpy reference
(``_ref``) is the fallback.  Either can be forced with the environment
variable ``DTRLEARN_KERNELS=compiled|python``.  Both expose the same
functions with identical semantics:

- ``build_tree(X, Y, sample_idx, max_depth, min_leaf, mtry, tree_seed)``
- ``predict_tree(tree, X)``
- ``search_depth0(scores)``, ``search_depth1(scores, X)``,
  ``search_depth2(scores, X)``
"""

from __future__ import annotations

import os

from ._ref import bootstrap_indices, feature_subset  # noqa: F401  (shared helpers)
from . import _ref

_forced = os.environ.get("DTRLEARN_KERNELS", "").strip().lower()

_impl = None
if _forced in ("", "compiled"):
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = None
        if _forced == "compiled":
            raise ImportError(
                "DTRLEARN_KERNELS=compiled but the dtrlearn._kernels._core "
                "extension is not built; run `pip install -e .`"
            )
if _impl is None:
    _impl = _ref

BACKEND = "python" if _impl is _ref else "compiled"

build_tree = _impl.build_tree
predict_tree = _impl.predict_tree
search_depth0 = _impl.search_depth0
search_depth1 = _impl.search_depth1
search_depth2 = _impl.search_depth2


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ("compiled", "python", or None)."""
    if name in (None, "", BACKEND):
        return _impl
    if name == "python":
        return _ref
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown kernel backend: {name!r}")
