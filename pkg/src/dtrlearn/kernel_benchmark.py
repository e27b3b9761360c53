"""Timing comparison of the compiled and pure-python kernel backends.

Runs the two hot kernels (forest tree growth and exact depth-1/2 policy
search) on synthetic data of a requested size with both backends, checks
that they return the same answers, and reports wall times.  Invoked via
``dtrlearn bench-kernels`` or ``python -m dtrlearn.kernel_benchmark``.
"""

from __future__ import annotations

import time

import numpy as np

from ._kernels import BACKEND, bootstrap_indices, get_backend
from .rng import numpy_generator


def _time(fn, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run_kernel_benchmark(n: int = 500, n_features: int = 10, seed: int = 0) -> str:
    rng = numpy_generator(seed)
    X = rng.standard_normal((n, n_features))
    y = rng.standard_normal((n, 1))
    scores = rng.integers(-50, 50, size=(n, 2)).astype(np.float64)

    backends = {"python": get_backend("python")}
    try:
        backends["compiled"] = get_backend("compiled")
    except ImportError:
        pass

    lines = [f"kernel benchmark  n={n} features={n_features}  (active backend: {BACKEND})"]
    header = f"{'kernel':<28}" + "".join(f"{name:>14}" for name in backends)
    lines.append(header)
    lines.append("-" * len(header))

    def forest_task(impl):
        def run():
            for t in range(20):
                idx = bootstrap_indices(t, n)
                impl.build_tree(X, y, idx, 8, 5, max(1, n_features // 3), t)
        return run

    rows = [
        ("grow 20 trees", forest_task),
        ("depth-1 search", lambda impl: (lambda: impl.search_depth1(scores, X))),
        ("depth-2 search", lambda impl: (lambda: impl.search_depth2(scores, X))),
    ]
    results: dict = {}
    for label, make in rows:
        cells = []
        for name, impl in backends.items():
            secs = _time(make(impl))
            cells.append(f"{secs * 1e3:>11.1f} ms")
            results.setdefault(label, {})[name] = secs
        lines.append(f"{label:<28}" + "".join(f"{c:>14}" for c in cells))

    if len(backends) == 2:
        ref = backends["python"]
        core = backends["compiled"]
        same_d1 = ref.search_depth1(scores, X) == core.search_depth1(scores, X)
        same_d2 = ref.search_depth2(scores, X) == core.search_depth2(scores, X)
        idx = bootstrap_indices(0, n)
        t_ref = ref.build_tree(X, y, idx, 8, 5, max(1, n_features // 3), 0)
        t_core = core.build_tree(X, y, idx, 8, 5, max(1, n_features // 3), 0)
        same_tree = all(np.array_equal(a, b) for a, b in zip(t_ref, t_core))
        lines.append("")
        lines.append(
            "agreement: depth-1 %s, depth-2 %s, tree build %s"
            % tuple("ok" if v else "MISMATCH" for v in (same_d1, same_d2, same_tree))
        )
    return "\n".join(lines)


if __name__ == "__main__":
    print(run_kernel_benchmark())
