"""Random, uniform and greedy keyframe selectors."""

from __future__ import annotations

import numpy as np

from .errors import InvalidW
from .keyframes import KeyframeSet
from .metrics import q_baseline, q_error
from .spherical import SphericalSequence


def _check_w(n: int, w: int) -> None:
    if not 2 <= w <= n:
        raise InvalidW(f"keyframe count must be in [2, {n}], got {w}")


def select_random(n: int, w: int, seed: int) -> KeyframeSet:
    """Endpoints plus w-2 interior frames drawn uniformly without
    replacement; a pure function of (n, w, seed)."""
    _check_w(n, w)
    rng = np.random.default_rng(seed)
    interior = rng.choice(np.arange(1, n - 1), size=w - 2, replace=False)
    return KeyframeSet.from_indices([0, n - 1, *interior.tolist()], n)


def select_uniform(n: int, w: int) -> KeyframeSet:
    """Frames round((n-1) * i / (w-1)) for i = 0..w-1.

    Rounding is half-to-even; collisions (possible only in contrived
    cases) shift to the nearest unused higher index.
    """
    _check_w(n, w)
    used = set()
    out = []
    for i in range(w):
        idx = int(np.rint((n - 1) * i / (w - 1)))
        while idx in used:
            idx += 1
        if idx > n - 1:
            raise InvalidW(f"cannot place {w} distinct frames in [0, {n - 1}]")
        used.add(idx)
        out.append(idx)
    return KeyframeSet(tuple(out), n)


def select_greedy(sph: SphericalSequence, w: int) -> KeyframeSet:
    """Grow from the endpoints, always adding the frame that minimizes the
    reconstruction error; ties break toward the smallest frame index."""
    n = sph.frame_count
    _check_w(n, w)
    q_baseline(sph)   # degenerate windows have no meaningful argmin
    keys = KeyframeSet.endpoints(n)
    for _ in range(w - 2):
        best_frame, best_q = None, np.inf
        for frame in keys.complement():
            q = q_error(sph, keys.add(int(frame)))
            if q < best_q:
                best_frame, best_q = int(frame), q
        keys = keys.add(best_frame)
    return keys
