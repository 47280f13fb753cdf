from __future__ import annotations

import numpy as np


class Archive:
    """Growable set of evaluated ``(point, value)`` pairs, in insertion order."""

    def __init__(self, dim: int, points=None, values=None):
        self.dim = dim
        self._x = np.empty((0, dim))
        self._y = np.empty(0)
        if points is not None:
            self.extend(points, values)

    def __len__(self) -> int:
        return self._y.size

    @property
    def points(self) -> np.ndarray:
        return self._x

    @property
    def values(self) -> np.ndarray:
        return self._y

    def add(self, x, fx: float) -> None:
        self._x = np.vstack([self._x, np.asarray(x, dtype=float).reshape(1, self.dim)])
        self._y = np.append(self._y, float(fx))

    def extend(self, xs, ys) -> None:
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        ys = np.asarray(ys, dtype=float).ravel()
        if xs.shape[0] != ys.size:
            raise ValueError("points and values differ in length")
        self._x = np.vstack([self._x, xs])
        self._y = np.concatenate([self._y, ys])

    def best(self) -> tuple[np.ndarray, float]:
        if not len(self):
            raise ValueError("empty archive")
        k = int(np.argmin(self._y))
        return self._x[k].copy(), float(self._y[k])

    def copy(self) -> "Archive":
        return Archive(self.dim, self._x.copy(), self._y.copy())
