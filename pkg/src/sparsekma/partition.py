from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyClusterError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of n curves to K clusters; labels are 0-based."""

    labels: np.ndarray
    K: int

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.intp).ravel()
        if self.K < 1:
            raise ValueError(f"K must be positive, got {self.K}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.K):
            raise ValueError(f"labels must lie in [0, {self.K}), got range [{labels.min()}, {labels.max()}]")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.size

    def __eq__(self, other):
        return isinstance(other, Partition) and self.K == other.K and np.array_equal(self.labels, other.labels)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    def require_nonempty(self) -> None:
        empty = np.flatnonzero(self.sizes == 0)
        if empty.size:
            raise EmptyClusterError(f"clusters {empty.tolist()} are empty")
