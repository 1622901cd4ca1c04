"""Uniform ring replay buffer with named float32 storage."""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolationError


class ReplayBuffer:
    """Fixed-capacity ring of transitions; oldest entries overwrite first.

    Fields are declared as {name: width}; rows are stored float32 and sampled
    back as float64 minibatches uniformly over the filled region.
    """

    def __init__(self, capacity: int, fields: dict[str, int]):
        if capacity < 1:
            raise ContractViolationError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.fields = dict(fields)
        self._store = {name: np.zeros((self.capacity, width), dtype=np.float32)
                       for name, width in self.fields.items()}
        self.cursor = 0
        self.size = 0

    def add_batch(self, batch: dict[str, np.ndarray]) -> None:
        ref = next(iter(batch.values()))
        n = ref.shape[0]
        idx = (self.cursor + np.arange(n)) % self.capacity
        for name, store in self._store.items():
            arr = np.asarray(batch[name], dtype=np.float32)
            if arr.ndim == 1:
                arr = arr[:, None]
            store[idx] = arr
        self.cursor = int((self.cursor + n) % self.capacity)
        self.size = int(min(self.size + n, self.capacity))

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if self.size < batch_size:
            raise ContractViolationError(
                f"buffer holds {self.size} < batch size {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return {name: store[idx].astype(np.float64)
                for name, store in self._store.items()}

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < batch_size:
            raise ContractViolationError("buffer underfilled")
        return rng.integers(0, self.size, size=batch_size)
