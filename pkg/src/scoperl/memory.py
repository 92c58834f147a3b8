"""Named-tensor ring buffer used both as replay memory and rollout storage.

Storage geometry is ``[capacity, num_envs, feature]``.  A full batch of
``num_envs`` rows fills one memory row; narrower batches (an agent that owns
only a slice of a shared memory's environments) fill the current row from
left to right and the row advances once it is complete.  Transitions are
therefore laid out in insertion order when the storage is viewed flat.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .autograd.serialization import load_tensors, save_tensors

DTYPE_TAGS = ("float", "int", "bool")


class MemoryAccessError(RuntimeError):
    """Raised on invalid memory operations (empty sampling, bad registration, ...)."""


class Memory:
    def __init__(self, capacity: int, num_envs: int = 1, seed: int | None = None):
        if capacity < 1 or num_envs < 1:
            raise ValueError("capacity and num_envs must be >= 1")
        self.capacity = int(capacity)
        self.num_envs = int(num_envs)
        self.tensors: dict[str, np.ndarray] = {}
        self.dtype_tags: dict[str, str] = {}
        self.cursor = 0
        self.env_cursor = 0
        self.filled = False
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.stored_count

    @property
    def stored_count(self) -> int:
        if self.filled:
            return self.capacity * self.num_envs
        return self.cursor * self.num_envs + self.env_cursor

    def create_tensor(self, name: str, feature_dim: int, dtype_tag: str = "float", *, exist_ok: bool = False) -> None:
        """Register zero-initialised storage for ``name``.

        With ``exist_ok`` a repeated registration with identical geometry is
        accepted (agents sharing a memory); a conflicting one always errors.
        """
        if feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if dtype_tag not in DTYPE_TAGS:
            raise ValueError(f"dtype_tag must be one of {DTYPE_TAGS}")
        if name in self.tensors:
            same = self.tensors[name].shape[-1] == feature_dim and self.dtype_tags[name] == dtype_tag
            if exist_ok and same:
                return
            raise MemoryAccessError(f"tensor {name!r} already registered"
                                    + ("" if same else f" with dim {self.tensors[name].shape[-1]}"))
        self.tensors[name] = np.zeros((self.capacity, self.num_envs, int(feature_dim)))
        self.dtype_tags[name] = dtype_tag

    def _flat(self, name: str) -> np.ndarray:
        return self.tensors[name].reshape(self.capacity * self.num_envs, -1)

    def add_samples(self, batch: Mapping[str, np.ndarray]) -> None:
        """Write one batch of transitions (leading dim <= num_envs) at the cursor."""
        if not self.tensors:
            raise MemoryAccessError("no tensors registered")
        missing = set(self.tensors) - set(batch)
        if missing:
            raise MemoryAccessError(f"batch is missing tensor(s) {sorted(missing)}")
        rows = None
        prepared = {}
        for name, storage in self.tensors.items():
            value = np.asarray(batch[name], dtype=np.float64)
            dim = storage.shape[-1]
            if value.ndim == 1:
                value = value.reshape(-1, 1) if dim == 1 else value.reshape(1, -1)
            if value.ndim != 2 or value.shape[1] != dim:
                raise ValueError(f"{name}: expected shape (n, {dim}), got {np.shape(batch[name])}")
            if rows is None:
                rows = value.shape[0]
            elif value.shape[0] != rows:
                raise ValueError(f"{name}: batch sizes differ ({value.shape[0]} vs {rows})")
            prepared[name] = value
        if rows == 0:
            return
        if self.num_envs == 1 and rows > 1:
            for i in range(rows):
                self._write({k: v[i:i + 1] for k, v in prepared.items()}, 1)
            return
        if self.env_cursor + rows > self.num_envs:
            raise ValueError(f"batch of {rows} does not fit in the remaining "
                             f"{self.num_envs - self.env_cursor} env slots of the current row")
        self._write(prepared, rows)

    def _write(self, prepared: dict[str, np.ndarray], rows: int) -> None:
        start = self.env_cursor
        for name, value in prepared.items():
            if self.dtype_tags[name] == "bool":
                value = (value != 0).astype(np.float64)
            self.tensors[name][self.cursor, start:start + rows] = value
        self.env_cursor += rows
        if self.env_cursor >= self.num_envs:
            self.env_cursor = 0
            self.cursor += 1
            if self.cursor >= self.capacity:
                self.cursor = 0
                self.filled = True

    def _check_names(self, names: Iterable[str]) -> list[str]:
        names = list(names)
        for name in names:
            if name not in self.tensors:
                raise MemoryAccessError(f"unknown tensor {name!r}")
        return names

    def sample(self, names: Sequence[str], batch_size: int) -> dict[str, np.ndarray]:
        """Uniformly draw ``batch_size`` stored transitions with replacement."""
        names = self._check_names(names)
        count = self.stored_count
        if count < 1:
            raise MemoryAccessError("cannot sample from an empty memory")
        idx = self.rng.integers(0, count, size=batch_size)
        return {name: self._flat(name)[idx] for name in names}

    def sample_indices(self, names: Sequence[str], indices: np.ndarray) -> dict[str, np.ndarray]:
        names = self._check_names(names)
        return {name: self._flat(name)[indices] for name in names}

    def sample_all(self, names: Sequence[str], num_minibatches: int = 1) -> list[dict[str, np.ndarray]]:
        """Shuffle every stored transition and split into ``num_minibatches`` chunks."""
        names = self._check_names(names)
        count = self.stored_count
        if count < 1:
            raise MemoryAccessError("cannot sample from an empty memory")
        perm = self.rng.permutation(count)
        return [{name: self._flat(name)[chunk] for name in names}
                for chunk in np.array_split(perm, num_minibatches) if chunk.size]

    def get_tensor(self, name: str) -> np.ndarray:
        """Direct view of the ``[capacity, num_envs, dim]`` storage for ``name``."""
        return self.tensors[self._check_names([name])[0]]

    def reset(self) -> None:
        self.cursor = 0
        self.env_cursor = 0
        self.filled = False

    def stored(self) -> dict[str, np.ndarray]:
        """All stored transitions in storage order, as ``name -> [count, dim]``."""
        count = self.stored_count
        return {name: self._flat(name)[:count].copy() for name in self.tensors}

    def export(self, path, format_tag: str | None = None) -> None:
        """Write stored transitions to ``path`` as ``csv`` or binary ``sktn``."""
        if self.stored_count == 0:
            raise MemoryAccessError("cannot export an empty memory")
        path = Path(path)
        format_tag = format_tag or ("csv" if path.suffix == ".csv" else "sktn")
        data = self.stored()
        if format_tag == "csv":
            header = [f"{name}[{i}]" for name, arr in data.items() for i in range(arr.shape[1])]
            table = np.concatenate(list(data.values()), axis=1)
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                writer.writerows([[repr(float(v)) for v in row] for row in table])
        elif format_tag == "sktn":
            save_tensors(path, data)
        else:
            raise ValueError(f"unknown export format {format_tag!r}")


def load_memory_file(path) -> dict[str, np.ndarray]:
    """Read an exported memory file back into ``name -> [count, dim]`` arrays."""
    path = Path(path)
    if path.suffix == ".csv":
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader]
        table = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
        columns: dict[str, list[int]] = {}
        for j, col in enumerate(header):
            name = col[:col.rindex("[")]
            columns.setdefault(name, []).append(j)
        return {name: table[:, cols] for name, cols in columns.items()}
    return load_tensors(path)


def memory_from_arrays(arrays: Mapping[str, np.ndarray], capacity: int | None = None, seed=None) -> Memory:
    count = len(next(iter(arrays.values())))
    mem = Memory(capacity or count, 1, seed=seed)
    for name, arr in arrays.items():
        mem.create_tensor(name, arr.shape[1])
    mem.add_samples(arrays)
    return mem
