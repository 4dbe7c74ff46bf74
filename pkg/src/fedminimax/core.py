"""Vector helpers, splittable RNG streams and run configuration."""

from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_MASK64 = (1 << 64) - 1


class DimensionError(ValueError):
    """Raised when two vectors (or a vector and a set) disagree in size."""

    def __init__(self, what: str, dim_a: int, dim_b: int):
        super().__init__(f"{what}: dimension mismatch ({dim_a} vs {dim_b})")
        self.dim_a = dim_a
        self.dim_b = dim_b


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared; carries the round and operation where it happened."""

    def __init__(self, operation: str, round_index: int | None = None, detail: str = ""):
        where = f"round {round_index}, " if round_index is not None else ""
        msg = f"non-finite value in {where}{operation}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.operation = operation
        self.round_index = round_index


def as_vec(values, name: str = "vector") -> np.ndarray:
    """Return a read-only, finite, 1-D float64 copy of ``values``."""
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name}: empty vector")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"construction of {name}")
    arr.flags.writeable = False
    return arr


def check_finite(arr: np.ndarray, operation: str, round_index: int | None = None) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(operation, round_index)
    return arr


def check_same_dim(x: np.ndarray, y: np.ndarray, what: str = "operands") -> None:
    if x.shape != y.shape:
        raise DimensionError(what, x.size, y.size)


def vec_axpy(a: float, x, y) -> np.ndarray:
    """Return ``a * x + y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    check_same_dim(x, y, "vec_axpy")
    if not np.isfinite(a):
        raise NonFiniteError("vec_axpy", detail="non-finite scale")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a * x + y
    check_finite(out, "vec_axpy")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class RngStream:
    """Address of an independent random stream: ``(root_seed, path)``.

    The generator behind a stream is Philox (counter based) keyed by a
    128-bit BLAKE2 hash of the seed and path, so any stream can be built
    directly from its address with no shared mutable state.
    """

    root_seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def derive(self, *suffix: int) -> "RngStream":
        return RngStream(self.root_seed, self.path + tuple(int(s) for s in suffix))

    def key(self) -> int:
        words = [self.root_seed & _MASK64, len(self.path)] + [p & _MASK64 for p in self.path]
        blob = struct.pack(f"<{len(words)}Q", *words)
        return int.from_bytes(hashlib.blake2b(blob, digest_size=16).digest(), "little")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key()))

    def scratch_generator(self) -> np.random.Generator:
        """Same draws as :meth:`generator`, but reuses a per-thread Philox instance.

        Cheaper for hot loops; the returned generator is only valid until the
        next ``scratch_generator`` call on the same thread.
        """
        cache = _SCRATCH.__dict__
        if "gen" not in cache:
            bg = np.random.Philox(key=0)
            cache["bg"], cache["gen"], cache["state"] = bg, np.random.Generator(bg), bg.state
        k = self.key()
        st = cache["state"]
        st["state"]["counter"][:] = 0
        st["state"]["key"][:] = (k & _MASK64, k >> 64)
        st["buffer"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        cache["bg"].state = st
        return cache["gen"]


_SCRATCH = threading.local()


def derive_stream(root: RngStream, suffix: int) -> RngStream:
    return root.derive(suffix)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    T: int = 100
    metrics_every: int = 1
    output_dir: str = "runs"
    metrics: Sequence[str] = field(default_factory=lambda: (
        "grad_x_norm", "grad_map_y_norm", "dist_to_target", "x_minus_z_norm"))
    workers: int = 1

    def __post_init__(self):
        if int(self.T) < 1:
            raise ValueError(f"RunConfig.T must be >= 1, got {self.T}")
        if int(self.metrics_every) < 1:
            raise ValueError(f"RunConfig.metrics_every must be >= 1, got {self.metrics_every}")
        if int(self.workers) < 1:
            raise ValueError(f"RunConfig.workers must be >= 1, got {self.workers}")
        object.__setattr__(self, "metrics", tuple(self.metrics))


@dataclass(frozen=True)
class TraceRecord:
    """Diagnostics recorded after round ``t`` (``t = 0`` is the initial point)."""

    t: int
    samples_used: int
    metrics: dict
    wall_ms: float = 0.0

    def row(self, columns: Sequence[str], include_wall: bool = False) -> list:
        out = [self.t, self.samples_used]
        if include_wall:
            out.append(self.wall_ms)
        out.extend(self.metrics[c] for c in columns)
        return out
