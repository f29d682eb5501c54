"""Seeded random streams, time grids and Brownian increments.

Every random draw in the package goes through :func:`make_stream`.  A stream
is keyed on ``(master_seed, (tag, trajectory, role))`` and backed by the
counter-based Philox generator, so two distinct keys never share state and
the same key always replays the same numbers.

Monte Carlo work is split into fixed-size trajectory blocks.  The block
layout depends only on ``n_reps``, never on the worker count, which is what
makes results independent of ``--threads``.
"""

from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from uitlab.errors import InvalidArgument, NumericalBlowup

#: trajectories simulated together in one vectorised block
BLOCK_SIZE = 1000

THREADS_ENV = "UITLAB_THREADS"


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidArgument(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidArgument(f"n_steps must be a positive integer, got {self.n_steps}")

    def time(self, k):
        # multiplication, not accumulation
        return self.t0 + k * self.dt

    @property
    def times(self):
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    @property
    def horizon(self):
        return self.time(self.n_steps)

    @classmethod
    def covering(cls, horizon, max_dt, t0=0.0):
        """Finest grid on ``[t0, t0 + horizon]`` with step at most ``max_dt``."""
        n = max(1, math.ceil(horizon / max_dt - 1e-9))
        return cls(t0, horizon / n, n)


def _tag_key(tag):
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    return zlib.crc32(str(tag).encode("utf-8"))


@dataclass(eq=False)
class RngStream:
    """Deterministic Gaussian source for one ``(seed, stream_id)`` key."""

    master_seed: int
    stream_id: tuple
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.reset()

    def reset(self):
        key = [int(self.master_seed) & 0xFFFFFFFFFFFFFFFF]
        key += [_tag_key(part) for part in self.stream_id]
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)


def make_stream(master_seed, stream_id):
    if isinstance(stream_id, (str, int)):
        stream_id = (stream_id,)
    return RngStream(int(master_seed), tuple(stream_id))


@dataclass(frozen=True)
class IncrementArray:
    grid: TimeGrid
    dim: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.n_steps, self.dim):
            raise InvalidArgument(
                f"values shape {self.values.shape} does not match "
                f"({self.grid.n_steps}, {self.dim})"
            )


def gaussian_increments(stream, grid, dim):
    """Brownian increments on ``grid``: rows are i.i.d. N(0, dt I_dim)."""
    if dim < 1:
        raise InvalidArgument("dim must be >= 1")
    z = stream.standard_normal((grid.n_steps, dim))
    return IncrementArray(grid, dim, z * math.sqrt(grid.dt))


def coarsen_increments(fine, factor):
    """Sum consecutive blocks of ``factor`` increments (same Brownian path, coarser grid)."""
    factor = int(factor)
    if factor < 1:
        raise InvalidArgument("factor must be >= 1")
    n = fine.grid.n_steps
    if n % factor:
        raise InvalidArgument(f"{n} fine steps are not divisible by factor {factor}")
    grid = TimeGrid(fine.grid.t0, fine.grid.dt * factor, n // factor)
    values = fine.values.reshape(n // factor, factor, fine.dim).sum(axis=1)
    return IncrementArray(grid, fine.dim, values)


def coarsen_along(values, factor, axis=0):
    """Array-level counterpart of :func:`coarsen_increments` for batched paths."""
    values = np.asarray(values)
    n = values.shape[axis]
    if n % factor:
        raise InvalidArgument(f"{n} fine steps are not divisible by factor {factor}")
    shape = values.shape[:axis] + (n // factor, factor) + values.shape[axis + 1 :]
    return values.reshape(shape).sum(axis=axis + 1)


def output_indices(n_steps, max_points=200):
    """Step indices (always including 0 and ``n_steps``) at which curves are recorded."""
    n_points = min(max_points, n_steps + 1)
    idx = np.round(np.linspace(0, n_steps, n_points)).astype(np.int64)
    return np.unique(idx)


def resolve_threads(threads=None):
    if threads is None:
        threads = os.environ.get(THREADS_ENV, 1)
    try:
        threads = int(threads)
    except (TypeError, ValueError):
        raise InvalidArgument(f"thread count must be an integer, got {threads!r}") from None
    if threads < 1:
        raise InvalidArgument("thread count must be >= 1")
    return threads


def block_layout(n_reps, block_size=BLOCK_SIZE):
    """``[(block_index, first_replica, size), ...]`` covering ``range(n_reps)``."""
    return [
        (b, start, min(block_size, n_reps - start))
        for b, start in enumerate(range(0, n_reps, block_size))
    ]


def run_blocks(simulate_block, n_reps, threads=None, block_size=BLOCK_SIZE):
    """Run ``simulate_block(block_index, first_replica, size)`` over all blocks.

    Results are concatenated along axis 0 in block order, so the output does
    not depend on how many workers ran the blocks.
    """
    layout = block_layout(n_reps, block_size)
    threads = resolve_threads(threads)
    if threads == 1 or len(layout) == 1:
        parts = [simulate_block(*item) for item in layout]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda item: simulate_block(*item), layout))
    return np.concatenate(parts, axis=0)


def check_finite(arr, step, what="state", first_replica=0):
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(np.atleast_1d(arr)))[0][0]
        raise NumericalBlowup(
            f"non-finite {what} at step {step}", step=step, trajectory=first_replica + int(bad)
        )
