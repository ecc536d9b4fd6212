"""Euler simulation of the controlled diffusion between impulses.

Between impulses the log-value follows ``dY = b(i, Y) dt + sigma(i, Y) dW``
under the current technology ``i``.  Segments are stepped on a fixed time
grid, accumulate the discounted profit integral by the trapezoid rule, and
stop at the horizon or at the first grid time inside a stop region
(discrete monitoring).

Randomness comes from counter-based substreams: a path is fully determined
by ``(seed, stream_id)`` regardless of how many draws earlier paths consumed
or how work is scheduled across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ProblemSpec, RegimeId

_CHUNK = 1024


@dataclass(frozen=True)
class RngStream:
    """Identifies one reproducible substream of normal increments."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(
            [int(self.seed), int(self.stream_id)]))


class NormalBuffer:
    """Sequential standard-normal draws with exact give-back.

    Draws are taken from the generator in chunks and cached, so a segment
    can request a block, use only the first ``k`` values and rewind the
    rest.  The value sequence equals plain sequential ``standard_normal``
    calls on the underlying generator (numpy draws are call-partition
    invariant), which keeps common-random-number couplings exact.
    """

    def __init__(self, rng):
        if isinstance(rng, RngStream):
            rng = rng.generator()
        if isinstance(rng, NormalBuffer):
            raise TypeError("cannot nest NormalBuffer")
        self._gen = rng
        self._cache = np.empty(0)
        self._cursor = 0

    @property
    def generator(self) -> np.random.Generator:
        """Underlying generator; use for non-normal draws (consumed in order)."""
        if self._cursor != len(self._cache):
            # unseen cached normals would desynchronize mixed-draw order
            self._cache = self._cache[: self._cursor]
        return self._gen

    def take(self, n: int) -> np.ndarray:
        need = self._cursor + int(n) - len(self._cache)
        if need > 0:
            fresh = self._gen.standard_normal(max(need, _CHUNK))
            self._cache = np.concatenate([self._cache, fresh])
        out = self._cache[self._cursor: self._cursor + int(n)]
        self._cursor += int(n)
        return out

    def one(self) -> float:
        return float(self.take(1)[0])

    def rewind(self, n: int) -> None:
        if n < 0 or n > self._cursor:
            raise ValueError("cannot rewind past the stream origin")
        self._cursor -= int(n)


def as_buffer(rng) -> NormalBuffer:
    return rng if isinstance(rng, NormalBuffer) else NormalBuffer(rng)


def euler_step(i: RegimeId, x: float, dt: float, z: float,
               spec: ProblemSpec) -> float:
    """One Euler update ``x + b(i,x) dt + sigma(i,x) sqrt(dt) z``."""
    b = spec.dynamics.b(i, x)
    s = spec.dynamics.sigma(i, x)
    return x + b * dt + s * math.sqrt(dt) * z


def discount_weight(beta: float, dt: float) -> float:
    """``(1 - exp(-beta dt)) / beta``, the one-step discounted-time weight."""
    return -math.expm1(-beta * dt) / beta


@dataclass(frozen=True)
class SegmentExit:
    """Why a segment ended.

    kind:
      * ``"horizon"``: ran to its full time budget.
      * ``"region_hit"``: first grid time with the state inside the stop
        region; ``t`` is that (local) time and ``x_before`` the last value
        still outside the region.
      * ``"grid_escape"``: the path left the stop region's truncation
        domain before hitting it; the segment is truncated and flagged.
    """

    kind: str
    t: float
    x_before: float | None = None


@dataclass
class PathSegment:
    regime: RegimeId
    start_x: float
    times: np.ndarray       # local times, times[0] == 0.0
    values: np.ndarray      # values[0] == start_x
    discounted_profit: float
    exit: SegmentExit
    global_t0: float = 0.0  # episode time at the segment start

    @property
    def end_x(self) -> float:
        return float(self.values[-1])

    @property
    def end_t(self) -> float:
        return float(self.times[-1])


def _step_times(horizon: float, dt: float) -> np.ndarray:
    """0, dt, 2dt, ..., horizon; the last step may be shorter."""
    n_full = int(math.floor(horizon / dt + 1e-12))
    times = dt * np.arange(n_full + 1)
    if horizon - times[-1] > 1e-12 * max(1.0, horizon):
        times = np.append(times, horizon)
    return times


def simulate_segment(i: RegimeId, x: float, *, horizon: float, dt: float,
                     rng, spec: ProblemSpec, region=None,
                     global_t0: float = 0.0) -> PathSegment:
    """Step the diffusion from ``x`` until region hit or local horizon.

    ``region`` (optional) must provide ``contains_many(i, xs)`` plus
    ``x_lo``/``x_hi`` truncation bounds; membership is checked at grid
    times starting from the first step.  ``global_t0`` anchors the
    discount factor of the profit integral, which covers exactly the
    simulated span.  Draws consumed equal steps executed, so couplings
    across strategies stay aligned.
    """
    if horizon <= 0.0:
        times = np.zeros(1)
        values = np.full(1, float(x))
        return PathSegment(i, float(x), times, values, 0.0,
                           SegmentExit("horizon", 0.0), global_t0)
    buf = as_buffer(rng)
    times = _step_times(horizon, dt)
    n_steps = len(times) - 1
    z = buf.take(n_steps)
    dts = np.diff(times)

    b0, b1 = spec.dynamics.drift[i]
    s0, s1 = spec.dynamics.volatility[i]
    if b1 == 0.0 and s1 == 0.0:
        incr = b0 * dts + s0 * np.sqrt(dts) * z
        values = float(x) + np.concatenate([[0.0], np.cumsum(incr)])
    else:
        values = np.empty(n_steps + 1)
        values[0] = float(x)
        sqdt = np.sqrt(dts)
        for k in range(n_steps):
            y = values[k]
            values[k + 1] = y + (b0 + b1 * y) * dts[k] \
                + (s0 + s1 * y) * sqdt[k] * z[k]

    exit_ = SegmentExit("horizon", float(times[-1]))
    if region is not None and n_steps > 0:
        tail = values[1:]
        hit = region.contains_many(i, tail)
        escaped = (tail < region.x_lo) | (tail > region.x_hi)
        event = hit | escaped
        idx = int(np.argmax(event)) if event.any() else -1
        if idx >= 0:
            stop = idx + 1          # index into times/values
            buf.rewind(n_steps - stop)
            times = times[: stop + 1]
            values = values[: stop + 1]
            kind = "region_hit" if hit[idx] else "grid_escape"
            exit_ = SegmentExit(kind, float(times[-1]),
                                x_before=float(values[-2]))

    disc = np.exp(-spec.beta * (global_t0 + times))
    fvals = spec.profit(i, values)
    profit = float(np.trapezoid(disc * fvals, times))
    return PathSegment(i, float(x), times, values, profit, exit_, global_t0)
