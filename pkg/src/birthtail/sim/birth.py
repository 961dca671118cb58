"""Birth-process paths and explosion times.

Lane usage per replicate: lane 0 carries the sojourn draws (the j-th draw is
the sojourn in state x0 + j); lane 1 carries the single uniform that drives
the Gamma remainder of :func:`sample_explosion_time`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import special

from ..errors import DomainError
from ..rates import RateFunction, is_explosive, tail_sum
from .batch import run_batch
from .encode import (DEFAULT_DELTA, checkpoints, default_max_jumps, encode_rates, guard_table,
                     rate_at)
from .rng import RngStream, exponential, uniform

EXPLODED = -1
STOP_REASONS = ("reached_t", "max_jumps", "explosion_detected")
REACHED_T, MAX_JUMPS, EXPLOSION_DETECTED = 0, 1, 2


@dataclass(frozen=True)
class BirthOutcome:
    state_at_t: int  # EXPLODED (-1) when the process exploded before t
    exploded: bool
    jumps_taken: int
    stop_reason: str

    def __post_init__(self):
        if self.exploded and self.stop_reason == "reached_t":
            raise ValueError("an exploded outcome cannot have reached t")


@nb.njit(cache=True, nogil=True)
def _birth_kernel(seed, reps, params, tables, tlen, x0, t_obs, max_jumps, pts, q,
                  state, jumps, reason):
    npts = pts.shape[0]
    for r in range(reps.shape[0]):
        rep = np.uint64(reps[r])
        elapsed = 0.0
        j = 0
        ci = 0
        while True:
            while ci + 1 < npts and pts[ci + 1] <= j:
                ci += 1
            if elapsed + q[ci] < t_obs:
                state[r] = -1
                reason[r] = 2
                break
            if j >= max_jumps:
                state[r] = -1
                reason[r] = 1
                break
            tau = exponential(seed, rep, np.uint64(0), np.uint64(j),
                              rate_at(params, tables, tlen, 0, x0 + j))
            if elapsed + tau > t_obs:
                state[r] = x0 + j
                reason[r] = 0
                break
            elapsed += tau
            j += 1
        jumps[r] = j


@nb.njit(cache=True, nogil=True)
def _partial_sums_kernel(seed, reps, params, tables, tlen, x0, n_exact, out):
    for r in range(reps.shape[0]):
        rep = np.uint64(reps[r])
        acc = 0.0
        for j in range(n_exact):
            acc += exponential(seed, rep, np.uint64(0), np.uint64(j),
                               rate_at(params, tables, tlen, 0, x0 + j))
        out[r] = acc


def _birth_batch(F, x0, t_obs, max_jumps, delta):
    params, tables, tlen = encode_rates([F])
    pts = checkpoints(max_jumps)
    q = guard_table(F, x0, pts, delta)

    def run(seed, reps):
        n = len(reps)
        state = np.empty(n, dtype=np.int64)
        jumps = np.empty(n, dtype=np.int64)
        reason = np.empty(n, dtype=np.int64)
        _birth_kernel(np.uint64(seed), reps.astype(np.uint64), params, tables, tlen, int(x0),
                      float(t_obs), int(max_jumps), pts, q, state, jumps, reason)
        return {"state": state, "exploded": state < 0, "jumps": jumps, "reason": reason}

    return run


def simulate_birth_batch(F: RateFunction, x0: int, t_obs: float, replicates: int, master_seed: int,
                         max_jumps: int | None = None, workers: int = 1,
                         delta: float = DEFAULT_DELTA, first_replicate: int = 0) -> dict:
    """Columns state, exploded, jumps, reason (index into STOP_REASONS) per replicate."""
    if x0 < 1 or t_obs < 0:
        raise DomainError("need x0 >= 1 and t_obs >= 0")
    max_jumps = default_max_jumps(F) if max_jumps is None else int(max_jumps)
    if max_jumps < 1:
        raise DomainError("max_jumps must be >= 1")
    return run_batch(_birth_batch(F, x0, t_obs, max_jumps, delta), replicates, master_seed,
                     workers, first_replicate)


def simulate_birth(F: RateFunction, x0: int, t_obs: float, max_jumps: int | None = None,
                   stream: RngStream = RngStream(0), delta: float = DEFAULT_DELTA) -> BirthOutcome:
    """State of the birth process at t_obs, or EXPLODED.

    Sojourns are drawn in order.  The path is declared exploded when the
    elapsed time plus an upper delta-quantile of the remaining explosion
    time stays below t_obs (``explosion_detected``), or when ``max_jumps``
    sojourns fit before t_obs (``max_jumps``).
    """
    res = simulate_birth_batch(F, x0, t_obs, 1, stream.master_seed, max_jumps, 1, delta,
                               stream.replicate_index)
    s = int(res["state"][0])
    return BirthOutcome(s, s < 0, int(res["jumps"][0]), STOP_REASONS[int(res["reason"][0])])


def _remainder_params(F: RateFunction, x0: int, n_exact: int, eps: float):
    """Mean and variance of the sojourns after the exact ones, up to the eps cutoff."""
    last = x0 + n_exact - 1
    m1 = tail_sum(F, last, 1).value
    if m1 < eps:
        return 0.0, 0.0
    m2 = tail_sum(F, last, 2).value
    # find the cutoff K with tail_sum(F, K) < eps by doubling then bisection
    lo, hi = last, max(2 * last, 1)
    while tail_sum(F, hi, 1).value >= eps:
        lo, hi = hi, 2 * hi
        if hi > 1 << 60:
            return m1, m2  # cutoff out of reach: keep the whole remainder
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_sum(F, mid, 1).value < eps:
            hi = mid
        else:
            lo = mid
    return m1 - tail_sum(F, hi, 1).value, m2 - tail_sum(F, hi, 2).value


def sample_explosion_times(F: RateFunction, x0: int, replicates: int, master_seed: int,
                           eps: float = 1e-9, n_exact: int = 256, workers: int = 1,
                           first_replicate: int = 0) -> tuple[np.ndarray, float]:
    """Explosion times truncated where the mean of the remaining sojourns drops below eps.

    The first ``n_exact`` sojourns are drawn exactly; the sum of the rest
    up to the cutoff is a moment-matched Gamma draw.  Returns (samples,
    bias_bound) with bias_bound = eps.
    """
    if not is_explosive(F):
        raise DomainError(f"{F.spec} is not explosive")
    if not eps > 0:
        raise DomainError("eps must be positive")
    # never draw past the cutoff exactly
    n = n_exact
    while n > 1 and tail_sum(F, x0 + n - 2, 1).value < eps:
        n //= 2
    mean, var = _remainder_params(F, x0, n, eps)
    params, tables, tlen = encode_rates([F])

    def run(seed, reps):
        out = np.empty(len(reps))
        _partial_sums_kernel(np.uint64(seed), reps.astype(np.uint64), params, tables, tlen,
                             int(x0), int(n), out)
        if mean > 0:
            u = np.array([uniform(np.uint64(seed), np.uint64(r), np.uint64(1), np.uint64(0))
                          for r in reps])
            shape = mean * mean / var
            out = out + special.gammaincinv(shape, u) * (var / mean)
        return {"T": out}

    res = run_batch(run, replicates, master_seed, workers, first_replicate)
    return res["T"], eps


def sample_explosion_time(F: RateFunction, x0: int = 1, eps: float = 1e-9,
                          stream: RngStream = RngStream(0)) -> tuple[float, float]:
    T, bias = sample_explosion_times(F, x0, 1, stream.master_seed, eps,
                                     first_replicate=stream.replicate_index)
    return float(T[0]), bias
