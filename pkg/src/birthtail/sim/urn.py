"""Urn samplers: the exponential embedding, discrete stepping, and the Dirichlet limit.

Lane usage per replicate:

* embedding: agent ``i`` on attempt ``r`` uses lane ``i + r * LANES_PER_ATTEMPT``;
  draw j is the sojourn of that agent in state x0_i + j;
* discrete urn: lane 0, draw j selects the winner of step j + 1;
* Dirichlet shares: lane 0, draw i is the exponential of agent i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

from ..asymptotics import UrnSystem
from ..errors import DegenerateTieError, DomainError, UndecidableError
from ..io import fmt
from ..rates import is_explosive
from .batch import run_batch
from .encode import (DEFAULT_DELTA, checkpoints, default_max_jumps, encode_rates, guard_table,
                     lower_guard_table, rate_at)
from .rng import RngStream, exponential, uniform

LANES_PER_ATTEMPT = 65536
MAX_ATTEMPTS = 16
TIE_TOL = 1e-15

# status codes of the embedding kernel
OK, TIE, GAVE_UP = 0, 1, 2


@dataclass(frozen=True)
class UrnOutcome:
    winner: int  # 0-based agent index
    loser_counts: dict  # agent index -> X_i(inf), losers only
    n_mon: int
    bias_bound: float
    seed_used: RngStream
    attempts: int = 1
    censored: bool = False

    def __post_init__(self):
        if self.winner in self.loser_counts:
            raise ValueError("the winner has no finite final count")


@nb.njit(cache=True)
def _q_at(q, pts, a, j):
    # upper guard of the latest checkpoint <= j (binary search)
    lo, hi = 0, pts.shape[0] - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if pts[mid] <= j:
            lo = mid
        else:
            hi = mid - 1
    return q[a, lo]


@nb.njit(cache=True)
def _lq_at(lq, pts, a, j):
    # lower guard of the first checkpoint >= j
    lo, hi = 0, pts.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if pts[mid] >= j:
            hi = mid
        else:
            lo = mid + 1
    return lq[a, lo]


@nb.njit(cache=True)
def _step(seed, rep, lane, params, tables, tlen, x0, a, j):
    return exponential(seed, rep, np.uint64(lane), np.uint64(j),
                       rate_at(params, tables, tlen, a, x0[a] + j))


@nb.njit(cache=True, nogil=True)
def _embed_one(seed, rep, attempt, params, tables, tlen, x0, caps, pts, q, lq, out_x):
    """One embedding attempt.  Returns (status, winner, n_mon, bias, censored).

    Agent a's explosion time lies in [W_a + lq, W_a + q] except with
    probability 2 delta, where W_a is the sum of its drawn sojourns.
    """
    A = x0.shape[0]
    base = attempt * 65536
    W = np.zeros(A)
    J = np.zeros(A, dtype=np.int64)
    # 1. winner: the agent whose explosion interval lies left of every other interval
    while True:
        best = -1
        ub = np.inf
        for a in range(A):
            u = W[a] + _q_at(q, pts, a, J[a])
            if u < ub:
                ub = u
                best = a
        if best < 0:
            return GAVE_UP, -1, 0, 0.0, False
        moved = False
        overlap = False
        for b in range(A):
            if b != best and W[b] + _lq_at(lq, pts, b, J[b]) <= ub:
                overlap = True
                if J[b] < caps[b]:
                    W[b] += _step(seed, rep, base + b, params, tables, tlen, x0, b, J[b])
                    J[b] += 1
                    moved = True
        if not overlap:
            break
        if J[best] < caps[best]:
            W[best] += _step(seed, rep, base + best, params, tables, tlen, x0, best, J[best])
            J[best] += 1
            moved = True
        if not moved:
            for b in range(A):
                if b != best and abs(W[b] - W[best]) <= TIE_TOL * max(W[b], W[best]):
                    return TIE, best, 0, 0.0, False
            return GAVE_UP, -1, 0, 0.0, False
    w = best
    Ww = W[w]
    Jw = J[w]
    qw = _q_at(q, pts, w, Jw)
    lw = _lq_at(lq, pts, w, Jw)
    # 2. losers: count jumps strictly before the winner's explosion time
    censored = False
    s_star = -1.0
    total = 0
    for i in range(A):
        if i == w:
            out_x[i] = -1
            continue
        t = 0.0
        m = 0
        while True:
            if m >= caps[i]:
                censored = True
                break
            nxt = t + _step(seed, rep, base + i, params, tables, tlen, x0, i, m)
            before = False
            while True:
                if nxt < Ww + lw:
                    before = True
                    break
                if nxt > Ww + qw:
                    break
                if Jw >= caps[w]:
                    # undecidable within the cap: use the point estimate
                    before = nxt < Ww + 0.5 * (lw + qw)
                    break
                Ww += _step(seed, rep, base + w, params, tables, tlen, x0, w, Jw)
                Jw += 1
                qw = _q_at(q, pts, w, Jw)
                lw = _lq_at(lq, pts, w, Jw)
            if not before:
                break
            t = nxt
            m += 1
        out_x[i] = x0[i] + m
        total += m
        if m > 0 and t > s_star:
            s_star = t
    # 3. monopoly time: winner jumps before the last loser jump, plus all loser wins, plus one
    n_mon = 1
    if s_star >= 0.0:
        c = 0
        tw = 0.0
        while c < caps[w]:
            tw += _step(seed, rep, base + w, params, tables, tlen, x0, w, c)
            if tw >= s_star:
                break
            c += 1
        if c >= caps[w]:
            censored = True
        n_mon = c + total + 1
    return OK, w, n_mon, qw, censored


@nb.njit(cache=True, nogil=True)
def _embed_kernel(seed, reps, params, tables, tlen, x0, caps, pts, q, lq, max_attempts,
                  winner, n_mon, x_inf, bias, attempts, censored, status):
    A = x0.shape[0]
    row = np.empty(A, dtype=np.int64)
    for r in range(reps.shape[0]):
        rep = np.uint64(reps[r])
        st = GAVE_UP
        for att in range(max_attempts):
            st, w, nm, bb, cens = _embed_one(seed, rep, att, params, tables, tlen, x0, caps,
                                             pts, q, lq, row)
            attempts[r] = att + 1
            if st != GAVE_UP:
                break
        status[r] = st
        if st == OK:
            winner[r] = w
            n_mon[r] = nm
            bias[r] = bb
            censored[r] = cens
            for a in range(A):
                x_inf[r, a] = row[a]
        else:
            winner[r] = -1
            n_mon[r] = 0
            bias[r] = np.inf
            censored[r] = True
            for a in range(A):
                x_inf[r, a] = -1


def _embed_setup(system: UrnSystem, delta: float, max_jumps):
    agents = system.expanded()
    A = len(agents)
    if A > LANES_PER_ATTEMPT:
        raise DomainError(f"the embedding supports at most {LANES_PER_ATTEMPT} agents")
    if not any(is_explosive(F) for F, _ in agents):
        raise DomainError("the embedding needs at least one explosive agent")
    params, tables, tlen = encode_rates([F for F, _ in agents])
    x0 = np.array([x for _, x in agents], dtype=np.int64)
    caps = np.array([default_max_jumps(F) if max_jumps is None else int(max_jumps)
                     for F, _ in agents], dtype=np.int64)
    pts = checkpoints(int(caps.max()))
    cache = {}
    q = np.empty((A, len(pts)))
    lq = np.empty((A, len(pts)))
    for a, (F, x) in enumerate(agents):
        if (F, x) not in cache:
            cache[(F, x)] = (guard_table(F, x, pts, delta), lower_guard_table(F, x, pts, delta))
        q[a], lq[a] = cache[(F, x)]
    return params, tables, tlen, x0, caps, pts, q, lq


def simulate_urn_embedded_batch(system: UrnSystem, replicates: int, master_seed: int,
                                eps: float = DEFAULT_DELTA, workers: int = 1,
                                max_jumps: int | None = None, first_replicate: int = 0) -> dict:
    """Columns winner, n_mon, x_inf[r, A] (-1 for the winner), bias_bound, attempts, censored.

    ``eps`` is the probability allowed for a guard interval to miss the
    true explosion time; bias_bound is the width of the winner's final
    interval, an upper bound on how far its explosion time is from the
    drawn partial sum.
    """
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    params, tables, tlen, x0, caps, pts, q, lq = _embed_setup(system, eps, max_jumps)
    A = len(x0)

    def run(seed, reps):
        n = len(reps)
        cols = dict(winner=np.empty(n, np.int64), n_mon=np.empty(n, np.int64),
                    x_inf=np.empty((n, A), np.int64), bias_bound=np.empty(n),
                    attempts=np.empty(n, np.int64), censored=np.empty(n, np.bool_),
                    status=np.empty(n, np.int64))
        _embed_kernel(np.uint64(seed), reps.astype(np.uint64), params, tables, tlen, x0, caps,
                      pts, q, lq, MAX_ATTEMPTS, cols["winner"], cols["n_mon"], cols["x_inf"],
                      cols["bias_bound"], cols["attempts"], cols["censored"], cols["status"])
        return cols

    res = run_batch(run, replicates, master_seed, workers, first_replicate)
    bad = np.flatnonzero(res["status"] == TIE)
    if len(bad):
        raise DegenerateTieError(f"explosion times tie numerically in replicate {res['replicate'][bad[0]]}")
    bad = np.flatnonzero(res["status"] == GAVE_UP)
    if len(bad):
        raise UndecidableError(f"no winner separated within {MAX_ATTEMPTS} attempts in replicate "
                               f"{res['replicate'][bad[0]]}; raise max_jumps")
    del res["status"]
    return res


def simulate_urn_embedded(system: UrnSystem, eps: float = DEFAULT_DELTA,
                          stream: RngStream = RngStream(0), max_jumps: int | None = None) -> UrnOutcome:
    """Final loser counts and monopoly time of one urn realisation via its birth-process embedding.

    Each agent runs its own birth process.  The agent exploding first is
    the monopolist; a loser's final count is its state at that time.
    """
    res = simulate_urn_embedded_batch(system, 1, stream.master_seed, eps, 1, max_jumps,
                                      stream.replicate_index)
    w = int(res["winner"][0])
    row = res["x_inf"][0]
    losers = {i: int(v) for i, v in enumerate(row) if i != w}
    return UrnOutcome(w, losers, int(res["n_mon"][0]), float(res["bias_bound"][0]), stream,
                      int(res["attempts"][0]), bool(res["censored"][0]))


def urn_csv(res: dict) -> str:
    """CSV rows ``replicate,winner,n_mon,x_inf_1..x_inf_A,bias_bound``; agents are 1-based, the
    winner's count is ``inf``."""
    A = res["x_inf"].shape[1]
    lines = [",".join(["replicate", "winner", "n_mon"] + [f"x_inf_{i + 1}" for i in range(A)]
                      + ["bias_bound"])]
    for r in range(len(res["winner"])):
        xs = ["inf" if v < 0 else str(int(v)) for v in res["x_inf"][r]]
        lines.append(",".join([str(int(res["replicate"][r])), str(int(res["winner"][r]) + 1),
                               str(int(res["n_mon"][r]))] + xs + [fmt(float(res["bias_bound"][r]))]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- discrete urn

@nb.njit(cache=True)
def _fenwick_build(w, tree):
    n = w.shape[0]
    for i in range(n):
        tree[i + 1] = w[i]
    for i in range(1, n + 1):
        p = i + (i & -i)
        if p <= n:
            tree[p] += tree[i]


@nb.njit(cache=True)
def _fenwick_add(tree, i, d):
    n = tree.shape[0] - 1
    i += 1
    while i <= n:
        tree[i] += d
        i += i & -i


@nb.njit(cache=True)
def _fenwick_find(tree, target):
    # smallest index whose prefix sum exceeds target
    n = tree.shape[0] - 1
    pos = 0
    step = 1
    while step * 2 <= n:
        step *= 2
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] <= target:
            pos = nxt
            target -= tree[nxt]
        step //= 2
    return min(pos, n - 1)


LINEAR_SCAN_MAX = 32
RESCALE_AT = 1e250


@nb.njit(cache=True, nogil=True)
def _discrete_one(seed, rep, params, tables, tlen, x, max_steps, threshold, rec_steps, rec):
    """Run one urn in place on counts x.  Returns (steps, stopped_on_share, n_recorded)."""
    A = x.shape[0]
    w = np.empty(A)
    logscale = 0.0
    for a in range(A):
        w[a] = rate_at(params, tables, tlen, a, x[a])
    use_tree = A > LINEAR_SCAN_MAX
    tree = np.zeros(A + 1)
    total_count = 0
    for a in range(A):
        total_count += x[a]
    maxc = 0
    for a in range(A):
        maxc = max(maxc, x[a])
    rebuild_every = max(A, 1024)
    if use_tree:
        _fenwick_build(w, tree)
    nrec = 0
    n = 0
    scale = 1.0
    while n < max_steps:
        if threshold < 1.0 and maxc > threshold * total_count:
            return n, True, nrec
        u = uniform(seed, rep, np.uint64(0), np.uint64(n))
        if use_tree:
            tot = 0.0
            i = A
            while i > 0:
                tot += tree[i]
                i -= i & -i
            k = _fenwick_find(tree, u * tot)
            while w[k] <= 0.0 and k < A - 1:
                k += 1
        else:
            tot = 0.0
            for a in range(A):
                tot += w[a]
            target = u * tot
            k = A - 1
            acc = 0.0
            for a in range(A):
                acc += w[a]
                if target < acc:
                    k = a
                    break
        x[k] += 1
        total_count += 1
        if x[k] > maxc:
            maxc = x[k]
        nw = rate_at(params, tables, tlen, k, x[k]) * scale
        if use_tree:
            _fenwick_add(tree, k, nw - w[k])
        w[k] = nw
        n += 1
        if nw > RESCALE_AT or (use_tree and n % rebuild_every == 0):
            if nw > RESCALE_AT:
                scale /= RESCALE_AT
                for a in range(A):
                    w[a] = rate_at(params, tables, tlen, a, x[a]) * scale
            if use_tree:
                _fenwick_build(w, tree)
        if nrec < rec_steps.shape[0] and rec_steps[nrec] == n:
            for a in range(A):
                rec[nrec, a] = x[a] / total_count
            nrec += 1
    if threshold < 1.0 and maxc > threshold * total_count:
        return n, True, nrec
    return n, False, nrec


@nb.njit(cache=True, nogil=True)
def _discrete_kernel(seed, reps, params, tables, tlen, x0, max_steps, threshold, counts, steps,
                     on_share, rec_steps, rec):
    for r in range(reps.shape[0]):
        x = x0.copy()
        n, hit, _ = _discrete_one(seed, np.uint64(reps[r]), params, tables, tlen, x, max_steps,
                                  threshold, rec_steps, rec)
        for a in range(x.shape[0]):
            counts[r, a] = x[a]
        steps[r] = n
        on_share[r] = hit


@nb.njit(cache=True, nogil=True)
def _winners_kernel(seed, reps, params, tables, tlen, x0, n_steps, out):
    rec_steps = np.zeros(0, dtype=np.int64)
    rec = np.zeros((0, x0.shape[0]))
    for r in range(reps.shape[0]):
        x = x0.copy()
        _discrete_one(seed, np.uint64(reps[r]), params, tables, tlen, x, n_steps, 2.0,
                      rec_steps, rec)
        c = 0
        for a in range(x.shape[0]):
            if x[a] > x0[a]:
                c += 1
        out[r] = c


def _discrete_setup(system: UrnSystem):
    agents = system.expanded()
    params, tables, tlen = encode_rates([F for F, _ in agents])
    x0 = np.array([x for _, x in agents], dtype=np.int64)
    return params, tables, tlen, x0


def _check_stop(max_steps, share_threshold):
    if max_steps is None:
        raise DomainError("max_steps is required (it caps share_threshold runs too)")
    if max_steps < 0:
        raise DomainError("max_steps must be >= 0")
    if share_threshold is not None and not 0 < share_threshold < 1:
        raise DomainError("share_threshold must lie in (0, 1)")
    return 2.0 if share_threshold is None else float(share_threshold)


@dataclass(frozen=True)
class DiscreteUrnRun:
    final_counts: np.ndarray
    steps: int
    stop_reason: str  # "max_steps" or "share_threshold"
    trajectory_steps: np.ndarray = field(repr=False)
    trajectory_shares: np.ndarray = field(repr=False)  # [len(trajectory_steps), A]


def simulate_urn_discrete(system: UrnSystem, max_steps: int | None = None,
                          share_threshold: float | None = None,
                          stream: RngStream = RngStream(0)) -> DiscreteUrnRun:
    """Step the urn: each step is won by agent i with probability F_i(X_i) / sum_j F_j(X_j).

    Stops after ``max_steps`` steps or once some agent's share exceeds
    ``share_threshold``.  Shares are recorded at steps 1, 2, 4, 8, ...
    """
    threshold = _check_stop(max_steps, share_threshold)
    params, tables, tlen, x0 = _discrete_setup(system)
    rec_steps = [1]
    while rec_steps[-1] * 2 <= max(max_steps, 1):
        rec_steps.append(rec_steps[-1] * 2)
    rec_steps = np.asarray(rec_steps if max_steps > 0 else [], dtype=np.int64)
    rec = np.zeros((len(rec_steps), len(x0)))
    x = x0.copy()
    n, hit, nrec = _discrete_one(np.uint64(stream.master_seed), np.uint64(stream.replicate_index),
                                 params, tables, tlen, x, int(max_steps), threshold, rec_steps, rec)
    return DiscreteUrnRun(x, int(n), "share_threshold" if hit else "max_steps",
                          rec_steps[:nrec], rec[:nrec])


def simulate_urn_discrete_batch(system: UrnSystem, replicates: int, master_seed: int,
                                max_steps: int, share_threshold: float | None = None,
                                workers: int = 1, first_replicate: int = 0) -> dict:
    """Columns counts[r, A], steps, on_share (stopped by the share threshold)."""
    threshold = _check_stop(max_steps, share_threshold)
    params, tables, tlen, x0 = _discrete_setup(system)
    empty_steps = np.zeros(0, dtype=np.int64)

    def run(seed, reps):
        n = len(reps)
        counts = np.empty((n, len(x0)), np.int64)
        steps = np.empty(n, np.int64)
        on_share = np.empty(n, np.bool_)
        _discrete_kernel(np.uint64(seed), reps.astype(np.uint64), params, tables, tlen, x0,
                         int(max_steps), threshold, counts, steps, on_share, empty_steps,
                         np.zeros((0, len(x0))))
        return {"counts": counts, "steps": steps, "on_share": on_share}

    return run_batch(run, replicates, master_seed, workers, first_replicate)


def winners_count(system: UrnSystem, n_steps: int, replicates: int, master_seed: int,
                  workers: int = 1) -> np.ndarray:
    """Per replicate, the number of agents that won at least one of ``n_steps`` discrete steps."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    params, tables, tlen, x0 = _discrete_setup(system)

    def run(seed, reps):
        out = np.empty(len(reps), np.int64)
        _winners_kernel(np.uint64(seed), reps.astype(np.uint64), params, tables, tlen, x0,
                        int(n_steps), out)
        return {"winners": out}

    return run_batch(run, replicates, master_seed, workers)["winners"]


# ---------------------------------------------------------------- Dirichlet limit

@nb.njit(cache=True, nogil=True)
def _dirichlet_kernel(seed, reps, out):
    A = out.shape[1]
    for r in range(reps.shape[0]):
        rep = np.uint64(reps[r])
        s = 0.0
        for i in range(A):
            e = exponential(seed, rep, np.uint64(0), np.uint64(i), 1.0)
            out[r, i] = e
            s += e
        for i in range(A):
            out[r, i] /= s


def dirichlet_shares_batch(A: int, replicates: int, master_seed: int, workers: int = 1) -> np.ndarray:
    """[replicates, A] uniform draws from the simplex (normalised unit exponentials)."""
    if A < 2:
        raise DomainError("A must be >= 2")

    def run(seed, reps):
        out = np.empty((len(reps), A))
        _dirichlet_kernel(np.uint64(seed), reps.astype(np.uint64), out)
        return {"shares": out}

    return run_batch(run, replicates, master_seed, workers)["shares"]


def dirichlet_shares(A: int, stream: RngStream = RngStream(0)) -> np.ndarray:
    if A < 2:
        raise DomainError("A must be >= 2")
    out = np.empty((1, A))
    _dirichlet_kernel(np.uint64(stream.master_seed),
                      np.array([stream.replicate_index], dtype=np.uint64), out)
    return out[0]
