"""Monte Carlo stop-and-wait simulator over a per-bit Gilbert channel.

This module never touches the closed forms in :mod:`swgoodput.analysis`; it is
the independent oracle those formulas are checked against.

Two engines produce the same process:

``bitwise``
    Walks every attempt through the channel. Inside a packet the chain is
    advanced one sojourn at a time (geometric run lengths, per-bit error
    probability within each run), which is exact but much faster than drawing
    every bit. Idle gaps use the two-state closed form of ``P^k``.
``attempt``
    For packets that need thousands of attempts. The joint law of
    (attempt outcome, next start state) is built once per packet size by
    propagating probabilities bit by bit, then consecutive failures from the
    same start state are collapsed into one geometric draw.

``auto`` picks ``attempt`` only when some packet size needs more than
``ATTEMPT_ENGINE_THRESHOLD`` attempts on average.
"""
from __future__ import annotations

import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numba
import numpy as np

from .channel import GOOD, GilbertParams, stationary
from .errors import RetryCap, TimeoutTooShort
from .segmentation import DiscreteMessageDist, SegmentationConfig

RETRY_CAP = 10_000_000
ATTEMPT_ENGINE_THRESHOLD = 64.0

_OK, _CAPPED = 0, 1


class StateMode(str, Enum):
    STATIONARY_PER_PACKET = "stationary"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class SimConfig:
    packets_per_rep: int = 100_000
    replications: int = 10
    seed: int = 1
    state_mode: StateMode = StateMode.STATIONARY_PER_PACKET
    engine: str = "auto"
    workers: int = 1

    def __post_init__(self):
        if self.packets_per_rep < 1:
            raise ValueError("packets_per_rep must be >= 1")
        if self.replications < 2:
            raise ValueError("replications must be >= 2 to estimate a standard error")
        if self.engine not in ("auto", "bitwise", "attempt"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "state_mode", StateMode(self.state_mode))


@dataclass(frozen=True)
class SimReport:
    goodput_est: float
    goodput_stderr: float
    mean_cycle_est: float
    packets_observed: int
    rep_goodputs: tuple[float, ...]
    engine: str
    # per packet size (bits incl. header): attempts of every delivered packet
    attempts_by_size: dict[int, np.ndarray] = field(repr=False, compare=False)

    @cached_property
    def attempts_hist(self) -> dict[int, float]:
        """Empirical Pr(N = n) pooled over all packet sizes."""
        pooled = np.concatenate(list(self.attempts_by_size.values()))
        values, counts = np.unique(pooled, return_counts=True)
        total = counts.sum()
        return {int(v): c / total for v, c in zip(values, counts)}


# -- numba kernels -----------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _skip(rng, s, k, lam, gam, pi_g):
    """Sample the state k steps after ``s`` using P^k = Pi + d^k (I - Pi)."""
    if k == 0:
        return s
    a = lam + gam
    if a == 0.0:
        return s
    d = 1.0 - a
    dk = abs(d) ** k
    if d < 0.0 and k % 2 == 1:
        dk = -dk
    if s == 0:
        to_good = pi_g + (1.0 - pi_g) * dk
    else:
        to_good = pi_g * (1.0 - dk)
    return 0 if rng.random() < to_good else 1


@numba.njit(cache=True, nogil=True)
def _run_length(rng, q):
    """Bits spent in the current state before leaving it (>= 1; inf if q == 0)."""
    if q <= 0.0:
        return math.inf
    if q >= 1.0:
        return 1.0
    u = 1.0 - rng.random()
    return 1.0 + math.floor(math.log(u) / math.log1p(-q))


@numba.njit(cache=True, nogil=True)
def _send_bitwise(rng, s, x, lam, gam, pg, pb):
    """One attempt of ``x`` bits from state ``s``.

    Returns (errored, state, bits_left): on error the walk stops early and
    ``bits_left`` is the part of the packet not yet walked.
    """
    r = x
    while r > 0:
        if s == 0:
            q, p = lam, pg
        else:
            q, p = gam, pb
        k = _run_length(rng, q)
        m = r if k > r else int(k)
        err = False
        if p >= 1.0:
            err = True
        elif p > 0.0:
            err = rng.random() < -math.expm1(m * math.log1p(-p))
        if k <= r:
            s = 1 - s
        r -= m
        if err:
            return True, s, r
    return False, s, 0


@numba.njit(cache=True, nogil=True)
def _attempt_kernel(x, t_out, lam, gam, pg, pb):
    """Per start state: success joint with end-of-packet state, and failure
    joint with the state at the next attempt start."""
    succ = np.zeros((2, 2))
    fail = np.zeros((2, 2))
    for s0 in range(2):
        ok0, ok1 = (1.0, 0.0) if s0 == 0 else (0.0, 1.0)
        bad0, bad1 = 0.0, 0.0
        for _ in range(x):
            b0 = bad0 + ok0 * pg
            b1 = bad1 + ok1 * pb
            g0 = ok0 * (1.0 - pg)
            g1 = ok1 * (1.0 - pb)
            ok0 = g0 * (1.0 - lam) + g1 * gam
            ok1 = g0 * lam + g1 * (1.0 - gam)
            bad0 = b0 * (1.0 - lam) + b1 * gam
            bad1 = b0 * lam + b1 * (1.0 - gam)
        succ[s0, 0], succ[s0, 1] = ok0, ok1
        for _ in range(t_out - x):
            b0 = bad0 * (1.0 - lam) + bad1 * gam
            bad1 = bad0 * lam + bad1 * (1.0 - gam)
            bad0 = b0
        fail[s0, 0], fail[s0, 1] = bad0, bad1
    return succ, fail


@numba.njit(cache=True, nogil=True)
def _deliver_attempts(rng, s, c, succ, fail, cap):
    """Attempt-engine delivery of one packet of class ``c`` from start state ``s``."""
    n = 0
    while True:
        f = fail[c, s, s]
        s0 = succ[c, s, 0]
        s1 = succ[c, s, 1]
        other = s0 + s1 + fail[c, s, 1 - s]
        if other <= 0.0:
            return -1, s
        if f > 0.0:
            ratio = f / (f + other)
            if ratio >= 1.0:
                return -1, s
            u = 1.0 - rng.random()
            j = math.floor(math.log(u) / math.log(ratio))
            if n + j >= cap:
                return -1, s
            n += int(j)
        n += 1
        if n > cap:
            return -1, s
        u = rng.random() * other
        if u < s0:
            return n, 0
        if u < s0 + s1:
            return n, 1
        s = 1 - s


@numba.njit(cache=True, nogil=True)
def _replicate(rng, msg_cdf, msg_count, msg_class, class_size, header, t_out, ack_bits,
               lam, gam, pg, pb, pi_g, continuous, gap_bits, target, use_attempt,
               succ, fail, cap):
    max_count = 0
    for k in msg_count:
        if k > max_count:
            max_count = k
    attempts = np.empty(target + max_count, dtype=np.int64)
    classes = np.empty(target + max_count, dtype=np.int64)
    info_bits = 0
    total_bits = 0
    done = 0
    n_atoms = msg_cdf.shape[0]
    s = 0 if rng.random() < pi_g else 1
    while done < target:
        i = 0
        if n_atoms > 1:
            i = np.searchsorted(msg_cdf, rng.random(), side="right")
            if i >= n_atoms:
                i = n_atoms - 1
        for j in range(msg_count[i]):
            c = 0 if j < msg_count[i] - 1 else msg_class[i]
            x = class_size[c]
            if not continuous:
                s = 0 if rng.random() < pi_g else 1
            if use_attempt:
                n, s = _deliver_attempts(rng, s, c, succ, fail, cap)
                if n < 0:
                    return attempts[:done], classes[:done], info_bits, total_bits, _CAPPED
            else:
                n = 0
                while True:
                    n += 1
                    if n > cap:
                        return attempts[:done], classes[:done], info_bits, total_bits, _CAPPED
                    errored, s, left = _send_bitwise(rng, s, x, lam, gam, pg, pb)
                    if not errored:
                        break
                    s = _skip(rng, s, left + t_out - x, lam, gam, pi_g)
            if continuous:
                s = _skip(rng, s, gap_bits, lam, gam, pi_g)
            attempts[done] = n
            classes[done] = c
            info_bits += x - header
            total_bits += (n - 1) * t_out + x + ack_bits
            done += 1
    return attempts[:done], classes[:done], info_bits, total_bits, _OK


@numba.njit(cache=True, nogil=True)
def _free_run_errors(rng, n_bits, s, lam, gam, pg, pb):
    errors = 0
    r = n_bits
    while r > 0:
        if s == 0:
            q, p = lam, pg
        else:
            q, p = gam, pb
        k = _run_length(rng, q)
        m = r if k > r else int(k)
        if p > 0.0:
            errors += rng.binomial(m, p)
        if k <= r:
            s = 1 - s
        r -= m
    return errors


# -- public API ---------------------------------------------------------------

def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=stream)))


def skip_ahead_state(state: int, k: int, params: GilbertParams, rng: np.random.Generator) -> int:
    """Draw the link state ``k`` bits after ``state``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    pi_g = _pi_good(params)
    return int(_skip(rng, int(state), int(k), params.lam, params.gamma, pi_g))


def simulate_packet(x: int, timing, params: GilbertParams, rng: np.random.Generator,
                    state: int, cap: int = RETRY_CAP) -> tuple[int, float, int]:
    """Deliver one packet of ``x`` bits starting in ``state``.

    Returns ``(attempts, elapsed_seconds, state_after_packet)``.
    """
    t_out = timing.timeout_bits
    if x > t_out:
        raise TimeoutTooShort(f"packet of {x} bits exceeds the timeout of {t_out} bit-times")
    pi_g = _pi_good(params)
    lam, gam, pg, pb = params.lam, params.gamma, params.p_good, params.p_bad
    s = int(state)
    n = 0
    while True:
        n += 1
        if n > cap:
            raise RetryCap(f"packet of {x} bits not delivered after {cap} attempts")
        errored, s, left = _send_bitwise(rng, s, int(x), lam, gam, pg, pb)
        if not errored:
            break
        s = int(_skip(rng, s, int(left + t_out - x), lam, gam, pi_g))
    elapsed = (n - 1) * timing.timeout + timing.service_time(x)
    return n, elapsed, int(s)


def attempt_kernel(x: int, t_out_bits: int, params: GilbertParams) -> tuple[np.ndarray, np.ndarray]:
    """Bit-by-bit propagated (success, failure) joint laws for one attempt."""
    if x > t_out_bits:
        raise TimeoutTooShort(f"packet of {x} bits exceeds the timeout of {t_out_bits} bit-times")
    return _attempt_kernel(int(x), int(t_out_bits), params.lam, params.gamma,
                           params.p_good, params.p_bad)


def empirical_ber(n_bits: int, params: GilbertParams, seed: int = 0,
                  batches: int = 20) -> tuple[float, float]:
    """Bit-error rate of the free-running chain: (mean, stderr over batches)."""
    pi_g = _pi_good(params)
    per_batch = n_bits // batches
    rates = []
    for b in range(batches):
        rng = make_rng(seed, b)
        s = GOOD if rng.random() < pi_g else 1
        errs = _free_run_errors(rng, per_batch, s, params.lam, params.gamma,
                                params.p_good, params.p_bad)
        rates.append(errs / per_batch)
    return statistics.fmean(rates), statistics.stdev(rates) / math.sqrt(batches)


def _pi_good(params: GilbertParams) -> float:
    return stationary(params).pi_good


@dataclass(frozen=True)
class _Plan:
    msg_cdf: np.ndarray
    msg_count: np.ndarray
    msg_class: np.ndarray
    class_size: np.ndarray
    succ: np.ndarray
    fail: np.ndarray
    use_attempt: bool


def _plan(sim: SimConfig, dist: DiscreteMessageDist, cfg: SegmentationConfig,
          t_out: int, params: GilbertParams) -> _Plan:
    d, h = cfg.payload, cfg.header
    counts = [-(-size // d) for size in dist.sizes]
    # class 0 is the full-size body packet, class i + 1 the edge packet of atom i
    class_size = [d + h] + [size - (k - 1) * d + h for size, k in zip(dist.sizes, counts)]
    too_big = max(class_size)
    if too_big > t_out:
        raise TimeoutTooShort(f"packet of {too_big} bits exceeds the timeout of {t_out} bit-times")

    n_classes = len(class_size)
    succ = np.zeros((n_classes, 2, 2))
    fail = np.zeros((n_classes, 2, 2))
    engine = sim.engine
    if engine != "bitwise":
        pi = stationary(params).as_array()
        worst = 0.0
        for c, x in enumerate(class_size):
            succ[c], fail[c] = attempt_kernel(x, t_out, params)
            p_success = float(pi @ succ[c].sum(axis=1))
            worst = max(worst, math.inf if p_success <= 0.0 else 1.0 / p_success)
        if engine == "auto":
            engine = "attempt" if worst > ATTEMPT_ENGINE_THRESHOLD else "bitwise"

    weights = np.array(dist.weights)
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return _Plan(
        msg_cdf=cdf,
        msg_count=np.array(counts, dtype=np.int64),
        msg_class=np.arange(1, len(counts) + 1, dtype=np.int64),
        class_size=np.array(class_size, dtype=np.int64),
        succ=succ,
        fail=fail,
        use_attempt=engine == "attempt",
    )


def run(sim: SimConfig, dist: DiscreteMessageDist, cfg: SegmentationConfig, timing,
        params: GilbertParams, stream: int = 0) -> SimReport:
    """Estimate long-run goodput by independent replications.

    Each replication delivers whole messages until at least
    ``sim.packets_per_rep`` packets are through. Replication ``r`` draws from
    its own stream seeded by ``(sim.seed, stream, r)``, so results do not
    depend on ``sim.workers``.
    """
    if cfg.header != timing.header:
        raise ValueError(f"header mismatch: segmentation has {cfg.header}, timing has {timing.header}")
    t_out = timing.timeout_bits
    plan = _plan(sim, dist, cfg, t_out, params)
    pi_g = _pi_good(params)
    continuous = sim.state_mode is StateMode.CONTINUOUS
    gap_bits = int(timing.ack_size + round(timing.propagation * timing.capacity))

    def one(rep: int):
        rng = make_rng(sim.seed, stream, rep)
        return _replicate(
            rng, plan.msg_cdf, plan.msg_count, plan.msg_class, plan.class_size,
            cfg.header, t_out, timing.ack_size, params.lam, params.gamma,
            params.p_good, params.p_bad, pi_g, continuous, gap_bits,
            sim.packets_per_rep, plan.use_attempt, plan.succ, plan.fail, RETRY_CAP,
        )

    if sim.workers > 1:
        with ThreadPoolExecutor(max_workers=sim.workers) as pool:
            results = list(pool.map(one, range(sim.replications)))
    else:
        results = [one(rep) for rep in range(sim.replications)]

    rep_goodputs, elapsed_total, packets = [], 0.0, 0
    by_class: list[list[np.ndarray]] = [[] for _ in plan.class_size]
    for attempts, classes, info_bits, total_bits, status in results:
        if status == _CAPPED:
            raise RetryCap(f"a packet was not delivered after {RETRY_CAP} attempts")
        elapsed = total_bits / timing.capacity + len(attempts) * timing.propagation
        rep_goodputs.append(info_bits / elapsed)
        elapsed_total += elapsed
        packets += len(attempts)
        for c in range(len(plan.class_size)):
            by_class[c].append(attempts[classes == c])

    attempts_by_size: dict[int, np.ndarray] = {}
    for c, size in enumerate(plan.class_size.tolist()):
        arr = np.concatenate(by_class[c])
        if arr.size:
            prev = attempts_by_size.get(size)
            attempts_by_size[size] = arr if prev is None else np.concatenate([prev, arr])

    # statistics works in exact rationals, so identical replications give stderr 0 exactly
    return SimReport(
        goodput_est=statistics.fmean(rep_goodputs),
        goodput_stderr=statistics.stdev(rep_goodputs) / math.sqrt(len(rep_goodputs)),
        mean_cycle_est=elapsed_total / packets,
        packets_observed=packets,
        rep_goodputs=tuple(rep_goodputs),
        engine="attempt" if plan.use_attempt else "bitwise",
        attempts_by_size=attempts_by_size,
    )
