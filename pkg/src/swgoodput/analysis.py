"""Closed-form stop-and-wait goodput over a Gilbert channel.

A packet of ``x`` bits is retransmitted every ``t_out`` bit-times until one copy
arrives error free. The first copy sees a stationary link state; later copies
see the chain evolved by ``t_out`` bits since the previous start, which makes
the attempt count a phase-type variable driven by the 2x2 retry kernel ``S``.
Goodput follows from renewal-reward: mean information bits per packet over
mean time per delivered packet.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .channel import (
    GilbertParams,
    failure_matrix,
    matrix_power,
    stationary,
    success_matrix,
    transition_matrix,
)
from .errors import EmptyRange, NoConvergence, TimeoutTooShort
from .segmentation import (
    DiscreteMessageDist,
    PacketMix,
    SegmentationConfig,
    packet_mix,
)

DET_FLOOR = 1e-300


@dataclass(frozen=True)
class TimingConfig:
    """Link timing. Sizes are bits, times are seconds, capacity is bit/s."""

    capacity: float
    timeout: float
    propagation: float = 0.0
    ack_size: int = 0
    header: int = 0

    def __post_init__(self):
        if not self.capacity > 0.0 or math.isinf(self.capacity):
            raise ValueError(f"capacity must be positive, got {self.capacity!r}")
        if not self.timeout > 0.0:
            raise ValueError(f"timeout must be positive, got {self.timeout!r}")
        if not self.propagation >= 0.0:
            raise ValueError(f"propagation delay must be >= 0, got {self.propagation!r}")
        if int(self.ack_size) != self.ack_size or self.ack_size < 0:
            raise ValueError(f"ack_size must be a nonnegative integer, got {self.ack_size!r}")
        if int(self.header) != self.header or self.header < 0:
            raise ValueError(f"header must be a nonnegative integer, got {self.header!r}")
        object.__setattr__(self, "ack_size", int(self.ack_size))
        object.__setattr__(self, "header", int(self.header))
        exact = self.timeout * self.capacity
        bits = round(exact)
        if bits < 1 or abs(bits - exact) > 1e-6 * exact:
            raise ValueError(
                f"timeout * capacity = {exact!r} is not a whole number of bit-times"
            )
        object.__setattr__(self, "_timeout_bits", int(bits))

    @property
    def timeout_bits(self) -> int:
        return self._timeout_bits

    def service_time(self, x: int) -> float:
        """Duration of the successful attempt: packet + ACK + fixed delay."""
        return (x + self.ack_size) / self.capacity + self.propagation


@dataclass(frozen=True)
class AtomDetail:
    size: int
    weight: float
    expected_attempts: float
    expected_time: float


@dataclass(frozen=True)
class GoodputReport:
    goodput: float
    mean_cycle_time: float
    mean_reward: float
    atoms: tuple[AtomDetail, ...]


def _check_size(x: int, t_out_bits: int) -> int:
    if int(x) != x or x < 1:
        raise ValueError(f"packet size must be a positive integer number of bits, got {x!r}")
    if x > t_out_bits:
        raise TimeoutTooShort(f"packet of {x} bits exceeds the timeout of {t_out_bits} bit-times")
    return int(x)


def retry_kernel(x: int, t_out_bits: int, params: GilbertParams) -> np.ndarray:
    """S(x, t_out): attempt fails, joint with the state at the next attempt start."""
    x = _check_size(x, t_out_bits)
    return failure_matrix(params, x) @ matrix_power(transition_matrix(params), t_out_bits - x)


def _success_vector(x: int, params: GilbertParams) -> np.ndarray:
    return matrix_power(success_matrix(params), x).sum(axis=1)


def attempts_pmf(n: int, x: int, t_out_bits: int, params: GilbertParams) -> float:
    """Pr(N = n | packet size x)."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    s = retry_kernel(x, t_out_bits, params)
    pi = stationary(params).as_array()
    return float(pi @ matrix_power(s, int(n) - 1) @ _success_vector(int(x), params))


def attempts_survival(n: int, x: int, t_out_bits: int, params: GilbertParams) -> float:
    """Pr(N > n | packet size x) = pi S^n e."""
    if int(n) != n or n < 0:
        raise ValueError(f"n must be a nonnegative integer, got {n!r}")
    s = retry_kernel(x, t_out_bits, params)
    pi = stationary(params).as_array()
    return float((pi @ matrix_power(s, int(n))).sum())


def _h(x: int, p_e: float) -> float:
    return -math.expm1(x * math.log1p(-p_e))


def attempts_pmf_iid(n: int, x: int, p_e: float) -> float:
    """Geometric attempt law for independent bit errors."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not 0.0 <= p_e < 1.0:
        raise ValueError(f"p_e must lie in [0, 1), got {p_e!r}")
    h = _h(x, p_e)
    return (1.0 - h) * h ** (int(n) - 1)


@lru_cache(maxsize=4096)
def _expected_attempts(x: int, t_out_bits: int, params: GilbertParams) -> float:
    s = retry_kernel(x, t_out_bits, params)
    u = _success_vector(x, params)
    pi = stationary(params)
    # I - S written with nonnegative pieces only: diag = off-diagonal fail + success
    s12, s21 = s[0, 1], s[1, 0]
    u1, u2 = u
    det = s12 * u2 + u1 * s21 + u1 * u2
    if det < DET_FLOOR:
        raise NoConvergence(
            f"packet of {x} bits never succeeds (det(I - S) = {det:.3g}); mean attempts unbounded"
        )
    row_g = s21 + s12 + u2
    row_b = s21 + s12 + u1
    return float((pi.pi_good * row_g + pi.pi_bad * row_b) / det)


def expected_attempts(x: int, t_out_bits: int, params: GilbertParams) -> float:
    """E[N | x] = pi (I - S)^-1 e."""
    return _expected_attempts(_check_size(x, t_out_bits), int(t_out_bits), params)


def expected_time_given_size(x: int, timing: TimingConfig, params: GilbertParams) -> float:
    retries = expected_attempts(x, timing.timeout_bits, params) - 1.0
    return timing.timeout * max(retries, 0.0) + timing.service_time(x)


def goodput(mix: PacketMix, timing: TimingConfig, params: GilbertParams) -> GoodputReport:
    if mix.header != timing.header:
        raise ValueError(f"header mismatch: mix has {mix.header}, timing has {timing.header}")
    details = []
    for size, weight in mix.atoms:
        n = expected_attempts(size, timing.timeout_bits, params)
        t = expected_time_given_size(size, timing, params)
        details.append(AtomDetail(size, weight, n, t))
    mean_time = math.fsum(d.weight * d.expected_time for d in details)
    reward = mix.mean - mix.header
    return GoodputReport(
        goodput=reward / mean_time,
        mean_cycle_time=mean_time,
        mean_reward=reward,
        atoms=tuple(details),
    )


def goodput_const_approx(payload: int, header: int, timing: TimingConfig,
                         params: GilbertParams) -> float:
    """Goodput if every packet were full size (payload + header)."""
    return payload / expected_time_given_size(payload + header, timing, params)


def payload_grid(payload_range: tuple[int, int], step: int) -> list[int]:
    lo, hi = payload_range
    if step < 1 or lo > hi:
        raise EmptyRange(f"no payloads in [{lo}, {hi}] with step {step}")
    if lo < 1:
        raise ValueError(f"payloads must be >= 1 bit, got lower bound {lo}")
    return list(range(int(lo), int(hi) + 1, int(step)))


def goodput_curve(dist: DiscreteMessageDist, header: int, timing: TimingConfig,
                  params: GilbertParams, payloads: Iterable[int]) -> list[float]:
    return [
        goodput(packet_mix(dist, SegmentationConfig(d, header)), timing, params).goodput
        for d in payloads
    ]


def argmax_first(values: Sequence[float]) -> int:
    """Index of the maximum; ties go to the earliest index."""
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def optimal_payload(dist: DiscreteMessageDist, header: int, timing: TimingConfig,
                    params: GilbertParams, payload_range: tuple[int, int],
                    step: int = 1) -> tuple[int, float]:
    """Exhaustive grid search for the goodput-maximizing payload (bits)."""
    grid = payload_grid(payload_range, step)
    if grid[-1] + header > timing.timeout_bits:
        raise TimeoutTooShort(
            f"payload {grid[-1]} + header {header} exceeds the timeout of {timing.timeout_bits} bit-times"
        )
    values = goodput_curve(dist, header, timing, params, grid)
    best = argmax_first(values)
    return grid[best], values[best]
