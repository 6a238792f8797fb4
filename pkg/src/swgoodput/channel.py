"""Two-state (Gilbert) bit-error channel.

The link state advances once per bit. A bit sent in state G is corrupted with
probability ``p_good``, in state B with probability ``p_bad``; the state then
moves G->B with probability ``lam`` and B->G with probability ``gamma``.

Matrices are plain ``(2, 2)`` float arrays with row/column order (G, B).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChain, InvalidRate

GOOD, BAD = 0, 1


def _check_prob(name: str, value: float) -> float:
    value = float(value)
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise InvalidRate(f"{name} must be a probability in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class GilbertParams:
    lam: float
    gamma: float
    p_good: float
    p_bad: float

    def __post_init__(self):
        for name in ("lam", "gamma", "p_good", "p_bad"):
            object.__setattr__(self, name, _check_prob(name, getattr(self, name)))

    @classmethod
    def iid(cls, p_e: float) -> "GilbertParams":
        """Independent bit errors at rate ``p_e`` (lam + gamma = 1)."""
        p_e = _check_prob("p_e", p_e)
        return cls(lam=p_e, gamma=1.0 - p_e, p_good=0.0, p_bad=1.0)

    @property
    def is_iid(self) -> bool:
        """True in the cases where bit errors are independent across bits."""
        return self.lam == 0.0 or self.gamma == 0.0 or abs(self.lam + self.gamma - 1.0) < 1e-15

    @property
    def burst_len(self) -> float:
        """Mean sojourn in B, in bits."""
        return math.inf if self.gamma == 0.0 else 1.0 / self.gamma


@dataclass(frozen=True)
class StateDist:
    pi_good: float
    pi_bad: float

    def as_array(self) -> np.ndarray:
        return np.array([self.pi_good, self.pi_bad])


def transition_matrix(params: GilbertParams) -> np.ndarray:
    lam, gam = params.lam, params.gamma
    return np.array([[1.0 - lam, lam], [gam, 1.0 - gam]])


def success_matrix(params: GilbertParams) -> np.ndarray:
    """Q: one bit sent without error, joint with the next link state."""
    ok = np.array([[1.0 - params.p_good], [1.0 - params.p_bad]])
    return ok * transition_matrix(params)


def stationary(params: GilbertParams) -> StateDist:
    total = params.lam + params.gamma
    if total == 0.0:
        raise DegenerateChain("lambda + gamma = 0: every state is absorbing")
    return StateDist(pi_good=params.gamma / total, pi_bad=params.lam / total)


def mean_ber(params: GilbertParams) -> float:
    pi = stationary(params)
    p_e = pi.pi_good * params.p_good + pi.pi_bad * params.p_bad
    if p_e >= 1.0:
        raise InvalidRate("mean bit-error rate is 1; no packet can ever succeed")
    return p_e


def matrix_power(m: np.ndarray, k: int) -> np.ndarray:
    """k-fold product of a 2x2 matrix (binary exponentiation)."""
    if int(k) != k or k < 0:
        raise ValueError(f"exponent must be a nonnegative integer, got {k!r}")
    return np.linalg.matrix_power(np.asarray(m, dtype=float), int(k))


def failure_matrix(params: GilbertParams, x: int) -> np.ndarray:
    """P_f(x): at least one of ``x`` bits errored, joint with the final state.

    Equal to ``P_c^x - Q^x`` but accumulated by doubling from nonnegative
    terms, so it stays accurate when failures are rare.
    """
    if int(x) != x or x < 0:
        raise ValueError(f"packet length must be a nonnegative integer, got {x!r}")
    p_step = transition_matrix(params)
    q_step = success_matrix(params)
    f_step = p_step - q_step
    p_acc, q_acc, f_acc = np.eye(2), np.eye(2), np.zeros((2, 2))
    x = int(x)
    while x:
        if x & 1:
            # fail over (acc, then step): fail in acc then anything, or succeed then fail
            f_acc = f_acc @ p_step + q_acc @ f_step
            p_acc = p_acc @ p_step
            q_acc = q_acc @ q_step
        x >>= 1
        if x:
            f_step = f_step @ p_step + q_step @ f_step
            p_step = p_step @ p_step
            q_step = q_step @ q_step
    return f_acc


def from_mean_ber_and_burst(p_e: float, burst_len: float) -> GilbertParams:
    """Channel with p_good=0, p_bad=1, mean BER ``p_e`` and mean burst ``burst_len`` bits."""
    p_e = float(p_e)
    burst_len = float(burst_len)
    if not 0.0 < p_e < 1.0:
        raise InvalidRate(f"mean bit-error rate must lie in (0, 1), got {p_e!r}")
    if math.isnan(burst_len) or burst_len < 1.0:
        raise InvalidRate(f"burst length must be >= 1 bit, got {burst_len!r}")
    gamma = 1.0 / burst_len
    lam = gamma * p_e / (1.0 - p_e)
    if lam > 1.0:
        if lam - 1.0 > 1e-12:
            raise InvalidRate(
                f"p_e={p_e} with burst length {burst_len} needs lambda={lam:.6g} > 1"
            )
        lam = 1.0
    return GilbertParams(lam=lam, gamma=gamma, p_good=0.0, p_bad=1.0)
