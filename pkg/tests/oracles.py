"""Reference computations that share no code paths with the package.

The per-bit walker follows the channel one bit at a time with plain numpy
vectors, and the summed cycle time adds up the attempt law term by term
with scalar arithmetic instead of inverting I - S.
"""
import math

import numpy as np


def per_bit_attempts(lam, gam, p_good, p_bad, x, t_out, trials, rng):
    """Attempts per packet from a bit-by-bit walk of the two-state chain.

    Each packet starts from a stationary state. A bit in state s errs with
    probability p_s and then the chain steps. A failed attempt idles for the
    rest of the timeout, one chain step per bit-time.
    """
    pi_bad = lam / (lam + gam)
    p = np.array([p_good, p_bad])
    stay = np.array([1.0 - lam, 1.0 - gam])  # prob of keeping the current state
    state = (rng.random(trials) < pi_bad).astype(np.int64)
    attempts = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    while active.size:
        s = state[active]
        err = np.zeros(active.size, dtype=bool)
        for _ in range(x):
            err |= rng.random(s.size) < p[s]
            s = np.where(rng.random(s.size) < stay[s], s, 1 - s)
        for _ in range(t_out - x):
            # only failed packets keep walking through the timeout
            s = np.where(err & (rng.random(s.size) >= stay[s]), 1 - s, s)
        state[active] = s
        attempts[active] += 1
        active = active[err]
    return attempts


def summed_cycle_time(x, t_out, timeout_s, service_s, lam, gam, p_good, p_bad, tail=1e-12):
    """Sum over n of Pr(N = n) [(n - 1) timeout + service], stopping once the tail is tiny.

    Works with the unreduced joint laws: an attempt from state i either
    succeeds (prob a_i) or fails and hands state j to the next attempt (prob f_ij).
    Chain powers come from the two-state closed form, not from matrix squaring.
    """
    pi_g, pi_b = gam / (lam + gam), lam / (lam + gam)
    ok = ((1 - p_good) * (1 - lam), (1 - p_good) * lam,
          (1 - p_bad) * gam, (1 - p_bad) * (1 - gam))

    def mul(a, b):
        return (a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
                a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3])

    def power(m, k):
        out = (1.0, 0.0, 0.0, 1.0)
        while k:
            if k & 1:
                out = mul(out, m)
            m = mul(m, m)
            k >>= 1
        return out

    def chain_power(k):
        # P^k = Pi + d^k (I - Pi) with d = 1 - lam - gam; squaring P instead lets
        # the row sums drift by ~k eps, which E[N] then amplifies
        if lam + gam < 1:
            mix = -math.expm1(k * math.log1p(-(lam + gam)))  # 1 - d^k without cancellation
        else:
            mix = 1.0 - (1.0 - lam - gam) ** k
        return (1 - pi_b * mix, pi_b * mix, pi_g * mix, 1 - pi_g * mix)

    q = power(ok, x)
    px = chain_power(x)
    fail = mul(tuple(a - b for a, b in zip(px, q)), chain_power(t_out - x))
    succ = (q[0] + q[1], q[2] + q[3])

    v0, v1 = pi_g, pi_b
    total = 0.0
    n = 1
    while v0 + v1 > tail:
        pr = v0 * succ[0] + v1 * succ[1]
        total += pr * ((n - 1) * timeout_s + service_s)
        v0, v1 = v0 * fail[0] + v1 * fail[2], v0 * fail[1] + v1 * fail[3]
        n += 1
        if n > 10**7:
            raise RuntimeError("attempt law decays too slowly to sum")
    # remaining mass (< tail) at its leading-order contribution
    if v0 + v1 > 0:
        total += (v0 + v1) * ((n - 1) * timeout_s + service_s)
    return total


def geometric_chi_square(counts_by_n, h, total, min_expected=5.0):
    """Chi-square of attempt counts against (1 - h) h^(n-1), tail pooled."""
    stat, bins, n = 0.0, 0, 1
    obs_acc = exp_acc = 0.0
    max_n = max(counts_by_n)
    while n <= max_n:
        obs_acc += counts_by_n.get(n, 0)
        exp_acc += total * (1 - h) * h ** (n - 1)
        remaining = total * h ** n
        if exp_acc >= min_expected and remaining >= min_expected:
            stat += (obs_acc - exp_acc) ** 2 / exp_acc
            bins += 1
            obs_acc = exp_acc = 0.0
        n += 1
    obs_acc += sum(c for k, c in counts_by_n.items() if k >= n)
    exp_acc += total * h ** (n - 1)
    stat += (obs_acc - exp_acc) ** 2 / exp_acc
    bins += 1
    return stat, bins - 1


def binomial_sigma(p, n):
    return math.sqrt(p * (1 - p) / n)
