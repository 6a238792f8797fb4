"""Statistical agreement checks between the closed forms and the simulator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy import stats

from .analysis import attempts_pmf, attempts_pmf_iid, retry_kernel
from .channel import GilbertParams, matrix_power, mean_ber, stationary
from .simulator import SimReport

CHI2_LEVEL = 1e-3
SIGMA = 3.0
# absorbs summation rounding when the simulator is deterministic (stderr == 0)
REL_FLOOR = 1e-9


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def goodput_agreement(sim: SimReport, analytic: float, sigma: float = SIGMA) -> CheckResult:
    diff = abs(sim.goodput_est - analytic)
    allowed = sigma * sim.goodput_stderr + REL_FLOOR * abs(analytic)
    z = diff / sim.goodput_stderr if sim.goodput_stderr > 0 else (0.0 if diff <= allowed else math.inf)
    return CheckResult(
        "goodput",
        diff <= allowed,
        f"sim {sim.goodput_est:.6g} +- {sim.goodput_stderr:.3g} vs exact {analytic:.6g} (|z| = {z:.2f})",
    )


def _survival_fn(x: int, t_out_bits: int, params: GilbertParams) -> Callable[[int], float]:
    s = retry_kernel(x, t_out_bits, params)
    pi = stationary(params).as_array()
    return lambda n: float((pi @ matrix_power(s, n)).sum())


def _first_below(survival: Callable[[int], float], level: float) -> int:
    """Smallest n with survival(n) <= level (survival is nonincreasing)."""
    hi = 1
    while survival(hi) > level:
        hi *= 2
        if hi > 1 << 40:
            return hi
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if survival(mid) > level:
            lo = mid
        else:
            hi = mid
    return hi


def attempts_chi_square(sim: SimReport, t_out_bits: int, params: GilbertParams,
                        max_bins: int = 50, min_expected: float = 5.0) -> tuple[float, int, float]:
    """Chi-square of the simulated attempt counts against pi S^(n-1) Q^x e.

    Expected counts condition on how many packets of each size were delivered.
    Bins are near-equiprobable quantile ranges of N, merged until every bin
    expects at least ``min_expected`` packets. Returns (statistic, dof, p-value).
    """
    sizes = sorted(sim.attempts_by_size)
    counts = {x: len(sim.attempts_by_size[x]) for x in sizes}
    total = sum(counts.values())
    surv = {x: _survival_fn(x, t_out_bits, params) for x in sizes}

    def mix_survival(n: int) -> float:
        return sum(counts[x] * surv[x](n) for x in sizes) / total

    n_bins = max(1, min(max_bins, int(total // min_expected)))
    edges = {_first_below(mix_survival, 1.0 - k / n_bins) for k in range(1, n_bins)}
    # single-value bins wherever they are well populated (resolves the head of N)
    for n in range(1, max_bins + 1):
        if total * (mix_survival(n - 1) - mix_survival(n)) >= min_expected:
            edges.add(n)
    edges = sorted(edges)

    def expected_in(lo: int, hi: int | None) -> float:
        return sum(counts[x] * (surv[x](lo) - (0.0 if hi is None else surv[x](hi))) for x in sizes)

    bounds = [0] + edges + [None]
    merged, acc_lo = [], None
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if acc_lo is None:
            acc_lo = lo
        exp = expected_in(acc_lo, hi)
        if exp >= min_expected:
            merged.append((acc_lo, hi, exp))
            acc_lo = None
    if acc_lo is not None:
        # short tail joins the previous bin
        lo = merged.pop()[0] if merged else acc_lo
        merged.append((lo, None, expected_in(lo, None)))

    pooled = np.sort(np.concatenate([sim.attempts_by_size[x] for x in sizes]))
    stat = 0.0
    for lo, hi, exp in merged:
        left = np.searchsorted(pooled, lo, side="right")
        right = len(pooled) if hi is None else np.searchsorted(pooled, hi, side="right")
        obs = right - left
        stat += (obs - exp) ** 2 / exp
    dof = len(merged) - 1
    p_value = 1.0 if dof == 0 else float(stats.chi2.sf(stat, dof))
    return stat, dof, p_value


def attempts_check(sim: SimReport, t_out_bits: int, params: GilbertParams,
                   level: float = CHI2_LEVEL) -> CheckResult:
    stat, dof, p = attempts_chi_square(sim, t_out_bits, params)
    return CheckResult("attempts-chi2", p >= level, f"chi2 = {stat:.2f} on {dof} dof, p = {p:.4g}")


def iid_equivalence(params: GilbertParams, sizes: Iterable[int], t_out_bits: int,
                    n_max: int = 50, tol: float = 1e-10) -> CheckResult:
    """Markov attempt law against the geometric law at the mean bit-error rate."""
    p_e = mean_ber(params)
    worst = 0.0
    for x in sizes:
        for n in range(1, n_max + 1):
            gap = abs(attempts_pmf(n, x, t_out_bits, params) - attempts_pmf_iid(n, x, p_e))
            worst = max(worst, gap)
    return CheckResult("iid-equivalence", worst <= tol, f"max |pmf - geometric| = {worst:.3g}")
