"""Message segmentation and the stationary packet-size mixture.

All sizes are integer bits. A message of ``m`` bits with payload ``d`` becomes
``ceil(m / d)`` packets: the first ones ("body") carry ``d`` bits, the final one
("edge") carries the remainder, which equals ``d`` when ``m`` is a multiple.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MalformedCdf

BITS_PER_BYTE = 8


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _positive_int(name: str, value) -> int:
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"{name} must be an integer number of bits, got {value!r}")
        value = int(value)
    value = int(value)
    if value < 1:
        raise ValueError(f"{name} must be >= 1, got {value}")
    return value


@dataclass(frozen=True)
class DiscreteMessageDist:
    """Finite message-size law: sorted ``(size_bits, weight)`` atoms."""

    atoms: tuple[tuple[int, float], ...]

    def __init__(self, atoms: Iterable[tuple[int, float]]):
        merged: dict[int, float] = {}
        for size, weight in atoms:
            size = _positive_int("message size", size)
            weight = float(weight)
            if not weight > 0.0 or math.isinf(weight):
                raise ValueError(f"atom weights must be positive, got {weight!r}")
            merged[size] = merged.get(size, 0.0) + weight
        if not merged:
            raise ValueError("a message distribution needs at least one atom")
        total = math.fsum(merged.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"atom weights must sum to 1, got {total!r}")
        object.__setattr__(self, "atoms", tuple(sorted(merged.items())))

    @classmethod
    def constant(cls, size_bits: int) -> "DiscreteMessageDist":
        return cls([(size_bits, 1.0)])

    @classmethod
    def normalized(cls, atoms: Iterable[tuple[int, float]]) -> "DiscreteMessageDist":
        atoms = list(atoms)
        total = math.fsum(w for _, w in atoms)
        if not total > 0.0:
            raise ValueError("atom weights must have a positive sum")
        return cls([(s, w / total) for s, w in atoms])

    @property
    def sizes(self) -> list[int]:
        return [s for s, _ in self.atoms]

    @property
    def weights(self) -> list[float]:
        return [w for _, w in self.atoms]

    @property
    def mean(self) -> float:
        return math.fsum(s * w for s, w in self.atoms)

    @property
    def max_size(self) -> int:
        return self.atoms[-1][0]


@dataclass(frozen=True)
class SegmentationConfig:
    payload: int
    header: int = 0

    def __post_init__(self):
        object.__setattr__(self, "payload", _positive_int("payload", self.payload))
        header = int(self.header)
        if header != self.header or header < 0:
            raise ValueError(f"header must be a nonnegative integer, got {self.header!r}")
        object.__setattr__(self, "header", header)

    @property
    def body_size(self) -> int:
        return self.payload + self.header


@dataclass(frozen=True)
class PacketMix:
    """Stationary packet-size law (sizes include the header).

    ``edge_prob`` keeps pi^(E) even when an edge atom coincides with the body
    size; ``atoms`` is the merged distribution used for goodput.
    """

    body_size: int
    body_weight: float
    edge_atoms: tuple[tuple[int, float], ...]
    edge_prob: float
    header: int

    @property
    def atoms(self) -> list[tuple[int, float]]:
        merged: dict[int, float] = {}
        if self.body_weight > 0.0:
            merged[self.body_size] = self.body_weight
        for size, weight in self.edge_atoms:
            merged[size] = merged.get(size, 0.0) + weight
        return sorted(merged.items())

    @property
    def mean(self) -> float:
        return math.fsum(s * w for s, w in self.atoms)

    @property
    def max_size(self) -> int:
        return max(s for s, _ in self.atoms)


def segment_message(msg_size: int, payload: int) -> list[int]:
    """Information-field sizes of the packets cut from one message."""
    msg_size = _positive_int("message size", msg_size)
    payload = _positive_int("payload", payload)
    count = _ceil_div(msg_size, payload)
    return [payload] * (count - 1) + [msg_size - (count - 1) * payload]


def packets_per_message(dist: DiscreteMessageDist, payload: int) -> list[int]:
    return [_ceil_div(s, payload) for s in dist.sizes]


def edge_probability(dist: DiscreteMessageDist, payload: int) -> float:
    payload = _positive_int("payload", payload)
    mean_count = math.fsum(w * _ceil_div(s, payload) for s, w in dist.atoms)
    return 1.0 / mean_count


def packet_mix(dist: DiscreteMessageDist, cfg: SegmentationConfig) -> PacketMix:
    d, h = cfg.payload, cfg.header
    pi_e = edge_probability(dist, d)
    edges: dict[int, float] = {}
    for size, weight in dist.atoms:
        k = _ceil_div(size, d)
        edge = size - (k - 1) * d + h
        edges[edge] = edges.get(edge, 0.0) + pi_e * weight
    return PacketMix(
        body_size=d + h,
        body_weight=1.0 - pi_e,
        edge_atoms=tuple(sorted(edges.items())),
        edge_prob=pi_e,
        header=h,
    )


def mean_packet_size(dist: DiscreteMessageDist, cfg: SegmentationConfig) -> float:
    return edge_probability(dist, cfg.payload) * dist.mean + cfg.header


def discretize(cdf_samples: Sequence[tuple[float, float]], n_atoms: int) -> DiscreteMessageDist:
    """Turn sampled CDF points ``(size_bits, F(size))`` into a finite law.

    Every increase of the CDF becomes an atom at that sample. If there are more
    increases than ``n_atoms``, atoms are placed at the upper ``j / n_atoms``
    quantiles instead, so the result still agrees with the input CDF at every
    atom location.
    """
    n_atoms = _positive_int("n_atoms", n_atoms)
    if not cdf_samples:
        raise MalformedCdf("no CDF samples given")
    sizes, cums = [], []
    prev_size, prev_cum = -math.inf, 0.0
    for size, cum in cdf_samples:
        size, cum = float(size), float(cum)
        if math.isnan(size) or math.isnan(cum):
            raise MalformedCdf("NaN in CDF samples")
        if size <= prev_size:
            raise MalformedCdf(f"sizes must be strictly increasing (at size {size:g})")
        if cum < prev_cum - 1e-15 or cum < 0.0 or cum > 1.0 + 1e-12:
            raise MalformedCdf(f"CDF must be nondecreasing within [0, 1] (at size {size:g})")
        if size <= 0.0 and cum > 0.0:
            raise MalformedCdf("probability mass at a nonpositive size")
        sizes.append(size)
        cums.append(min(max(cum, prev_cum), 1.0))
        prev_size, prev_cum = size, cums[-1]
    if abs(cums[-1] - 1.0) > 1e-12:
        raise MalformedCdf(f"CDF must end at 1, ends at {cums[-1]!r}")
    cums[-1] = 1.0

    steps = [i for i in range(len(cums)) if cums[i] > (cums[i - 1] if i else 0.0)]
    if len(steps) > n_atoms:
        chosen = []
        for j in range(1, n_atoms + 1):
            level = j / n_atoms
            idx = next(i for i in steps if cums[i] >= level - 1e-12)
            if not chosen or chosen[-1] != idx:
                chosen.append(idx)
        steps = chosen

    atoms, below = [], 0.0
    for i in steps:
        atoms.append((math.ceil(sizes[i]), cums[i] - below))
        below = cums[i]
    return DiscreteMessageDist.normalized(atoms)


def load_message_dist(path: str | Path) -> DiscreteMessageDist:
    """Read ``size_bytes weight`` lines (comma or whitespace separated, ``#`` comments).

    Weights are normalized, so raw counts are accepted.
    """
    atoms = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'size_bytes weight', got {raw!r}")
        try:
            size_bytes, weight = float(fields[0]), float(fields[1])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric field in {raw!r}") from None
        if not size_bytes.is_integer() or size_bytes < 1:
            raise ValueError(f"{path}:{lineno}: size must be a positive whole number of bytes")
        atoms.append((int(size_bytes) * BITS_PER_BYTE, weight))
    if not atoms:
        raise ValueError(f"{path}: no message-size atoms found")
    return DiscreteMessageDist.normalized(atoms)
