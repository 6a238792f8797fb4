"""Experiment configuration: ``key = value`` lines, optional ``[section]`` headers.

Every key has a home section, but may also appear at the top of the file or
under any section name; keys must be unique. Omitted keys fall back to the
reference scenario: 1 Mbit/s link, 38-byte header and ACK, 100 ms timeout,
1 ms propagation delay, constant 4000-byte messages.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .analysis import TimingConfig
from .channel import GilbertParams, from_mean_ber_and_burst
from .errors import ConfigError
from .segmentation import (
    BITS_PER_BYTE,
    DiscreteMessageDist,
    SegmentationConfig,
    load_message_dist,
)
from .simulator import SimConfig, StateMode

SECTIONS = {
    "message": ("size_bytes", "atoms", "file"),
    "link": ("capacity_bps", "header_bytes", "ack_bytes", "timeout_s", "propagation_s"),
    "channel": ("lambda", "gamma", "p_good", "p_bad", "mean_ber", "burst_len"),
    "sweep": ("min_bytes", "max_bytes", "step_bytes", "mode"),
    "sim": ("packets_per_rep", "replications", "seed", "state_mode", "engine", "workers"),
    "validate": ("payloads_bytes",),
}
HOME = {key: sec for sec, keys in SECTIONS.items() for key in keys}
MODES = ("analytic", "simulate", "both")
RAW_FORM = ("lambda", "gamma", "p_good", "p_bad")
BURST_FORM = ("mean_ber", "burst_len")

DEFAULTS = {
    "capacity_bps": 1e6,
    "header_bytes": 38,
    "ack_bytes": 38,
    "timeout_s": 0.1,
    "propagation_s": 1e-3,
    "size_bytes": 4000,
    "mean_ber": 1e-4,
    "burst_len": "iid",
    "min_bytes": 100,
    "max_bytes": 4000,
    "step_bytes": 10,
    "mode": "analytic",
    "packets_per_rep": 100_000,
    "replications": 10,
    "seed": 1,
    "state_mode": "stationary",
    "engine": "auto",
    "workers": 1,
    "payloads_bytes": "1500",
}


@dataclass(frozen=True)
class ExperimentConfig:
    message: DiscreteMessageDist
    header_bytes: int
    ack_bytes: int
    capacity: float
    timeout: float
    propagation: float
    channel: GilbertParams
    sweep_min: int
    sweep_max: int
    sweep_step: int
    mode: str
    sim: SimConfig
    check_payloads: tuple[int, ...]
    # canonical key/value text for each resolved setting, used for the echo
    resolved: dict[str, str] = field(compare=False, repr=False)

    @property
    def timing(self) -> TimingConfig:
        return TimingConfig(
            capacity=self.capacity,
            timeout=self.timeout,
            propagation=self.propagation,
            ack_size=self.ack_bytes * BITS_PER_BYTE,
            header=self.header_bytes * BITS_PER_BYTE,
        )

    def segmentation(self, payload_bytes: int) -> SegmentationConfig:
        return SegmentationConfig(payload_bytes * BITS_PER_BYTE, self.header_bytes * BITS_PER_BYTE)

    @property
    def payloads(self) -> list[int]:
        return list(range(self.sweep_min, self.sweep_max + 1, self.sweep_step))

    def with_overrides(self, seed: int | None = None, mode: str | None = None,
                       workers: int | None = None) -> "ExperimentConfig":
        cfg, resolved = self, dict(self.resolved)
        if workers is not None:
            if workers < 1:
                raise ConfigError(f"workers must be >= 1, got {workers}")
            cfg = replace(cfg, sim=replace(cfg.sim, workers=int(workers)))
        if seed is not None:
            cfg = replace(cfg, sim=replace(cfg.sim, seed=int(seed)))
            resolved["seed"] = str(int(seed))
        if mode is not None:
            if mode not in MODES:
                raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
            cfg = replace(cfg, mode=mode)
            resolved["mode"] = mode
        return replace(cfg, resolved=resolved)

    def to_text(self) -> str:
        """Config text that parses back to this exact configuration."""
        lines = []
        for sec, keys in SECTIONS.items():
            present = [k for k in keys if k in self.resolved]
            if not present:
                continue
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {self.resolved[k]}" for k in present)
        return "\n".join(lines) + "\n"


def _line_of(text: str, key: str) -> int | None:
    pattern = re.compile(rf"^[ \t]*{re.escape(key)}[ \t]*[=:]", re.MULTILINE)
    m = pattern.search(text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


class _Fields:
    def __init__(self, raw: dict[str, str], text: str, source: str):
        self.raw, self.text, self.source = raw, text, source
        self.resolved: dict[str, str] = {}

    def fail(self, key: str, msg: str):
        line = _line_of(self.text, key)
        where = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{where}: {key}: {msg}")

    def get(self, key: str, conv, check=None, what: str = ""):
        text = self.raw.get(key, DEFAULTS.get(key))
        try:
            value = conv(str(text).strip())
        except (TypeError, ValueError):
            self.fail(key, f"cannot parse {text!r}{what and ' as ' + what}")
        if check is not None and not check(value):
            self.fail(key, f"invalid value {text!r}{what and ' (expected ' + what + ')'}")
        self.resolved[key] = _canon(value)
        return value


def _canon(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_canon(v) for v in value)
    return str(value)


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
    if not value.is_integer():
        raise ValueError(text)
    return int(value)


def _atoms(text: str) -> list[tuple[int, float]]:
    atoms = []
    for item in text.split(","):
        size, _, weight = item.partition(":")
        atoms.append((_int(size), float(weight) if weight.strip() else 1.0))
    return atoms


def parse_config_text(text: str, source: str = "<config>", base_dir: Path | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string("[__top__]\n" + text, source=source)
    except configparser.Error as exc:
        # the injected header shifts line numbers by one
        msg = re.sub(r"\[line\s+(\d+)\]", lambda m: f"[line {int(m.group(1)) - 1}]", str(exc))
        raise ConfigError(msg) from None

    raw: dict[str, str] = {}
    for sec in parser.sections():
        if sec != "__top__" and sec not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key, value in parser.items(sec):
            if key not in HOME:
                line = _line_of(text, key)
                raise ConfigError(f"{source}:{line}: unknown key {key!r}")
            if key in raw:
                raise ConfigError(f"{source}:{_line_of(text, key)}: duplicate key {key!r}")
            raw[key] = value
    f = _Fields(raw, text, source)

    # message-size law
    forms = [k for k in SECTIONS["message"] if k in raw]
    if len(forms) > 1:
        f.fail(forms[1], f"give only one of {', '.join(SECTIONS['message'])}")
    form = forms[0] if forms else "size_bytes"
    try:
        if form == "file":
            path = Path(raw["file"].strip())
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            dist = load_message_dist(path)
            f.resolved["atoms"] = ", ".join(f"{s // BITS_PER_BYTE}:{w!r}" for s, w in dist.atoms)
        elif form == "atoms":
            dist = DiscreteMessageDist.normalized(
                (s * BITS_PER_BYTE, w) for s, w in f.get("atoms", _atoms, what="size:weight list")
            )
            f.resolved["atoms"] = ", ".join(f"{s // BITS_PER_BYTE}:{w!r}" for s, w in dist.atoms)
        else:
            size = f.get("size_bytes", _int, lambda v: v >= 1, "positive integer")
            dist = DiscreteMessageDist.constant(size * BITS_PER_BYTE)
    except (OSError, ValueError) as exc:
        f.fail(form, str(exc))

    # link
    capacity = f.get("capacity_bps", float, lambda v: 0 < v < math.inf, "positive number")
    header = f.get("header_bytes", _int, lambda v: v >= 0, "nonnegative integer")
    ack = f.get("ack_bytes", _int, lambda v: v >= 0, "nonnegative integer")
    timeout = f.get("timeout_s", float, lambda v: v > 0, "positive seconds")
    propagation = f.get("propagation_s", float, lambda v: v >= 0, "nonnegative seconds")

    # channel: exactly one form
    raw_keys = [k for k in RAW_FORM if k in raw]
    burst_keys = [k for k in BURST_FORM if k in raw]
    if raw_keys and burst_keys:
        f.fail(burst_keys[0], "conflicting channel specs: use either lambda/gamma/p_good/p_bad "
                              "or mean_ber/burst_len")
    try:
        if raw_keys:
            missing = [k for k in RAW_FORM if k not in raw]
            if missing:
                f.fail(raw_keys[0], f"channel spec also needs {', '.join(missing)}")
            lam, gam, pg, pb = (f.get(k, float, lambda v: 0 <= v <= 1, "probability") for k in RAW_FORM)
            channel = GilbertParams(lam, gam, pg, pb)
        else:
            p_e = f.get("mean_ber", float, lambda v: 0 <= v < 1, "probability below 1")
            burst = f.get("burst_len", _burst, lambda v: v == "iid" or v >= 1, "'iid' or >= 1")
            if p_e == 0.0:
                channel = GilbertParams.iid(0.0)
            elif burst == "iid":
                channel = GilbertParams.iid(p_e)
            else:
                channel = from_mean_ber_and_burst(p_e, burst)
    except ValueError as exc:
        f.fail((raw_keys or burst_keys or ["mean_ber"])[0], str(exc))

    # sweep
    lo = f.get("min_bytes", _int, lambda v: v >= 1, "positive integer")
    hi = f.get("max_bytes", _int, lambda v: v >= 1, "positive integer")
    step = f.get("step_bytes", _int, lambda v: v >= 1, "integer >= 1")
    if lo > hi:
        f.fail("min_bytes", f"sweep min {lo} exceeds max {hi}")
    mode = f.get("mode", str, lambda v: v in MODES, " | ".join(MODES))

    # simulation
    try:
        sim = SimConfig(
            packets_per_rep=f.get("packets_per_rep", _int, lambda v: v >= 1, "integer >= 1"),
            replications=f.get("replications", _int, lambda v: v >= 2, "integer >= 2"),
            seed=f.get("seed", _int, lambda v: 0 <= v < 2**64, "64-bit nonnegative integer"),
            state_mode=f.get("state_mode", StateMode, what="stationary | continuous"),
            engine=f.get("engine", str, lambda v: v in ("auto", "bitwise", "attempt"),
                         "auto | bitwise | attempt"),
            workers=f.get("workers", _int, lambda v: v >= 1, "integer >= 1"),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    f.resolved["state_mode"] = sim.state_mode.value
    # the worker count never changes results, so outputs stay byte-identical across it
    f.resolved.pop("workers")
    checks = f.get("payloads_bytes", lambda t: tuple(_int(v) for v in t.split(",")),
                   lambda v: len(v) > 0 and all(p >= 1 for p in v), "comma-separated byte sizes")

    cfg = ExperimentConfig(
        message=dist, header_bytes=header, ack_bytes=ack, capacity=capacity, timeout=timeout,
        propagation=propagation, channel=channel, sweep_min=lo, sweep_max=hi, sweep_step=step,
        mode=mode, sim=sim, check_payloads=checks, resolved=f.resolved,
    )
    try:
        timing = cfg.timing
    except ValueError as exc:
        f.fail("timeout_s", str(exc))
    biggest = (max(hi, *checks) + header) * BITS_PER_BYTE
    if biggest > timing.timeout_bits:
        f.fail("max_bytes", f"packets of {biggest} bits do not fit the {timing.timeout_bits}-bit timeout")
    return cfg


def _burst(text: str):
    return "iid" if text.lower() == "iid" else float(text)


def parse_config(path: str | Path | None) -> ExperimentConfig:
    """Read and validate a config file; ``None`` gives the reference scenario."""
    if path is None:
        return parse_config_text("", "<defaults>")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path), path.parent)
