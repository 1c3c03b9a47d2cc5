"""Workload configuration, Zipfian key sampling and binary stream traces."""
import random
import struct
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from itertools import accumulate
from typing import Optional

from ..errors import ConfigError

APPS = ("gs", "sl", "ob", "tp")


@dataclass(frozen=True)
class WorkloadConfig:
    app: str = "gs"
    table_size: Optional[int] = None
    skew: Optional[float] = None
    read_ratio: float = 0.5
    mp_ratio: float = 0.25
    mp_length: int = 4
    partitions: int = 8
    txn_len: Optional[int] = None
    seed: int = 0
    event_count: int = 10_000
    initial_balance: int = 10_000
    vehicles: int = 1000

    def __post_init__(self):
        app = self.app.lower()
        if app not in APPS:
            raise ConfigError(f"unknown app {self.app!r}; expected one of {APPS}")
        object.__setattr__(self, "app", app)
        if self.table_size is None:
            object.__setattr__(self, "table_size", 100 if app == "tp" else 10_000)
        if self.skew is None:
            object.__setattr__(self, "skew", 0.2 if app == "tp" else 0.6)
        if self.txn_len is None:
            object.__setattr__(self, "txn_len", {"gs": 10, "ob": 20}.get(app, 0))
        if self.skew < 0:
            raise ConfigError("skew must be >= 0")
        for name in ("read_ratio", "mp_ratio"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.partitions < 1:
            raise ConfigError("partitions must be >= 1")
        if not 1 <= self.mp_length <= self.partitions:
            raise ConfigError(f"mp_length must lie in [1, {self.partitions}]")
        if self.table_size < 1 or self.event_count < 0:
            raise ConfigError("table_size must be >= 1 and event_count >= 0")
        if app in ("gs", "ob"):
            if self.txn_len > self.table_size:
                raise ConfigError("transaction length exceeds the key space")
            # single-partition transactions must find txn_len keys in one partition
            per_part = self.table_size // self.partitions
            span = 1 if self.mp_ratio < 1 else self.mp_length
            if self.txn_len > span * per_part:
                raise ConfigError(f"{self.txn_len} distinct keys do not fit in {span} "
                                  f"partition(s) of {per_part} keys")

    def with_(self, **kw):
        return replace(self, **kw)


class ZipfSampler:
    """Keys in ``[0, n)`` with P(key = r - 1) proportional to ``1 / r**theta``."""

    def __init__(self, n, theta, rng):
        if n < 1:
            raise ConfigError("Zipf key space must be non-empty")
        self.n = n
        self.theta = theta
        self.weights = [1.0 / (r ** theta) for r in range(1, n + 1)]
        self.cdf = list(accumulate(self.weights))
        self.norm = self.cdf[-1]
        self.rng = rng
        self._parts = {}

    def pmf(self, key):
        return self.weights[key] / self.norm

    def sample(self):
        i = bisect_left(self.cdf, self.rng.random() * self.norm)
        return i if i < self.n else self.n - 1

    __call__ = sample

    def partitioned(self, partitions):
        """Per-residue CDFs for keys grouped by ``key % partitions``."""
        parts = self._parts.get(partitions)
        if parts is None:
            parts = []
            for p in range(partitions):
                keys = list(range(p, self.n, partitions))
                cdf = list(accumulate(self.weights[k] for k in keys))
                parts.append((keys, cdf))
            self._parts[partitions] = parts
        return parts

    def sample_in(self, partitions, allowed):
        """A key drawn from the Zipf law conditioned on ``key % partitions in allowed``."""
        parts = self.partitioned(partitions)
        rng = self.rng
        if len(allowed) == 1:
            keys, cdf = parts[allowed[0]]
        else:
            masses = [parts[p][1][-1] if parts[p][1] else 0.0 for p in allowed]
            u = rng.random() * sum(masses)
            for p, m in zip(allowed, masses):
                if u < m:
                    break
                u -= m
            keys, cdf = parts[p]
        i = bisect_left(cdf, rng.random() * cdf[-1])
        return keys[i if i < len(keys) else len(keys) - 1]


def zipf_sample(sampler):
    return sampler.sample()


def pick_keys(sampler, count, partitions, spans):
    """Draw ``count`` distinct keys whose ``key % partitions`` covers exactly ``spans`` values.

    Partitions are chosen by the partitions of successive Zipf draws; the
    remaining keys follow the Zipf law restricted to the chosen partitions.
    """
    keys = []
    parts = []
    seen = set()
    while len(parts) < spans:
        k = sampler.sample()
        p = k % partitions
        if p not in parts:
            parts.append(p)
            keys.append(k)
            seen.add(k)
    while len(keys) < count:
        k = sampler.sample_in(partitions, parts)
        if k not in seen:
            keys.append(k)
            seen.add(k)
    return keys


def partition_span(config, rng):
    """Number of partitions the next multi-key transaction must touch."""
    if config.mp_ratio > 0 and rng.random() < config.mp_ratio:
        return config.mp_length
    return 1


# binary traces ---------------------------------------------------------------

_TS = struct.Struct("<Q")


@dataclass
class TraceCodec:
    """Fixed-width little-endian payload layout for one app."""

    fmt: struct.Struct
    encode: object
    decode: object
    size: int = field(init=False)

    def __post_init__(self):
        self.size = _TS.size + self.fmt.size


def dump_trace(path, events, codec):
    n = 0
    with open(path, "wb") as fh:
        for ev in events:
            if ev.is_punctuation:
                continue
            fh.write(_TS.pack(ev.ts))
            fh.write(codec.fmt.pack(*codec.encode(ev.payload)))
            n += 1
    return n


def load_trace(path, codec):
    out = []
    with open(path, "rb") as fh:
        data = fh.read()
    step = codec.size
    if len(data) % step:
        raise ValueError(f"trace length {len(data)} is not a multiple of {step}")
    for off in range(0, len(data), step):
        (ts,) = _TS.unpack_from(data, off)
        out.append((ts, codec.decode(codec.fmt.unpack_from(data, off + _TS.size))))
    return out


def make_rng(config, stream):
    # independent, reproducible streams for population and event generation
    return random.Random(f"{config.app}:{config.seed}:{stream}")
