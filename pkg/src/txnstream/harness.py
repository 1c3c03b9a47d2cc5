"""Experiment driver: run one configuration, measure it, compare with the serial oracle."""
import contextlib
import csv
import dataclasses
import gc
import io
import logging
import statistics
from dataclasses import dataclass, field, fields
from typing import Optional

from .apps import WorkloadConfig, get_app
from .errors import ConfigError
from .oracle import SerialOracle
from .restructure import PlacementPolicy
from .scheduler import Engine, stamp
from .state import StateStore

log = logging.getLogger(__name__)

SCHEMES = ("tstream", "lock", "mvlk", "pat", "nolock")
ORACLE_DEFAULT_LIMIT = 1_000_000

CSV_COLUMNS = [
    "app", "scheme", "threads", "interval", "skew", "read_ratio", "mp_ratio", "mp_length",
    "placement", "seed", "events", "throughput_eps", "p50_ms", "p95_ms", "p99_ms",
    "useful_ns", "sync_ns", "lock_ns", "others_ns", "rejected", "digest_t0", "digest_t1",
    "oracle_match",
]


@dataclass
class RunConfig:
    app: str = "gs"
    scheme: str = "tstream"
    threads: int = 1
    interval: int = 500
    events: int = 10_000
    skew: Optional[float] = None
    read_ratio: float = 0.5
    mp_ratio: float = 0.25
    mp_length: int = 4
    placement: str = "shared-nothing"
    seed: int = 0
    warmup_events: Optional[int] = None
    output: Optional[str] = None
    trace: bool = False
    oracle: Optional[bool] = None
    table_size: Optional[int] = None
    initial_balance: int = 10_000
    partitions: Optional[int] = None
    steal: Optional[bool] = None
    dump_trace: Optional[str] = None

    def __post_init__(self):
        self.scheme = self.scheme.lower()
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.interval < 1:
            raise ConfigError(f"interval must be >= 1, got {self.interval}")
        if self.events < 1:
            raise ConfigError("events must be >= 1")
        if self.warmup_events is None:
            self.warmup_events = self.events // 10
        if not 0 <= self.warmup_events < self.events:
            raise ConfigError("warmup_events must be smaller than events")
        self.policy = PlacementPolicy.parse(self.placement, self.steal)
        self.policy.queue_count(self.threads)
        if self.oracle is None:
            self.oracle = self.events <= ORACLE_DEFAULT_LIMIT
        self.workload = WorkloadConfig(
            app=self.app, table_size=self.table_size, skew=self.skew,
            read_ratio=self.read_ratio, mp_ratio=self.mp_ratio, mp_length=self.mp_length,
            seed=self.seed, event_count=self.events, initial_balance=self.initial_balance)
        self.app = self.workload.app
        self.skew = self.workload.skew

    def replace(self, **kw):
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(kw)
        return RunConfig(**values)

    @classmethod
    def field_types(cls):
        hints = {"app": str, "scheme": str, "placement": str, "output": str, "dump_trace": str,
                 "threads": int, "interval": int, "events": int, "mp_length": int, "seed": int,
                 "warmup_events": int, "table_size": int, "initial_balance": int,
                 "partitions": int, "skew": float, "read_ratio": float, "mp_ratio": float,
                 "trace": bool, "oracle": bool, "steal": bool}
        return hints


@dataclass
class RunMetrics:
    throughput: float
    latency_p50: float
    latency_p95: float
    latency_p99: float
    breakdown: dict
    state_digest: dict
    rejected_count: int
    oracle_match: Optional[bool] = None
    elapsed: float = 0.0
    batches: int = 0
    peak_versions: int = 0
    extra: dict = field(default_factory=dict)


def _percentiles(values_ns):
    if not values_ns:
        return 0.0, 0.0, 0.0
    if len(values_ns) == 1:
        v = values_ns[0] / 1e6
        return v, v, v
    q = statistics.quantiles(values_ns, n=100, method="inclusive")
    return q[49] / 1e6, q[94] / 1e6, q[98] / 1e6


def record_breakdown(scheme):
    """Per-transaction mean nanoseconds for Useful, Sync, Lock and Others."""
    return scheme.breakdown().means()


def _throughput(engine, warmup):
    stamps = sorted((t, lat) for ex in engine.executors
                    for t, lat in zip(ex.emitted_at, ex.latencies))
    if not stamps:
        return 0.0, []
    post = stamps[warmup:] if warmup < len(stamps) else stamps[-1:]
    start = stamps[warmup - 1][0] if warmup > 0 else None
    end = stamps[-1][0]
    n = len(post)
    if start is None:
        # no warmup: measure from the first emission
        start = stamps[0][0]
        n -= 1
    span = (end - start) / 1e9
    tput = n / span if span > 0 and n > 0 else float(len(stamps)) / max(engine.elapsed, 1e-9)
    return tput, [lat for _, lat in post]


def compare_outputs(outputs, expected):
    """First mismatching (ts, engine, oracle) triple, or None when identical."""
    if len(outputs) != len(expected):
        return ("length", len(outputs), len(expected))
    for a, b in zip(outputs, expected):
        if a.key() != b.key():
            return (a.ts, a, b)
    return None


@contextlib.contextmanager
def gc_paused():
    """Keep the cyclic collector out of the measured window.

    Engine objects form no reference cycles, so refcounting alone reclaims
    them; collector pauses would otherwise show up as latency spikes.
    """
    was = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


def run(config, keep_engine=False):
    wl = config.workload
    app = get_app(wl.app)
    tables = app.populate(wl)
    store = StateStore.from_dict(tables)
    engine = Engine(app.logic(), store, config.scheme, config.threads, config.interval,
                    config.policy, trace=config.trace, partitions=config.partitions)
    # generate up front so the generator does not share the measured window
    payloads = list(app.generate(wl))
    with gc_paused():
        outputs = engine.run(payloads)
    if config.dump_trace:
        from .apps.workload import dump_trace
        dump_trace(config.dump_trace, stamp(payloads, config.interval), app.codec)

    tput, lats = _throughput(engine, config.warmup_events)
    p50, p95, p99 = _percentiles(lats)
    digest = store.digest()
    rejected = sum(1 for o in outputs if o.status.name == "REJECTED")
    batches = getattr(engine.scheme, "batches", [])
    metrics = RunMetrics(tput, p50, p95, p99, record_breakdown(engine.scheme), digest, rejected,
                         elapsed=engine.elapsed, batches=len(batches),
                         peak_versions=getattr(engine.scheme, "peak_versions", 0))
    metrics.extra["outputs"] = outputs
    if config.oracle:
        oracle = SerialOracle(app.logic(), tables)
        oracle.run(stamp(payloads, config.interval))
        mismatch = compare_outputs(outputs, oracle.outputs)
        metrics.oracle_match = oracle.digest() == digest and mismatch is None
        metrics.extra["oracle_digest"] = oracle.digest()
        metrics.extra["first_mismatch"] = mismatch
        metrics.extra["oracle_outputs"] = oracle.outputs
    if keep_engine:
        metrics.extra["engine"] = engine
    return metrics


def csv_row(config, metrics):
    digests = list(metrics.state_digest.values()) + ["", ""]
    bd = metrics.breakdown
    om = metrics.oracle_match
    return {
        "app": config.app, "scheme": config.scheme, "threads": config.threads,
        "interval": config.interval, "skew": config.skew, "read_ratio": config.read_ratio,
        "mp_ratio": config.mp_ratio, "mp_length": config.mp_length,
        "placement": str(config.policy), "seed": config.seed, "events": config.events,
        "throughput_eps": f"{metrics.throughput:.1f}",
        "p50_ms": f"{metrics.latency_p50:.3f}", "p95_ms": f"{metrics.latency_p95:.3f}",
        "p99_ms": f"{metrics.latency_p99:.3f}",
        "useful_ns": f"{bd['useful_ns']:.0f}", "sync_ns": f"{bd['sync_ns']:.0f}",
        "lock_ns": f"{bd['lock_ns']:.0f}", "others_ns": f"{bd['others_ns']:.0f}",
        "rejected": metrics.rejected_count,
        "digest_t0": digests[0], "digest_t1": digests[1],
        "oracle_match": "" if om is None else str(om).lower(),
    }


def write_csv(rows, path=None, header=True):
    """Write rows to ``path`` (appending) or return them as a string."""
    buf = io.StringIO() if path is None else open(path, "a", newline="")
    try:
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS)
        if header:
            w.writeheader()
        for row in rows:
            w.writerow(row)
        if path is None:
            return buf.getvalue()
    finally:
        if path is not None:
            buf.close()
    return None


def parse_axis(text):
    """``name=v1,v2,...`` -> (name, [typed values])."""
    name, sep, values = text.partition("=")
    name = name.strip().replace("-", "_")
    types = RunConfig.field_types()
    if not sep or name not in types:
        raise ConfigError(f"bad sweep axis {text!r}")
    conv = types[name]
    items = [v.strip() for v in values.split(",") if v.strip()]
    try:
        return name, [convert(conv, v) for v in items]
    except ValueError as exc:
        raise ConfigError(f"bad value on axis {name}: {exc}") from None


def convert(conv, text):
    if conv is bool:
        low = str(text).lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return conv(text)


def sweep(config, axis, values, on_row=None):
    """One run per axis value, seeds held fixed. Returns the list of (config, metrics, row)."""
    out = []
    for v in values:
        cfg = config.replace(**{axis: v})
        m = run(cfg)
        row = csv_row(cfg, m)
        out.append((cfg, m, row))
        if on_row is not None:
            on_row(row)
    return out


def asdict_metrics(m):
    d = dataclasses.asdict(m)
    d.pop("extra", None)
    return d
