"""GrepSum: multi-key reads summed downstream, or multi-key blind writes."""
import struct

from ..api import FunctionRegistry, OperatorLogic
from .workload import TraceCodec, ZipfSampler, make_rng, partition_span, pick_keys

TABLE = "grep"
READ, WRITE = 0, 1
MAX_LEN = 10


def populate(config):
    rng = make_rng(config, "populate")
    return {TABLE: {k: rng.randrange(1000) for k in range(config.table_size)}}


def generate(config):
    rng = make_rng(config, "events")
    zipf = ZipfSampler(config.table_size, config.skew, rng)
    n = config.txn_len
    for _ in range(config.event_count):
        is_read = rng.random() < config.read_ratio
        keys = pick_keys(zipf, n, config.partitions, partition_span(config, rng))
        if is_read:
            yield (READ, tuple(keys), ())
        else:
            yield (WRITE, tuple(keys), tuple(rng.randrange(1000) for _ in keys))


class GrepSum(OperatorLogic):
    name = "gs"
    tables = (TABLE,)

    def registry(self):
        return FunctionRegistry()

    def state_access(self, eb, sa):
        kind, keys, values = eb.params
        if kind == READ:
            for k in keys:
                sa.read(eb, TABLE, k)
        else:
            for k, v in zip(keys, values):
                sa.write(eb, TABLE, k, v)

    def post_process(self, event, eb):
        if eb.params[0] == READ and all(r is not None for r in eb.results):
            return sum(eb.results)
        return None


def _encode(p):
    kind, keys, values = p
    keys = list(keys) + [0] * (MAX_LEN - len(keys))
    vals = list(values) + [0] * (MAX_LEN - len(values))
    return (kind, len(p[1]), *keys, *vals)


def _decode(t):
    kind, n = t[0], t[1]
    keys = tuple(t[2:2 + n])
    values = tuple(t[2 + MAX_LEN:2 + MAX_LEN + n]) if kind == WRITE else ()
    return (kind, keys, values)


CODEC = TraceCodec(struct.Struct(f"<BB{MAX_LEN}I{MAX_LEN}q"), _encode, _decode)
