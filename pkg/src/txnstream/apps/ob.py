"""OnlineBidding: bids against item stock, price alterations and stock top-ups."""
import struct

from ..api import FunctionRegistry, OperatorLogic
from .workload import TraceCodec, ZipfSampler, make_rng, partition_span, pick_keys

ITEMS = "items"
BID, ALTER, TOP = 0, 1, 2
MAX_LEN = 20


def populate(config):
    rng = make_rng(config, "populate")
    return {ITEMS: {k: (rng.randint(1, 1000), rng.randint(0, 100))
                    for k in range(config.table_size)}}


def generate(config):
    rng = make_rng(config, "events")
    zipf = ZipfSampler(config.table_size, config.skew, rng)
    n = config.txn_len
    for _ in range(config.event_count):
        r = rng.randrange(8)
        if r < 6:
            yield (BID, (zipf(),), (rng.randint(1, 1000), rng.randint(1, 10)))
            continue
        keys = tuple(pick_keys(zipf, n, config.partitions, partition_span(config, rng)))
        if r == 6:
            yield (ALTER, keys, tuple(rng.randint(1, 1000) for _ in keys))
        else:
            yield (TOP, keys, tuple(rng.randint(1, 10) for _ in keys))


def _take(item, ref, qty):
    return (item[0], item[1] - qty)


def _set_price(item, ref, price):
    return (price, item[1])


def _add_qty(item, ref, qty):
    return (item[0], item[1] + qty)


def _can_fill(item, bid_price, qty):
    return item[0] <= bid_price and item[1] >= qty


class OnlineBidding(OperatorLogic):
    name = "ob"
    tables = (ITEMS,)

    def registry(self):
        return FunctionRegistry({"take": _take, "set_price": _set_price, "add_qty": _add_qty},
                                {"can_fill": _can_fill})

    def state_access(self, eb, sa):
        kind, keys, values = eb.params
        if kind == BID:
            price, qty = values
            sa.read_modify(eb, ITEMS, keys[0], ("take", (qty,)), cond=("can_fill", (price, qty)))
        elif kind == ALTER:
            for k, p in zip(keys, values):
                sa.write(eb, ITEMS, k, fun=("set_price", (p,)))
        else:
            for k, d in zip(keys, values):
                sa.read_modify(eb, ITEMS, k, ("add_qty", (d,)))

    def post_process(self, event, eb):
        if eb.params[0] == BID:
            return eb.status.name == "COMMITTED"
        return None


def _encode(p):
    kind, keys, values = p
    keys = list(keys) + [0] * (MAX_LEN - len(keys))
    vals = list(values) + [0] * (MAX_LEN - len(values))
    return (kind, len(p[1]), len(p[2]), *keys, *vals)


def _decode(t):
    kind, nk, nv = t[0], t[1], t[2]
    return (kind, tuple(t[3:3 + nk]), tuple(t[3 + MAX_LEN:3 + MAX_LEN + nv]))


CODEC = TraceCodec(struct.Struct(f"<BBB{MAX_LEN}I{MAX_LEN}q"), _encode, _decode)
