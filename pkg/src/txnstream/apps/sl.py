"""StreamLedger: deposits into and transfers between account/asset pairs."""
import struct

from ..api import FunctionRegistry, OperatorLogic
from .workload import TraceCodec, ZipfSampler, make_rng

ACCOUNTS = "accounts"
ASSETS = "assets"
DEPOSIT, TRANSFER = 0, 1
MAX_AMOUNT = 100


def populate(config):
    rng = make_rng(config, "populate")
    floor = config.initial_balance
    return {
        ACCOUNTS: {k: rng.randint(floor, 2 * floor) for k in range(config.table_size)},
        ASSETS: {k: rng.randint(floor, 2 * floor) for k in range(config.table_size)},
    }


def generate(config):
    rng = make_rng(config, "events")
    zipf = ZipfSampler(config.table_size, config.skew, rng)
    for _ in range(config.event_count):
        if rng.random() < 0.5:
            yield (DEPOSIT, zipf(), 0, rng.randint(1, MAX_AMOUNT), rng.randint(1, MAX_AMOUNT))
        else:
            src = zipf()
            dst = zipf()
            while dst == src:
                dst = zipf()
            yield (TRANSFER, src, dst, rng.randint(1, MAX_AMOUNT), rng.randint(1, MAX_AMOUNT))


def _add(value, ref, amount):
    return value + amount


def _sub(value, ref, amount):
    return value - amount


def _at_least(value, amount):
    return value >= amount


class StreamLedger(OperatorLogic):
    name = "sl"
    tables = (ACCOUNTS, ASSETS)

    def registry(self):
        return FunctionRegistry({"add": _add, "sub": _sub}, {"at_least": _at_least})

    def state_access(self, eb, sa):
        kind, src, dst, amt_a, amt_s = eb.params
        if kind == DEPOSIT:
            sa.read_modify(eb, ACCOUNTS, src, ("add", (amt_a,)))
            sa.read_modify(eb, ASSETS, src, ("add", (amt_s,)))
            return
        # debits check their own balance; credits check the source balance
        sa.read_modify(eb, ACCOUNTS, src, ("sub", (amt_a,)), cond=("at_least", (amt_a,)))
        sa.read_modify(eb, ASSETS, src, ("sub", (amt_s,)), cond=("at_least", (amt_s,)))
        sa.read_modify(eb, ACCOUNTS, dst, ("add", (amt_a,)),
                       cond=("at_least", (amt_a,), (ACCOUNTS, src)))
        sa.read_modify(eb, ASSETS, dst, ("add", (amt_s,)),
                       cond=("at_least", (amt_s,), (ASSETS, src)))

    def post_process(self, event, eb):
        return eb.status.name == "COMMITTED"


CODEC = TraceCodec(struct.Struct("<BIIqq"), lambda p: p, lambda t: tuple(t))
