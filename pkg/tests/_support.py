"""Small operator and helpers shared by the unit and acceptance tests."""
from txnstream.api import FunctionRegistry, OperatorLogic, StateAccess, build_transaction
from txnstream.core import EventBlotter
from txnstream.oracle import SerialOracle
from txnstream.restructure import ChainPool, decompose
from txnstream.state import StateStore


def _add(value, ref, amount):
    return value + amount


def _mix(value, ref, amount):
    # depends on a foreign value, stays small
    return (value + (ref % 7) + amount) % 1000


def _ident(value, ref):
    return value


def _ge(value, bound):
    return value >= bound


REGISTRY = FunctionRegistry({"add": _add, "mix": _mix, "ident": _ident}, {"ge": _ge}).freeze()


class KV(OperatorLogic):
    """Payload is a list of op specs.

    ``("r", t, k)``, ``("w", t, k, value)``, ``("rm", t, k, fun, args, ref)`` and
    ``("cw", t, k, value, bound, cond_ref)``; refs are ``(table, key)`` or None.
    """

    name = "kv"
    tables = ("a", "b")

    def registry(self):
        return REGISTRY

    def state_access(self, eb, sa):
        for spec in eb.params:
            tag, t, k = spec[:3]
            if tag == "r":
                sa.read(eb, t, k)
            elif tag == "w":
                sa.write(eb, t, k, spec[3])
            elif tag == "rm":
                fun, args, ref = spec[3:]
                sa.read_modify(eb, t, k, (fun, args, ref) if ref else (fun, args))
            elif tag == "cw":
                value, bound, cref = spec[3:]
                cond = ("ge", (bound,), cref) if cref else ("ge", (bound,))
                sa.write(eb, t, k, value, cond=cond)
            else:
                raise ValueError(tag)

    def post_process(self, event, eb):
        return tuple(eb.results)


def kv_tables(n=8, init=10):
    return {"a": {k: init for k in range(n)}, "b": {k: init for k in range(n)}}


def build_txns(payloads, start=0):
    """Transactions for ``payloads`` with ts = start, start+1, ..."""
    logic = KV()
    ids = {"a": 0, "b": 1}
    sa = StateAccess(lambda t: t if isinstance(t, int) else ids[t])
    txns = []
    for i, p in enumerate(payloads):
        eb = EventBlotter(start + i, p)
        txns.append(build_transaction(logic, eb, sa))
    return txns


def oracle_of(payloads, tables):
    oracle = SerialOracle(KV(), tables)
    outcomes = []
    for txn in build_txns(payloads):
        ok = oracle.execute(txn)
        outcomes.append((ok, tuple(txn.blotter.results) if ok else None))
    return oracle, outcomes


def pool_of(txns, order=None, groups=1):
    pool = ChainPool(groups)
    for txn in (order if order is not None else txns):
        decompose(txn, pool)
    return pool


def store_of(tables):
    return StateStore.from_dict(tables)


VERDICTS = {}


def record_verdict(number, ok, detail):
    """Remember one acceptance verdict; the terminal summary prints them all."""
    VERDICTS[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok
