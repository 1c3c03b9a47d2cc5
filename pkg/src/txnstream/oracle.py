"""Single-threaded reference execution in ascending timestamp order."""

from .api import StateAccess, build_transaction
from .core import EventBlotter, EventKind, OpKind, Status
from .scheduler import Output
from .state import digest_mapping


class SerialOracle:
    """Runs each transaction to completion before starting the next.

    State lives in plain dicts, independent of the engine's versioned store.
    A transaction whose condition fails is undone and its event rejected.
    """

    def __init__(self, logic, tables, registry=None):
        self.logic = logic
        self.registry = registry or logic.registry()
        self.names = list(tables)
        self.state = [dict(tables[n]) for n in self.names]
        self._ids = {n: i for i, n in enumerate(self.names)}
        self.outputs = []

    def _resolve(self, ref):
        return ref if isinstance(ref, int) else self._ids[ref]

    def execute(self, txn):
        funs, cfuns = self.registry.funs, self.registry.cfuns
        state = self.state
        before = {}
        for op in txn.ops:
            t, k = op.table, op.key
            if op.cond is not None:
                sel, args, (ct, ck) = op.cond
                seen = before[(ct, ck)] if (ct, ck) in before else state[ct][ck]
                if not cfuns[sel](seen, *args):
                    for (bt, bk), old in before.items():
                        state[bt][bk] = old
                    return False
            if op.kind is OpKind.READ:
                op.blotter.results[op.slot] = state[t][k]
                continue
            cur = state[t][k]
            if op.fun is None:
                new = op.value
            else:
                sel, args, ref = op.fun
                if ref is None:
                    refv = None
                else:
                    refv = before[ref] if ref in before else state[ref[0]][ref[1]]
                new = funs[sel](cur, refv, *args)
            before.setdefault((t, k), cur)
            state[t][k] = new
            if op.kind is OpKind.READ_MODIFY:
                op.blotter.results[op.slot] = new
        return True

    def run(self, events):
        logic = self.logic
        sa = StateAccess(self._resolve, origin="oracle")
        last = -1
        for event in events:
            if event.ts <= last:
                raise ValueError("oracle input must be in ascending timestamp order")
            last = event.ts
            if event.kind is EventKind.PUNCTUATION:
                continue
            try:
                eb = logic.pre_process(event)
                txn = build_transaction(logic, eb, sa)
            except Exception:
                eb = EventBlotter(event.ts, event=event)
                eb.reject()
                txn = None
            if txn is not None:
                if self.execute(txn):
                    eb.commit()
                else:
                    eb.reject()
            try:
                value = logic.post_process(event, eb)
                status = eb.status
            except Exception:
                value, status = None, Status.REJECTED
            self.outputs.append(Output(event.ts, status, tuple(eb.results), value))
        return self.outputs

    def snapshot(self):
        return {n: self.state[i] for i, n in enumerate(self.names)}

    def digest(self):
        return {n: digest_mapping(self.state[i]) for i, n in enumerate(self.names)}


def run_oracle(logic, tables, events):
    oracle = SerialOracle(logic, tables)
    oracle.run(events)
    return oracle
