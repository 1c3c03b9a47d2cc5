"""Operator contract and the state-access primitives that build transactions."""
from .core import EventBlotter, Operation, OpKind, StateTransaction
from .errors import ApiMisuse


class FunctionRegistry:
    """Named pure functions and predicates referenced by operations.

    Functions are called as ``fun(value, ref_value, *args)`` and predicates as
    ``cfun(value, *args)``. Frozen once the engine is built.
    """

    def __init__(self, funs=None, cfuns=None):
        self.funs = dict(funs or {})
        self.cfuns = dict(cfuns or {})
        self._frozen = False

    def register_fun(self, name, fn):
        if self._frozen:
            raise RuntimeError("registry is frozen")
        self.funs[name] = fn
        return fn

    def register_cfun(self, name, fn):
        if self._frozen:
            raise RuntimeError("registry is frozen")
        self.cfuns[name] = fn
        return fn

    def merge(self, other):
        self.funs.update(other.funs)
        self.cfuns.update(other.cfuns)
        return self

    def freeze(self):
        self._frozen = True
        return self


class OperatorLogic:
    """Three-step operator: pre-process, state access, post-process.

    ``state_access`` may only issue primitives through ``sa``; ``post_process``
    may only look at the blotter's result slots.
    """

    name = "operator"
    tables = ()

    def registry(self) -> FunctionRegistry:
        return FunctionRegistry()

    def pre_process(self, event) -> EventBlotter:
        return EventBlotter(event.ts, event.payload, event)

    def state_access(self, eb, sa):
        raise NotImplementedError

    def post_process(self, event, eb):
        return None


class StateAccess:
    """Executor-local builder for the transaction of one STATE_ACCESS call."""

    def __init__(self, resolve_table, origin=None):
        self._resolve = resolve_table
        self.origin = origin
        self._txn = None

    def begin(self, eb):
        if self._txn is not None:
            raise ApiMisuse("nested STATE_ACCESS")
        self._txn = StateTransaction(eb.ts, self.origin, eb)
        return self._txn

    def end(self):
        txn, self._txn = self._txn, None
        return txn

    def abandon(self):
        self._txn = None

    def _current(self, eb):
        txn = self._txn
        if txn is None:
            raise ApiMisuse("state access primitive issued outside STATE_ACCESS")
        if eb is not txn.blotter:
            raise ApiMisuse("primitive issued with a foreign EventBlotter")
        return txn

    def _cond(self, cond, table, key):
        if cond is None:
            return None
        if len(cond) == 2:
            sel, args = cond
            ref = None
        else:
            sel, args, ref = cond
        if ref is None:
            ref = (table, key)
        else:
            ref = (self._resolve(ref[0]), ref[1])
        return (sel, tuple(args), ref)

    def _fun(self, fun, table, key):
        if fun is None:
            return None
        if isinstance(fun, str):
            return (fun, (), None)
        sel, args, *rest = fun
        ref = rest[0] if rest else None
        if ref is not None:
            ref = (self._resolve(ref[0]), ref[1])
        return (sel, tuple(args), ref)

    def read(self, eb, table, key):
        txn = self._txn
        if txn is None or eb is not txn.blotter:
            txn = self._current(eb)
        t = self._resolve(table)
        ops = txn.ops
        ops.append(Operation(txn.ts, t, key, OpKind.READ, None, None, None, eb,
                             eb.new_slot(), len(ops)))

    def write(self, eb, table, key, value=None, fun=None, cond=None):
        """Set ``state(key) = value`` (or ``fun(current)``) when ``cond`` holds.

        ``cond`` is ``(selector, args)`` on the key itself or
        ``(selector, args, (table, cond_key))`` on a foreign key.
        """
        txn = self._txn
        if txn is None or eb is not txn.blotter:
            txn = self._current(eb)
        t = self._resolve(table)
        if fun is not None:
            fun = self._fun(fun, t, key)
        if cond is not None:
            cond = self._cond(cond, t, key)
        ops = txn.ops
        ops.append(Operation(txn.ts, t, key, OpKind.WRITE, value, fun, cond, eb, -1, len(ops)))

    def read_modify(self, eb, table, key, fun, cond=None):
        txn = self._current(eb)
        t = self._resolve(table)
        txn.ops.append(Operation(txn.ts, t, key, OpKind.READ_MODIFY,
                                 fun=self._fun(fun, t, key), cond=self._cond(cond, t, key),
                                 blotter=eb, slot=eb.new_slot(), index=len(txn.ops)))

    # names used by the operator template
    issue_read = read
    issue_write = write
    issue_read_modify = read_modify


def build_transaction(logic, eb, sa):
    """Run ``logic.state_access`` and return the transaction it issued."""
    sa.begin(eb)
    try:
        logic.state_access(eb, sa)
    except BaseException:
        sa.abandon()
        raise
    return sa.end()
