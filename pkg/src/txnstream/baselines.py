"""Eager concurrency-control schemes used as comparison points.

All of them execute a transaction on the calling executor's thread as soon
as STATE_ACCESS returns. LOCK, MVLK and PAT admit transactions in timestamp
order through a shared :class:`Sequencer`; NoLock does not order anything.
"""
import threading
import time
from collections import defaultdict

from .core import OpKind, Status

_STRIPES = 64


class Sequencer:
    """Admission counter: ``wait(ts)`` blocks until every smaller timestamp was admitted.

    Timestamps are dense, so punctuations must also be passed through
    ``wait``/``advance`` by one executor.
    """

    def __init__(self, start=0):
        self._next = start
        self._mu = threading.Lock()
        self._waiters = {}

    @property
    def current(self):
        return self._next

    def wait(self, ts):
        with self._mu:
            if self._next == ts:
                return
            if self._next > ts:
                raise RuntimeError(f"timestamp {ts} admitted twice")
            gate = threading.Lock()
            gate.acquire()
            self._waiters[ts] = gate
        gate.acquire()

    def advance(self):
        with self._mu:
            self._next += 1
            gate = self._waiters.pop(self._next, None)
        if gate is not None:
            gate.release()


class Breakdown:
    """Per-executor nanosecond counters; merged after the run."""

    __slots__ = ("useful", "sync", "lock", "total", "txns")

    def __init__(self):
        self.useful = self.sync = self.lock = self.total = 0
        self.txns = 0

    def merge(self, other):
        self.useful += other.useful
        self.sync += other.sync
        self.lock += other.lock
        self.total += other.total
        self.txns += other.txns
        return self

    @property
    def others(self):
        return max(0, self.total - self.useful - self.sync - self.lock)

    def means(self):
        n = max(1, self.txns)
        return {"useful_ns": self.useful / n, "sync_ns": self.sync / n,
                "lock_ns": self.lock / n, "others_ns": self.others / n}


class _Failed(Exception):
    pass


class EagerScheme:
    """Shared execution path: run ops in program order against ``store``, undo on failure."""

    name = "eager"
    dual_mode = False
    ordered = True

    def __init__(self, store, registry, workers=1):
        self.store = store
        self.funs = registry.funs
        self.cfuns = registry.cfuns
        self.workers = workers
        self.sequencer = Sequencer()
        self.breakdowns = [Breakdown() for _ in range(workers)]
        self.trace = []
        self.trace_enabled = False

    def pass_punctuation(self, ts, executor_id):
        if self.ordered and executor_id == 0:
            self.sequencer.wait(ts)
            self.sequencer.advance()

    # hooks -------------------------------------------------------------
    def read_value(self, table, key, ts, own):
        return self.store.tables[table].records[key].committed[1]

    def write_value(self, table, key, ts, value, undo):
        rec = self.store.tables[table][key]
        undo.append((rec, rec.committed))
        rec.committed = (ts, value)

    def rollback(self, undo):
        for rec, old in reversed(undo):
            rec.committed = old

    # -------------------------------------------------------------------
    def run_ops(self, txn, undo):
        """Execute ``txn`` in program order; raises ``_Failed`` on a false condition."""
        ts = txn.ts
        funs, cfuns = self.funs, self.cfuns
        read = self.read_value
        pre = {}
        for op in txn.ops:
            target = (op.table, op.key)
            cond = op.cond
            if cond is not None:
                ref = cond[2]
                cval = pre[ref] if ref in pre else read(ref[0], ref[1], ts, False)
                if not cfuns[cond[0]](cval, *cond[1]):
                    raise _Failed()
            if op.kind is OpKind.READ:
                op.blotter.results[op.slot] = read(op.table, op.key, ts, target in pre)
                continue
            fun = op.fun
            if fun is None:
                new = op.value
            else:
                cur = read(op.table, op.key, ts, target in pre)
                ref = fun[2]
                if ref is None:
                    refv = None
                else:
                    refv = pre[ref] if ref in pre else read(ref[0], ref[1], ts, False)
                new = funs[fun[0]](cur, refv, *fun[1])
            if target not in pre:
                pre[target] = read(op.table, op.key, ts, False)
            self.write_value(op.table, op.key, ts, new, undo)
            if op.kind is OpKind.READ_MODIFY:
                op.blotter.results[op.slot] = new

    def execute(self, txn, executor_id):
        raise NotImplementedError

    def _finish_blotter(self, txn, ok):
        eb = txn.blotter
        if eb is not None and eb.status is Status.PENDING:
            eb.commit() if ok else eb.reject()
        return ok

    def finish(self):
        """Called once after all executors stopped."""

    def breakdown(self):
        total = Breakdown()
        for b in self.breakdowns:
            total.merge(b)
        return total


class NoLockScheme(EagerScheme):
    """No ordering and no locks; an upper bound, not a correct schedule."""

    name = "nolock"
    ordered = False

    def execute(self, txn, executor_id):
        bd = self.breakdowns[executor_id]
        clock = time.perf_counter_ns
        t0 = clock()
        undo = []
        try:
            self.run_ops(txn, undo)
            ok = True
        except _Failed:
            self.rollback(undo)
            ok = False
        t1 = clock()
        bd.useful += t1 - t0
        bd.total += t1 - t0
        bd.txns += 1
        return self._finish_blotter(txn, ok)


class _LockRequest:
    __slots__ = ("ts", "write", "granted", "owner")

    def __init__(self, ts, write, owner):
        self.ts = ts
        self.write = write
        self.granted = False
        self.owner = owner


class LockScheme(EagerScheme):
    """Ordered lock insertion followed by strict two-phase locking.

    A transaction waits for its turn on the permit counter, enqueues all of
    its lock requests, lets the next transaction in, then waits for its
    requests to be granted. Request queues are therefore ts-ordered and no
    deadlock is possible.
    """

    name = "lock"

    def __init__(self, store, registry, workers=1):
        super().__init__(store, registry, workers)
        self._mu = threading.Lock()
        self._queues = defaultdict(list)
        self._conds = [threading.Condition(self._mu) for _ in range(workers)]

    @staticmethod
    def lock_set(txn):
        modes = {}
        for op in txn.ops:
            target = (op.table, op.key)
            modes[target] = modes.get(target, False) or op.kind is not OpKind.READ
            if op.cond is not None and op.cond[2] != target:
                modes.setdefault(op.cond[2], False)
            if op.fun is not None and op.fun[2] is not None:
                modes.setdefault(op.fun[2], False)
        return modes

    def _grant(self, queue):
        # grant the compatible prefix of the queue
        for i, req in enumerate(queue):
            if req.write:
                if i == 0 and not req.granted:
                    req.granted = True
                    req.owner.notify()
                return
            if not req.granted:
                req.granted = True
                req.owner.notify()

    def execute(self, txn, executor_id):
        bd = self.breakdowns[executor_id]
        clock = time.perf_counter_ns
        t0 = clock()
        self.sequencer.wait(txn.ts)
        t1 = clock()
        owner = self._conds[executor_id]
        reqs = []
        with self._mu:
            for target, write in sorted(self.lock_set(txn).items()):
                req = _LockRequest(txn.ts, write, owner)
                q = self._queues[target]
                q.append(req)
                if len(q) == 1 or (not write and all(not r.write for r in q)):
                    req.granted = True
                reqs.append((target, req))
        if self.trace_enabled:
            self.trace.append(("insert", txn.ts))
        self.sequencer.advance()
        t2 = clock()
        with self._mu:
            for _, req in reqs:
                while not req.granted:
                    owner.wait()
        t3 = clock()
        if self.trace_enabled:
            self.trace.append(("granted", txn.ts))
        undo = []
        try:
            self.run_ops(txn, undo)
            ok = True
        except _Failed:
            self.rollback(undo)
            ok = False
        t4 = clock()
        with self._mu:
            if self.trace_enabled:
                self.trace.append(("released", txn.ts))
            for target, req in reqs:
                q = self._queues[target]
                q.remove(req)
                if q:
                    self._grant(q)
                else:
                    del self._queues[target]
        t5 = clock()
        bd.sync += (t1 - t0) + (t3 - t2)
        bd.lock += (t2 - t1) + (t5 - t4)
        bd.useful += t4 - t3
        bd.total += t5 - t0
        bd.txns += 1
        return self._finish_blotter(txn, ok)


class PartitionScheme(EagerScheme):
    """Partition-level exclusive locks admitted in timestamp order."""

    name = "pat"

    def __init__(self, store, registry, workers=1, partitions=None):
        super().__init__(store, registry, workers)
        self.partitions = partitions or workers
        self._mu = threading.Lock()
        self._queues = [[] for _ in range(self.partitions)]
        self._conds = [threading.Condition(self._mu) for _ in range(workers)]
        self._owner = {}

    def partition_of(self, key):
        return hash(key) % self.partitions

    def partitions_of(self, txn):
        parts = set()
        for op in txn.ops:
            parts.add(self.partition_of(op.key))
            if op.cond is not None:
                parts.add(self.partition_of(op.cond[2][1]))
            if op.fun is not None and op.fun[2] is not None:
                parts.add(self.partition_of(op.fun[2][1]))
        return sorted(parts)

    def execute(self, txn, executor_id):
        bd = self.breakdowns[executor_id]
        clock = time.perf_counter_ns
        t0 = clock()
        self.sequencer.wait(txn.ts)
        t1 = clock()
        owner = self._conds[executor_id]
        parts = self.partitions_of(txn)
        with self._mu:
            for p in parts:
                self._queues[p].append(txn.ts)
                self._owner[txn.ts] = owner
        self.sequencer.advance()
        t2 = clock()
        queues = self._queues
        with self._mu:
            while not all(queues[p][0] == txn.ts for p in parts):
                owner.wait()
        t3 = clock()
        if self.trace_enabled:
            for p in parts:
                self.trace.append(("run", p, txn.ts))
        undo = []
        try:
            self.run_ops(txn, undo)
            ok = True
        except _Failed:
            self.rollback(undo)
            ok = False
        t4 = clock()
        with self._mu:
            self._owner.pop(txn.ts, None)
            woken = set()
            for p in parts:
                q = queues[p]
                q.pop(0)
                if q and q[0] not in woken:
                    woken.add(q[0])
                    self._owner[q[0]].notify()
        t5 = clock()
        bd.sync += (t1 - t0) + (t3 - t2)
        bd.lock += (t2 - t1) + (t5 - t4)
        bd.useful += t4 - t3
        bd.total += t5 - t0
        bd.txns += 1
        return self._finish_blotter(txn, ok)


class MvlkScheme(EagerScheme):
    """Multi-versioned state guarded by per-key low-water marks.

    ``lwm(key)`` is the smallest registered, uncommitted writer timestamp of
    the key. Writes proceed when ``ts == lwm``; reads proceed when
    ``ts < lwm`` (or ``ts == lwm`` for the writer itself) and read the newest
    version older than ``ts``.
    """

    name = "mvlk"

    def __init__(self, store, registry, workers=1):
        super().__init__(store, registry, workers)
        self._mu = threading.Lock()
        self._writers = defaultdict(list)
        self._versions = {}
        self._stripes = [threading.Condition(self._mu) for _ in range(_STRIPES)]
        self._active = set()
        self._local = threading.local()

    def _stripe(self, target):
        return self._stripes[hash(target) % _STRIPES]

    def _lwm(self, target):
        w = self._writers.get(target)
        return w[0] if w else None

    def _versions_of(self, target):
        vs = self._versions.get(target)
        if vs is None:
            rec = self.store.tables[target[0]][target[1]]
            vs = self._versions[target] = [rec.committed]
        return vs

    def _await(self, target, ts, write):
        # caller holds self._mu
        cond = self._stripe(target)
        started = None
        while True:
            lwm = self._lwm(target)
            if lwm is None or lwm >= ts:
                if write and lwm != ts:
                    raise RuntimeError(f"write at {ts} on unregistered {target}")
                if started is not None:
                    self._local.wait_ns = getattr(self._local, "wait_ns", 0) + \
                        time.perf_counter_ns() - started
                return
            if started is None:
                started = time.perf_counter_ns()
            cond.wait()

    def read_value(self, table, key, ts, own):
        target = (table, key)
        with self._mu:
            self._await(target, ts, False)
            vs = self._versions_of(target)
            for vts, v in reversed(vs):
                if vts < ts or (own and vts == ts):
                    return v
        raise RuntimeError(f"version of {target} at {ts} was collected")

    def write_value(self, table, key, ts, value, undo):
        target = (table, key)
        with self._mu:
            self._await(target, ts, True)
            vs = self._versions_of(target)
            if vs[-1][0] == ts:
                vs[-1] = (ts, value)
            else:
                vs.append((ts, value))
                undo.append(target)

    def rollback(self, undo):
        with self._mu:
            for target in undo:
                vs = self._versions[target]
                vs.pop()

    def _write_set(self, txn):
        return sorted({(op.table, op.key) for op in txn.ops if op.kind is not OpKind.READ})

    def _prune(self, target, floor):
        vs = self._versions[target]
        # keep the newest version at or below the oldest active reader
        i = len(vs) - 1
        while i > 0 and vs[i][0] >= floor:
            i -= 1
        if i > 0:
            del vs[:i]

    def execute(self, txn, executor_id):
        bd = self.breakdowns[executor_id]
        clock = time.perf_counter_ns
        t0 = clock()
        self.sequencer.wait(txn.ts)
        t1 = clock()
        wset = self._write_set(txn)
        with self._mu:
            for target in wset:
                self._writers[target].append(txn.ts)
            self._active.add(txn.ts)
        self.sequencer.advance()
        t2 = clock()
        self._local.wait_ns = 0
        undo = []
        try:
            self.run_ops(txn, undo)
            ok = True
        except _Failed:
            self.rollback(undo)
            ok = False
        t3 = clock()
        waited = self._local.wait_ns
        with self._mu:
            self._active.discard(txn.ts)
            floor = min(self._active) if self._active else txn.ts
            for target in wset:
                self._writers[target].remove(txn.ts)
                if not self._writers[target]:
                    del self._writers[target]
                if target in self._versions:
                    self._prune(target, min(floor, self.sequencer.current))
                self._stripe(target).notify_all()
        t4 = clock()
        bd.lock += (t2 - t1) + (t4 - t3)
        bd.sync += t1 - t0 + waited
        bd.useful += t3 - t2 - waited
        bd.total += t4 - t0
        bd.txns += 1
        return self._finish_blotter(txn, ok)

    def finish(self):
        for (table, key), vs in self._versions.items():
            rec = self.store.tables[table][key]
            rec.committed = vs[-1]
        self._versions.clear()


SCHEMES = {
    "lock": LockScheme,
    "mvlk": MvlkScheme,
    "pat": PartitionScheme,
    "nolock": NoLockScheme,
}
