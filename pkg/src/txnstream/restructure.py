"""Operation chains and their level-by-level parallel evaluation."""
import threading
import time
from bisect import insort
from collections import deque
from dataclasses import dataclass, field
from operator import attrgetter
from typing import List, Optional

from .core import OpKind, Status
from .errors import ConfigError

_TS = attrgetter("ts")
_EMPTY = frozenset()
_INF = float("inf")

SHARED_NOTHING = "shared-nothing"
SHARED_EVERYTHING = "shared-everything"
SHARED_GROUP = "shared-group"


class OperationChain:
    """Timestamp-ordered operations on one (table, key).

    Executors insert concurrently during compute mode; a single worker walks
    the chain during state-access mode.
    """

    __slots__ = ("table", "key", "ref", "ops", "dep_targets", "is_dependency_source", "_lock")

    def __init__(self, table, key, lock=None):
        self.table = table
        self.key = key
        self.ref = (table, key)
        self.ops = []
        self.dep_targets = _EMPTY
        self.is_dependency_source = False
        self._lock = lock if lock is not None else threading.Lock()

    def add_dependency(self, ref):
        if self.dep_targets is _EMPTY:
            self.dep_targets = set()
        self.dep_targets.add(ref)

    @property
    def chains(self):
        return (self,)

    def insert(self, op):
        with self._lock:
            ops = self.ops
            if not ops or ops[-1].ts <= op.ts:
                ops.append(op)
            else:
                insort(ops, op, key=_TS)

    def __len__(self):
        return len(self.ops)

    def __repr__(self):
        return f"OperationChain(table={self.table}, key={self.key!r}, ops={[o.ts for o in self.ops]})"


class MergedChain:
    """A strongly connected group of chains walked as one sequence."""

    __slots__ = ("chains", "ops", "table", "key")

    def __init__(self, chains):
        self.chains = sorted(chains, key=attrgetter("ref"))
        self.ops = sorted((op for c in self.chains for op in c.ops), key=_TS)
        self.table, self.key = self.chains[0].ref

    @property
    def ref(self):
        return (self.table, self.key)

    @property
    def refs(self):
        return {c.ref for c in self.chains}

    def __len__(self):
        return len(self.ops)

    def __repr__(self):
        return f"MergedChain({[c.ref for c in self.chains]})"


def _group_of(ref, groups):
    # by key alone: ints spread evenly and match key-mod-P partitions
    return hash(ref[1]) % groups


_LOCK_STRIPES = 64


class ChainPool:
    """Chains of one batch keyed by (table, key).

    ``pools`` groups the chains by placement group (hash of the state
    reference). Chains share a fixed set of striped insertion locks.
    """

    def __init__(self, groups=1):
        self.groups = max(1, groups)
        self.chains_by_ref = {}
        self.dependency_sources = set()
        self.op_count = 0
        self._locks = [threading.Lock() for _ in range(_LOCK_STRIPES)]

    def chain(self, ref):
        c = self.chains_by_ref.get(ref)
        if c is None:
            c = self.chains_by_ref.setdefault(
                ref, OperationChain(ref[0], ref[1], self._locks[hash(ref) % _LOCK_STRIPES]))
        return c

    def get(self, ref):
        return self.chains_by_ref.get(ref)

    @property
    def pools(self):
        out = [dict() for _ in range(self.groups)]
        for ref, c in self.chains_by_ref.items():
            out[_group_of(ref, self.groups)][ref] = c
        return out

    def chains(self):
        return self.chains_by_ref.values()

    def __len__(self):
        return len(self.chains_by_ref)


def decompose(txn, pool):
    """Insert each operation of ``txn`` into the chain of the state it targets."""
    chains = pool.chains_by_ref
    locks = pool._locks
    for op in txn.ops:
        ref = (op.table, op.key)
        chain = chains.get(ref)
        if chain is None:
            chain = chains.setdefault(
                ref, OperationChain(op.table, op.key, locks[hash(ref) % _LOCK_STRIPES]))
        lock = chain._lock
        lock.acquire()
        ops = chain.ops
        if not ops or ops[-1].ts <= op.ts:
            ops.append(op)
        else:
            insort(ops, op, key=_TS)
        lock.release()
        if op.cond is not None or op.fun is not None:
            for dep in op.foreign_refs():
                chain.add_dependency(dep)
                pool.dependency_sources.add(dep)
    pool.op_count += len(txn.ops)


@dataclass
class DependencyLevels:
    levels: List[list]
    merged_components: List[MergedChain] = field(default_factory=list)

    def __len__(self):
        return len(self.levels)


def _strongly_connected(nodes, edges):
    """Iterative Tarjan; components come out dependencies-first."""
    index = {}
    low = {}
    on_stack = set()
    stack = []
    out = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(edges.get(root, ())))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(edges.get(nxt, ()))))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                out.append(comp)
    return out


def build_levels(pool):
    """Partition the batch's chains into dependency levels.

    A chain lands one level above the deepest chain it reads from; cycles are
    collapsed into a single ts-ordered ``MergedChain``.
    """
    chains = {c.ref: c for c in pool.chains()}
    for ref in pool.dependency_sources:
        c = chains.get(ref)
        if c is not None:
            c.is_dependency_source = True
    if not chains:
        return DependencyLevels([])
    if not pool.dependency_sources:
        return DependencyLevels([list(chains.values())])

    edges = {}
    for ref, c in chains.items():
        deps = [d for d in c.dep_targets if d != ref and d in chains]
        if deps:
            edges[ref] = deps
    comps = _strongly_connected(list(chains), edges)

    comp_of = {}
    level_of = {}
    tasks = []
    merged = []
    for i, comp in enumerate(comps):
        for ref in comp:
            comp_of[ref] = i
        depth = 0
        for ref in comp:
            for d in edges.get(ref, ()):
                j = comp_of[d]
                if j != i:
                    depth = max(depth, level_of[j] + 1)
        level_of[i] = depth
        if len(comp) == 1:
            tasks.append((depth, chains[comp[0]]))
        else:
            m = MergedChain([chains[r] for r in comp])
            merged.append(m)
            tasks.append((depth, m))
    levels = [[] for _ in range(max(level_of.values()) + 1)]
    for depth, task in tasks:
        levels[depth].append(task)
    return DependencyLevels(levels, merged)


@dataclass(frozen=True)
class PlacementPolicy:
    kind: str = SHARED_NOTHING
    group_size: int = 1
    steal: Optional[bool] = None

    @classmethod
    def parse(cls, text, steal=None):
        text = text.strip().lower()
        if text == SHARED_NOTHING:
            return cls(SHARED_NOTHING, 1, steal)
        if text == SHARED_EVERYTHING:
            return cls(SHARED_EVERYTHING, 1, steal)
        if text.startswith(SHARED_GROUP):
            _, _, g = text.partition(":")
            try:
                size = int(g)
            except ValueError:
                raise ConfigError(f"bad placement {text!r}; expected shared-group:<size>") from None
            if size < 1:
                raise ConfigError("group size must be >= 1")
            return cls(SHARED_GROUP, size, steal)
        raise ConfigError(f"unknown placement policy {text!r}")

    @property
    def stealing(self):
        if self.steal is not None:
            return self.steal
        return self.kind != SHARED_NOTHING

    def queue_count(self, workers):
        if self.kind == SHARED_NOTHING:
            return workers
        if self.kind == SHARED_EVERYTHING:
            return 1
        if workers % self.group_size:
            raise ConfigError(f"group size {self.group_size} does not divide {workers} workers")
        return workers // self.group_size

    def queue_of_worker(self, wid, workers):
        if self.kind == SHARED_NOTHING:
            return wid
        if self.kind == SHARED_EVERYTHING:
            return 0
        return wid // self.group_size

    def __str__(self):
        if self.kind == SHARED_GROUP:
            return f"{SHARED_GROUP}:{self.group_size}"
        return self.kind


@dataclass
class Schedule:
    """Per-level task queues plus the worker-to-queue map."""

    levels: List[List[list]]
    worker_queue: List[int]
    steal: bool

    def queues(self, level):
        return [deque(q) for q in self.levels[level]]


def assign_work(levels, policy, workers):
    nq = policy.queue_count(workers)
    plan = []
    for level in levels.levels if isinstance(levels, DependencyLevels) else levels:
        queues = [[] for _ in range(nq)]
        if nq == 1:
            queues[0].extend(level)
        else:
            for task in level:
                queues[_group_of(task.ref, nq)].append(task)
        plan.append(queues)
    return Schedule(plan, [policy.queue_of_worker(w, workers) for w in range(workers)],
                    policy.stealing)


@dataclass
class BatchResult:
    committed: List[int]
    aborted: List[int]
    rounds: int = 1
    levels: int = 0
    chains: int = 0
    peak_versions: int = 0
    tasks_per_worker: List[int] = field(default_factory=list)


class BatchEvaluator:
    """Evaluates one batch of decomposed transactions with ``workers`` cooperating threads.

    Every worker calls :meth:`work`; the workers meet at a barrier after each
    level. When conditions fail, transactions whose failure cannot have been
    caused by another failing transaction are excluded and the batch is
    replayed from its pre-batch state until a round finishes without failures.
    """

    def __init__(self, store, registry, policy, workers, trace=False):
        self.store = store
        self.funs = registry.funs
        self.cfuns = registry.cfuns
        self.policy = policy
        self.workers = workers
        self.trace_enabled = trace
        self.trace = []
        self.batch_id = -1
        self.max_peak_versions = 0
        self._barrier = threading.Barrier(workers, action=self._advance)
        self._reset_state()

    def _reset_state(self):
        self.txns = []
        self.levels = DependencyLevels([])
        self.schedule = None
        self.excluded = set()
        self.failed = set()
        self.failed_ops = set()
        self.rounds = 0
        self.peak_versions = 0
        self.done = True
        self._level = 0
        self._queues = []
        self.tasks_per_worker = [0] * self.workers
        self.useful_ns = [0] * self.workers
        self.sync_ns = [0] * self.workers

    def prepare(self, pool, txns):
        self._reset_state()
        self.batch_id += 1
        self.txns = sorted(txns, key=_TS)
        self.levels = build_levels(pool)
        self.chain_count = len(pool)
        self.schedule = assign_work(self.levels, self.policy, self.workers)
        self.mv_refs = pool.dependency_sources
        self._tables = [t.records for t in self.store.tables]
        self.rounds = 1
        self.done = not self.levels.levels
        if not self.done:
            self._level = 0
            self._queues = self.schedule.queues(0)

    def abort_barrier(self):
        self._barrier.abort()

    def work(self, wid):
        barrier = self._barrier
        clock = time.perf_counter_ns
        while not self.done:
            t0 = clock()
            self._run_level(wid)
            t1 = clock()
            barrier.wait()
            self.useful_ns[wid] += t1 - t0
            self.sync_ns[wid] += clock() - t1

    def run(self):
        """Evaluate the prepared batch using freshly spawned worker threads."""
        if self.workers == 1:
            self.work(0)
        else:
            errors = []

            def target(w):
                try:
                    self.work(w)
                except threading.BrokenBarrierError:
                    pass
                except BaseException as exc:
                    errors.append(exc)
                    self._barrier.abort()

            threads = [threading.Thread(target=target, args=(w,)) for w in range(self.workers)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            if errors:
                raise errors[0]
        return self.finish()

    def _run_level(self, wid):
        queues = self._queues
        if not queues:
            return
        schedule = self.schedule
        n = self._run_tasks(queues[schedule.worker_queue[wid]].popleft, wid)
        if schedule.steal and len(queues) > 1:
            for q in queues:
                n += self._run_tasks(q.pop, wid)
        self.tasks_per_worker[wid] += n

    def _run_tasks(self, take, wid):
        """Walk tasks obtained from ``take`` until it raises IndexError; returns the count."""
        tables = self._tables
        write = self.store.write_record
        funs = self.funs
        cfuns = self.cfuns
        excluded = self.excluded
        failed = self.failed
        failed_ops = self.failed_ops
        mv_refs = self.mv_refs
        trace = self.trace if self.trace_enabled else None
        READ = OpKind.READ
        RM = OpKind.READ_MODIFY
        n = 0
        while True:
            try:
                task = take()
            except IndexError:
                return n
            n += 1
            merged = task.__class__ is MergedChain
            if not merged:
                rec = tables[task.table][task.key]
                mv = task.is_dependency_source
            for op in task.ops:
                ts = op.ts
                if ts in excluded:
                    continue
                if merged:
                    rec = tables[op.table][op.key]
                    mv = (op.table, op.key) in mv_refs
                cond = op.cond
                if cond is not None:
                    ct, ck = cond[2]
                    crec = rec if (ct == op.table and ck == op.key) else tables[ct][ck]
                    if not cfuns[cond[0]](crec.visible(ts)[1], *cond[1]):
                        failed.add(ts)
                        failed_ops.add(op)
                        if trace is not None:
                            trace.append((self.batch_id, self._level, wid, op.table, op.key, ts,
                                          op.kind.name, "cond-failed"))
                        continue
                kind = op.kind
                if kind is READ:
                    op.blotter.results[op.slot] = rec.visible(ts, True)[1]
                else:
                    fun = op.fun
                    if fun is None:
                        new = op.value
                    else:
                        ref = fun[2]
                        refv = tables[ref[0]][ref[1]].visible(ts)[1] if ref is not None else None
                        new = funs[fun[0]](rec.visible(ts, True)[1], refv, *fun[1])
                    write(rec, ts, new, mv)
                    if kind is RM:
                        op.blotter.results[op.slot] = new
                if trace is not None:
                    trace.append((self.batch_id, self._level, wid, op.table, op.key, ts,
                                  kind.name, "ok"))

    def _advance(self):
        # runs once per level, in whichever worker reaches the barrier last
        nxt = self._level + 1
        if nxt < len(self.levels.levels):
            self._level = nxt
            self._queues = self.schedule.queues(nxt)
            return
        self.peak_versions = max(self.peak_versions, self.store.batch_version_count())
        if not self.failed:
            self.done = True
            return
        genuine = self.genuine_aborts(self.failed, self.failed_ops)
        assert genuine, "abort resolution made no progress"
        self.excluded |= genuine
        self.failed = set()
        self.failed_ops = set()
        self.store.reset_batch()
        for txn in self.txns:
            if txn.ts not in self.excluded and txn.blotter is not None:
                txn.blotter.reset()
        self.rounds += 1
        self._level = 0
        self._queues = self.schedule.queues(0)

    def genuine_aborts(self, failed, failed_ops=()):
        """Failed transactions that no earlier failing transaction could have influenced.

        Walking the batch in ts order, a transaction is tainted when it reads a
        state that an earlier suspect transaction wrote (or would have
        written). Untainted failures are exactly the serial aborts. A genuine
        abort only taints the writes it actually applied; a tainted
        transaction taints every state it may write.
        """
        bad_write = {}
        genuine = set()
        excluded = self.excluded
        for txn in self.txns:
            ts = txn.ts
            if ts in excluded:
                continue
            tainted = False
            if bad_write:
                for op in txn.ops:
                    if op.reads_target and bad_write.get((op.table, op.key), _INF) < ts:
                        tainted = True
                        break
                    if any(bad_write.get(r, _INF) < ts for r in op.foreign_refs()):
                        tainted = True
                        break
            is_failed = ts in failed
            if is_failed and not tainted:
                genuine.add(ts)
                for op in txn.ops:
                    if op.kind is not OpKind.READ and op not in failed_ops:
                        bad_write.setdefault((op.table, op.key), ts)
            elif tainted:
                for op in txn.ops:
                    if op.kind is not OpKind.READ:
                        bad_write.setdefault((op.table, op.key), ts)
        return genuine

    def finish(self):
        """Garbage-collect versions and resolve every blotter of the batch."""
        self.max_peak_versions = max(self.max_peak_versions, self.peak_versions)
        self.store.gc_batch()
        committed, aborted = [], []
        for txn in self.txns:
            eb = txn.blotter
            if txn.ts in self.excluded:
                if eb is not None and eb.status is Status.PENDING:
                    eb.reject()
                aborted.append(txn.ts)
            else:
                if eb is not None and eb.status is Status.PENDING:
                    eb.commit()
                committed.append(txn.ts)
        return BatchResult(committed, aborted, self.rounds, len(self.levels),
                           getattr(self, "chain_count", 0), self.peak_versions,
                           list(self.tasks_per_worker))


def evaluate_batch(pool, store, registry, txns, policy=None, workers=1, trace=False):
    """Build levels for ``pool`` and evaluate the batch to completion."""
    ev = BatchEvaluator(store, registry, policy or PlacementPolicy(), workers, trace)
    ev.prepare(pool, txns)
    result = ev.run()
    result.trace = ev.trace
    return result
