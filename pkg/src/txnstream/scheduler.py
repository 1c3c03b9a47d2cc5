"""Dual-mode executors, punctuation-driven ingest and the engine that ties them together."""
import enum
import logging
import queue
import threading
import time

from .api import StateAccess, build_transaction
from .baselines import SCHEMES, Breakdown
from .core import Event, EventBlotter, EventKind, StateTransaction, Status, TimestampAllocator, \
    make_punctuation
from .errors import ConfigError, EngineFailure
from .restructure import BatchEvaluator, ChainPool, PlacementPolicy, decompose

log = logging.getLogger(__name__)

END = None  # end-of-stream marker on executor queues


class Mode(enum.Enum):
    COMPUTE = "compute"
    STATE_ACCESS = "state-access"


class ExecutorState:
    def __init__(self, eid, queue_size=8):
        self.id = eid
        self.mode = Mode.COMPUTE
        self.cache = []
        self.queue = queue.Queue(maxsize=queue_size)
        self.outputs = []
        self.latencies = []
        self.emitted_at = []
        self.punctuations = 0
        self.breakdown = Breakdown()


def stamp(payloads, interval, allocator=None):
    """Yield timestamped data events with a punctuation after every ``interval`` of them.

    The stream always closes with a final punctuation.
    """
    if interval < 1:
        raise ConfigError(f"punctuation interval must be >= 1, got {interval}")
    alloc = allocator or TimestampAllocator()
    n = 0
    for payload in payloads:
        yield Event(alloc.allocate(), EventKind.DATA, payload)
        n += 1
        if n % interval == 0:
            yield make_punctuation(alloc.allocate())
    yield make_punctuation(alloc.allocate())


def ingest(events, executors, interval, allocator=None, should_stop=None):
    """Round-robin data events over executor queues and broadcast punctuations.

    Each executor receives one list per interval: its share of the data
    events followed by the punctuation. Returns ``(data_events, punctuations)``.
    """
    k = len(executors)
    chunks = [[] for _ in range(k)]
    nxt = 0
    data = puncts = 0

    def put(ex, item):
        while True:
            try:
                ex.queue.put(item, timeout=0.2)
                return
            except queue.Full:
                if should_stop is not None and should_stop():
                    raise EngineFailure("executor stopped while ingest was blocked")

    for ev in stamp(events, interval, allocator):
        if ev.kind is EventKind.PUNCTUATION:
            puncts += 1
            for ex, chunk in zip(executors, chunks):
                chunk.append(ev)
                put(ex, chunk)
            chunks = [[] for _ in range(k)]
        else:
            chunks[nxt].append(ev)
            nxt = (nxt + 1) % k
            data += 1
    for ex in executors:
        put(ex, END)
    return data, puncts


class TStreamScheme:
    """Postpones transactions into operation chains and evaluates them per batch."""

    name = "tstream"
    dual_mode = True

    def __init__(self, store, registry, workers=1, policy=None, trace=False):
        self.store = store
        self.workers = workers
        self.policy = policy or PlacementPolicy()
        self.groups = self.policy.queue_count(workers)
        self.evaluator = BatchEvaluator(store, registry, self.policy, workers, trace)
        self.pool = ChainPool(self.groups)
        self.txns = []
        self.batches = []
        self.event_log = [] if trace else None
        self._enter = threading.Barrier(workers, action=self._begin_batch)
        self._exit = threading.Barrier(workers, action=self._end_batch)
        self._action_ns = 0
        self.breakdowns = [Breakdown() for _ in range(workers)]

    @property
    def trace(self):
        return self.evaluator.trace

    def submit(self, txn, executor_id):
        t0 = time.perf_counter_ns()
        if txn.ops:
            decompose(txn, self.pool)
        self.txns.append(txn)
        bd = self.breakdowns[executor_id]
        bd.total += time.perf_counter_ns() - t0
        bd.txns += 1

    def _begin_batch(self):
        t0 = time.perf_counter_ns()
        if self.event_log is not None:
            self.event_log.append(("evaluate", self.evaluator.batch_id + 1))
        self.evaluator.prepare(self.pool, self.txns)
        self.pool = ChainPool(self.groups)
        self.txns = []
        self._action_ns = time.perf_counter_ns() - t0

    def _end_batch(self):
        t0 = time.perf_counter_ns()
        result = self.evaluator.finish()
        self.batches.append(result)
        if self.event_log is not None:
            self.event_log.append(("release", self.evaluator.batch_id))
        self._action_ns = time.perf_counter_ns() - t0

    def txn_start(self, executor_id):
        """Rendezvous, evaluate the batch cooperatively, rendezvous again."""
        clock = time.perf_counter_ns
        ev = self.evaluator
        t0 = clock()
        self._enter.wait()
        t1 = clock()
        enter_action = self._action_ns
        ev.work(executor_id)
        t2 = clock()
        self._exit.wait()
        t3 = clock()
        exit_action = self._action_ns
        bd = self.breakdowns[executor_id]
        bd.total += t3 - t0
        bd.useful += ev.useful_ns[executor_id]
        bd.sync += max(0, (t1 - t0) - enter_action) + max(0, (t3 - t2) - exit_action) \
            + ev.sync_ns[executor_id]

    def abort(self):
        self._enter.abort()
        self._exit.abort()
        self.evaluator.abort_barrier()

    def finish(self):
        pass

    def breakdown(self):
        total = Breakdown()
        for b in self.breakdowns:
            total.merge(b)
        return total

    @property
    def peak_versions(self):
        return self.evaluator.max_peak_versions


def make_scheme(name, store, registry, workers, policy=None, trace=False, partitions=None):
    if workers < 1:
        raise ConfigError(f"need at least one executor, got {workers}")
    name = name.lower()
    if name == "tstream":
        return TStreamScheme(store, registry, workers, policy, trace)
    try:
        cls = SCHEMES[name]
    except KeyError:
        raise ConfigError(f"unknown scheme {name!r}") from None
    if name == "pat":
        scheme = cls(store, registry, workers, partitions=partitions)
    else:
        scheme = cls(store, registry, workers)
    scheme.trace_enabled = trace
    return scheme


class Output:
    __slots__ = ("ts", "status", "results", "value")

    def __init__(self, ts, status, results, value):
        self.ts = ts
        self.status = status
        self.results = results
        self.value = value

    def key(self):
        return (self.ts, self.status.name, self.results, self.value)

    def __repr__(self):
        return f"Output(ts={self.ts}, {self.status.name}, results={self.results}, value={self.value!r})"


class Engine:
    """One operator replicated over ``workers`` executors sharing one state store."""

    def __init__(self, logic, store, scheme="tstream", workers=1, interval=500,
                 policy=None, registry=None, trace=False, partitions=None, queue_size=8):
        if interval < 1:
            raise ConfigError(f"punctuation interval must be >= 1, got {interval}")
        self.logic = logic
        self.store = store
        self.registry = registry or logic.registry().freeze()
        self.workers = workers
        self.interval = interval
        self.policy = policy or PlacementPolicy()
        self.scheme = make_scheme(scheme, store, self.registry, workers, self.policy, trace,
                                  partitions)
        self.executors = [ExecutorState(i, queue_size) for i in range(workers)]
        self.allocator = TimestampAllocator()
        self.errors = []
        self.elapsed = 0.0
        self._resolve = {t.name: t.id for t in store.tables}

    def resolve_table(self, ref):
        try:
            return self._resolve[ref]
        except KeyError:
            if isinstance(ref, int) and 0 <= ref < len(self.store.tables):
                return ref
            raise

    # executor side -------------------------------------------------------
    def _emit(self, ex, event, eb, t_in, clock):
        logic = self.logic
        try:
            value = logic.post_process(event, eb)
            status = eb.status
        except Exception:
            log.exception("post_process failed for ts=%s", event.ts)
            value = None
            status = Status.REJECTED
        t_out = clock()
        ex.outputs.append(Output(event.ts, status, tuple(eb.results), value))
        ex.latencies.append(t_out - t_in)
        ex.emitted_at.append(t_out)

    def run_executor_loop(self, eid):
        ex = self.executors[eid]
        logic = self.logic
        scheme = self.scheme
        dual = scheme.dual_mode
        sa = StateAccess(self.resolve_table, origin=logic.name)
        clock = time.perf_counter_ns
        get = ex.queue.get
        while True:
            chunk = get()
            if chunk is END:
                break
            for event in chunk:
                if event.kind is EventKind.PUNCTUATION:
                    ex.punctuations += 1
                    if dual:
                        ex.mode = Mode.STATE_ACCESS
                        scheme.txn_start(eid)
                        ex.mode = Mode.COMPUTE
                        for e, eb, t_in in ex.cache:
                            self._emit(ex, e, eb, t_in, clock)
                        ex.cache.clear()
                    else:
                        scheme.pass_punctuation(event.ts, eid)
                    continue
                t_in = clock()
                try:
                    eb = logic.pre_process(event)
                    txn = build_transaction(logic, eb, sa)
                except Exception:
                    log.exception("operator failed on ts=%s", event.ts)
                    eb = EventBlotter(event.ts, event=event)
                    eb.reject()
                    txn = StateTransaction(event.ts, logic.name, eb)
                    if dual:
                        ex.cache.append((event, eb, t_in))
                        continue
                if dual:
                    scheme.submit(txn, eid)
                    ex.cache.append((event, eb, t_in))
                else:
                    scheme.execute(txn, eid)
                    self._emit(ex, event, eb, t_in, clock)

    def _executor_main(self, eid):
        try:
            self.run_executor_loop(eid)
        except threading.BrokenBarrierError:
            pass
        except BaseException as exc:
            log.error("executor %d died: %r", eid, exc)
            self.errors.append((eid, exc))
            if hasattr(self.scheme, "abort"):
                self.scheme.abort()

    # driver side -------------------------------------------------------
    def run(self, payloads):
        """Stream ``payloads`` through the executors; returns when every event is resolved."""
        threads = [threading.Thread(target=self._executor_main, args=(i,), daemon=True,
                                    name=f"executor-{i}")
                   for i in range(self.workers)]
        t0 = time.perf_counter()
        for t in threads:
            t.start()
        try:
            self.data_events, self.punctuations = ingest(
                payloads, self.executors, self.interval, self.allocator,
                should_stop=lambda: bool(self.errors))
        except EngineFailure:
            pass
        for t in threads:
            t.join()
        self.elapsed = time.perf_counter() - t0
        if self.errors:
            eid, exc = self.errors[0]
            raise EngineFailure(f"executor {eid} died: {exc!r}") from exc
        self.scheme.finish()
        return self.outputs()

    def outputs(self):
        out = [o for ex in self.executors for o in ex.outputs]
        out.sort(key=lambda o: o.ts)
        return out
