"""Events, blotters, operations and the shared timestamp allocator."""
import enum
import itertools
from dataclasses import dataclass
from typing import Any, List, Optional, Tuple

from .errors import ConfigError

MAX_TS = 2 ** 64 - 1


class TimestampAllocator:
    """Dense logical clock shared by data events and punctuations.

    ``next()`` on an ``itertools.count`` executes as a single C call, so
    concurrent callers never observe the same value.
    """

    def __init__(self, start=0):
        self._counter = itertools.count(start)

    def allocate(self) -> int:
        ts = next(self._counter)
        if ts > MAX_TS:
            raise ConfigError("timestamp counter overflowed 64 bits")
        return ts


class EventKind(enum.Enum):
    DATA = "data"
    PUNCTUATION = "punctuation"


@dataclass(frozen=True)
class Event:
    ts: int
    kind: EventKind = EventKind.DATA
    payload: Any = None

    def __post_init__(self):
        if self.kind is EventKind.PUNCTUATION and self.payload is not None:
            raise ValueError("punctuations carry no payload")

    @property
    def is_punctuation(self):
        return self.kind is EventKind.PUNCTUATION


def make_punctuation(ts: int) -> Event:
    return Event(ts, EventKind.PUNCTUATION)


class Status(enum.Enum):
    PENDING = "pending"
    COMMITTED = "committed"
    REJECTED = "rejected"


class EventBlotter:
    """Scratchpad linking an event's compute step with its postponed state access."""

    __slots__ = ("ts", "params", "results", "status", "output", "event")

    def __init__(self, ts, params=None, event=None):
        self.ts = ts
        self.params = params
        self.results: List[Any] = []
        self.status = Status.PENDING
        self.output = None
        self.event = event

    def new_slot(self) -> int:
        self.results.append(None)
        return len(self.results) - 1

    def commit(self):
        if self.status is not Status.PENDING:
            raise RuntimeError(f"blotter {self.ts} already resolved as {self.status.name}")
        self.status = Status.COMMITTED

    def reject(self):
        if self.status is not Status.PENDING:
            raise RuntimeError(f"blotter {self.ts} already resolved as {self.status.name}")
        self.status = Status.REJECTED
        self.results = [None] * len(self.results)

    def reset(self):
        # between abort-resolution rounds only
        self.status = Status.PENDING
        self.results = [None] * len(self.results)

    def __repr__(self):
        return f"EventBlotter(ts={self.ts}, status={self.status.name}, results={self.results})"


class OpKind(enum.IntEnum):
    READ = 0
    WRITE = 1
    READ_MODIFY = 2


StateRef = Tuple[int, Any]


class Operation:
    """One atomic access of a state transaction.

    ``fun`` is ``(selector, args, ref)`` where ``ref`` optionally names a
    foreign (table, key) whose visible value is passed to the function.
    ``cond`` is ``(selector, args, ref)``; the predicate sees the value of
    ``ref`` as it was before this transaction.
    """

    __slots__ = ("ts", "table", "key", "kind", "value", "fun", "cond",
                 "blotter", "slot", "index")

    def __init__(self, ts, table, key, kind, value=None, fun=None, cond=None,
                 blotter=None, slot=-1, index=0):
        if kind is OpKind.READ and (value is not None or fun is not None):
            raise ValueError("a READ carries neither a value nor a function")
        self.ts = ts
        self.table = table
        self.key = key
        self.kind = kind
        self.value = value
        self.fun = fun
        self.cond = cond
        self.blotter = blotter
        self.slot = slot
        self.index = index  # position in the transaction's program order

    @property
    def target(self) -> StateRef:
        return (self.table, self.key)

    def foreign_refs(self):
        """(table, key) pairs read by this op other than its own target."""
        own = (self.table, self.key)
        refs = []
        if self.cond is not None and self.cond[2] is not None and self.cond[2] != own:
            refs.append(self.cond[2])
        if self.fun is not None and self.fun[2] is not None and self.fun[2] != own:
            refs.append(self.fun[2])
        return refs

    @property
    def has_dependency(self):
        return bool(self.foreign_refs())

    @property
    def reads_target(self):
        """Whether the op's effect depends on the prior value of its own state."""
        if self.kind is not OpKind.WRITE or self.fun is not None:
            return True
        return self.cond is not None and self.cond[2] in (None, (self.table, self.key))

    def __repr__(self):
        return (f"Operation(ts={self.ts}, {self.kind.name}, table={self.table}, "
                f"key={self.key!r})")


class StateTransaction:
    __slots__ = ("ts", "ops", "origin", "blotter")

    def __init__(self, ts, origin=None, blotter=None):
        self.ts = ts
        self.ops: List[Operation] = []
        self.origin = origin
        self.blotter = blotter

    def __len__(self):
        return len(self.ops)

    def __repr__(self):
        return f"StateTransaction(ts={self.ts}, ops={len(self.ops)})"


def read_slot_count(ops) -> int:
    return sum(1 for op in ops if op.kind is not OpKind.WRITE)


Condition = Optional[Tuple[str, tuple, Optional[StateRef]]]
