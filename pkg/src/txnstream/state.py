"""In-memory tables with batch-scoped multiversioning."""
import hashlib

from .errors import KeyNotFound, OrderViolation

INIT_TS = -1


class VersionedRecord:
    """One state cell.

    ``committed`` is ``(write_ts, value)``. ``extra`` holds in-batch versions
    for records other chains depend on; ``pre`` is the value the record had
    when the batch started, captured on its first batch write. ``prev`` is the
    version an in-place write replaced, so a transaction can still see the
    value its own key had before it.
    """

    __slots__ = ("key", "committed", "extra", "pre", "prev")

    def __init__(self, key, value, ts=INIT_TS):
        self.key = key
        self.committed = (ts, value)
        self.extra = []
        self.pre = None
        self.prev = None

    @property
    def value(self):
        return self.extra[-1][1] if self.extra else self.committed[1]

    @property
    def latest_ts(self):
        return self.extra[-1][0] if self.extra else self.committed[0]

    def version_count(self):
        return 1 + len(self.extra)

    def visible(self, ts, own_write=False):
        """Value written by the largest write_ts below ``ts`` (or equal, for own writes)."""
        for vts, v in reversed(self.extra):
            if vts < ts or (own_write and vts == ts):
                return vts, v
        cts, cv = self.committed
        if cts < ts or (own_write and cts == ts):
            return cts, cv
        if cts == ts and self.prev is not None:
            return self.prev
        # in-place record already overwritten by a later write of this batch
        if self.pre is not None and self.pre[0] < ts:
            return self.pre
        raise OrderViolation(f"no version of {self.key!r} visible at ts={ts}")

    def __repr__(self):
        return f"VersionedRecord({self.key!r}, committed={self.committed}, extra={self.extra})"


class Table:
    def __init__(self, tid, name, records=None):
        self.id = tid
        self.name = name
        self.records = {}
        for key, value in (records or {}).items():
            self.records[key] = VersionedRecord(key, value)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, key):
        try:
            return self.records[key]
        except KeyError:
            raise KeyNotFound(f"{self.name}[{key!r}]") from None

    def snapshot(self):
        return {k: r.value for k, r in self.records.items()}


def canonical(value):
    if isinstance(value, (set, frozenset)):
        return tuple(sorted(value))
    if isinstance(value, (tuple, list)):
        return tuple(canonical(v) for v in value)
    return value


def digest_mapping(mapping):
    """64-bit hex digest over the sorted (key, value) pairs of one table."""
    h = hashlib.blake2b(digest_size=8)
    for key in sorted(mapping):
        h.update(repr((key, canonical(mapping[key]))).encode())
        h.update(b"\n")
    return h.hexdigest()


class StateStore:
    def __init__(self):
        self.tables = []
        self._by_name = {}
        self._touched = []

    @classmethod
    def from_dict(cls, tables):
        """Build from ``{name: {key: value}}``; table ids follow insertion order."""
        store = cls()
        for name, records in tables.items():
            store.add_table(name, records)
        return store

    def add_table(self, name, records):
        table = Table(len(self.tables), name, records)
        self.tables.append(table)
        self._by_name[name] = table
        return table

    def table(self, ref):
        if isinstance(ref, int):
            return self.tables[ref]
        return self._by_name[ref]

    def record(self, table, key):
        return self.tables[table][key]

    def read_visible(self, table, key, ts, own_txn_wrote=False):
        return self.tables[table][key].visible(ts, own_txn_wrote)[1]

    def apply_write(self, table, key, ts, value, multiversion=False):
        self.write_record(self.tables[table][key], ts, value, multiversion)

    def write_record(self, rec, ts, value, multiversion=False):
        if rec.pre is None:
            if rec.committed[0] >= ts:
                raise OrderViolation(f"write ts={ts} behind committed ts={rec.committed[0]}")
            rec.pre = rec.committed
            self._touched.append(rec)
        elif rec.latest_ts > ts:
            raise OrderViolation(f"write ts={ts} after ts={rec.latest_ts} on {rec.key!r}")
        if multiversion:
            rec.extra.append((ts, value))
        else:
            if rec.committed[0] != ts:
                rec.prev = rec.committed
            rec.committed = (ts, value)

    @property
    def touched(self):
        return self._touched

    def batch_version_count(self):
        """Versions created by the current batch (extra versions plus saved pre-images)."""
        return sum(len(r.extra) if r.extra else 1 for r in self._touched if r.pre is not None)

    def rollback_writes(self, txn):
        """Undo every applied write of ``txn`` in the current batch."""
        for op in txn.ops:
            rec = self.tables[op.table].records.get(op.key)
            if rec is None or rec.pre is None:
                continue
            for i, (vts, _) in enumerate(rec.extra):
                if vts == txn.ts:
                    del rec.extra[i]
                    break
            else:
                if rec.committed[0] == txn.ts:
                    # in place: the replaced version is kept in prev
                    rec.committed = rec.prev if rec.prev is not None else rec.pre
            if not rec.extra and rec.committed == rec.pre:
                rec.pre = None

    def reset_batch(self):
        """Restore every record touched in this batch to its pre-batch value."""
        for rec in self._touched:
            if rec.pre is not None:
                rec.committed = rec.pre
                rec.pre = None
            rec.extra = []
        self._touched = []

    def gc_batch(self):
        for rec in self._touched:
            if rec.extra:
                rec.committed = rec.extra[-1]
                rec.extra = []
            rec.pre = None
        self._touched = []

    def snapshot(self):
        return {t.name: t.snapshot() for t in self.tables}

    def digest(self):
        return {t.name: digest_mapping(t.snapshot()) for t in self.tables}

    def max_versions(self):
        return max((r.version_count() for t in self.tables for r in t.records.values()), default=0)
