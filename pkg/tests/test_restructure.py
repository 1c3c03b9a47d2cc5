import time

import pytest

from _support import KV, REGISTRY, build_txns, kv_tables, oracle_of, pool_of, store_of
from txnstream.api import FunctionRegistry, StateAccess, build_transaction
from txnstream.apps.ob import OnlineBidding
from txnstream.apps.sl import StreamLedger
from txnstream.core import EventBlotter, Status
from txnstream.errors import ConfigError
from txnstream.restructure import (BatchEvaluator, ChainPool, MergedChain, PlacementPolicy,
                                   assign_work, build_levels, decompose, evaluate_batch)


def test_figure_five_decomposition():
    # t1 touches A and B, t2 touches B
    txns = build_txns([[("w", "a", 0, 1), ("w", "a", 1, 2)], [("w", "a", 1, 3)]])
    pool = pool_of(txns, order=[txns[1], txns[0]])
    a, b = pool.get((0, 0)), pool.get((0, 1))
    assert [op.ts for op in a.ops] == [0]
    assert [op.ts for op in b.ops] == [0, 1]
    assert [op.value for op in b.ops] == [2, 3]


def test_decompose_conserves_ops():
    payloads = [[("w", "a", (i * 37 + j * 1009) % 10_000, j) for j in range(10)]
                for i in range(3)]
    pool = pool_of(build_txns(payloads))
    assert sum(len(c) for c in pool.chains()) == 30 == pool.op_count


def test_empty_txn_creates_no_chains():
    pool = pool_of(build_txns([[]]))
    assert len(pool) == 0 and build_levels(pool).levels == []


def test_independent_chains_share_one_level():
    txns = build_txns([[("w", "a", k, k), ("r", "b", k)] for k in range(6)])
    levels = build_levels(pool_of(txns))
    assert len(levels) == 1 and len(levels.levels[0]) == 12


def test_dependency_puts_reader_above_source():
    txns = build_txns([[("cw", "a", 1, 5, 0, ("b", 2))], [("rm", "b", 2, "add", (1,), None)]])
    levels = build_levels(pool_of(txns))
    assert [[t.ref for t in lvl] for lvl in levels.levels] == [[(1, 2)], [(0, 1)]]


def test_cycle_is_merged():
    payloads = [[("rm", "a", 0, "mix", (1,), ("b", 0))],
                [("cw", "b", 0, 7, 0, ("a", 0))],
                [("rm", "a", 0, "mix", (2,), ("b", 0))]]
    txns = build_txns(payloads)
    levels = build_levels(pool_of(txns))
    merged, = levels.merged_components
    assert isinstance(merged, MergedChain) and merged.refs == {(0, 0), (1, 0)}
    assert [op.ts for op in merged.ops] == [0, 1, 2]
    store = store_of(kv_tables())
    txns = build_txns(payloads)
    evaluate_batch(pool_of(txns), store, REGISTRY, txns)
    oracle, _ = oracle_of(payloads, kv_tables())
    assert store.digest() == oracle.digest()


def test_write_only_batch_single_round():
    payloads = [[("w", "a", k % 5, k)] for k in range(20)]
    txns = build_txns(payloads)
    store = store_of(kv_tables())
    result = evaluate_batch(pool_of(txns), store, REGISTRY, txns, workers=3)
    assert result.rounds == 1 and result.aborted == [] and len(result.committed) == 20
    assert store.snapshot()["a"][4] == 19


def _ledger_txn(ts, payload):
    sa = StateAccess({"accounts": 0, "assets": 1}.get)
    return build_transaction(StreamLedger(), EventBlotter(ts, payload), sa)


def test_insufficient_transfer_rejected_atomically():
    tables = {"accounts": {0: 50, 1: 0, 2: 0}, "assets": {0: 500, 1: 0, 2: 0}}
    store = store_of(tables)
    txns = [_ledger_txn(0, (1, 0, 1, 20, 20)), _ledger_txn(1, (1, 0, 2, 40, 40)),
            _ledger_txn(2, (0, 2, 0, 5, 5))]
    pool = ChainPool()
    for t in txns:
        decompose(t, pool)
    result = evaluate_batch(pool, store, StreamLedger().registry(), txns, workers=2)
    assert result.aborted == [1]
    assert txns[1].blotter.status is Status.REJECTED
    assert txns[1].blotter.results == [None] * 4
    assert store.snapshot() == {"accounts": {0: 30, 1: 20, 2: 5},
                                "assets": {0: 480, 1: 20, 2: 5}}


def test_underpriced_bid_rejected():
    store = store_of({"items": {3: (100, 5)}})
    sa = StateAccess({"items": 0}.get)
    low = build_transaction(OnlineBidding(), EventBlotter(0, (0, (3,), (90, 1))), sa)
    ok = build_transaction(OnlineBidding(), EventBlotter(1, (0, (3,), (100, 2))), sa)
    pool = ChainPool()
    decompose(low, pool)
    decompose(ok, pool)
    result = evaluate_batch(pool, store, OnlineBidding().registry(), [low, ok])
    assert result.aborted == [0] and result.committed == [1]
    assert store.snapshot()["items"][3] == (100, 3)
    assert ok.blotter.results == [(100, 3)]


def test_failure_cascade_matches_oracle():
    # ts 0 fails; ts 1 would only pass if ts 0 had written
    payloads = [[("w", "a", 1, 50), ("cw", "a", 0, 99, 100, None)],
                [("cw", "b", 0, 1, 40, ("a", 1))],
                [("rm", "a", 1, "add", (1,), None)]]
    store = store_of(kv_tables())
    txns = build_txns(payloads)
    result = evaluate_batch(pool_of(txns), store, REGISTRY, txns, workers=2)
    oracle, outcomes = oracle_of(payloads, kv_tables())
    assert store.digest() == oracle.digest()
    assert result.aborted == [0, 1] and result.rounds >= 2
    assert [o[0] for o in outcomes] == [False, False, True]


def test_placement_parse():
    assert str(PlacementPolicy.parse("shared-group:2")) == "shared-group:2"
    assert PlacementPolicy.parse("Shared-Everything").stealing
    assert not PlacementPolicy.parse("shared-nothing").stealing
    assert PlacementPolicy.parse("shared-nothing", steal=True).stealing
    with pytest.raises(ConfigError):
        PlacementPolicy.parse("everything")
    with pytest.raises(ConfigError):
        PlacementPolicy.parse("shared-group:3").queue_count(4)


def test_shared_nothing_even_assignment():
    txns = build_txns([[("w", "a", k, 1)] for k in range(8)])
    sched = assign_work(build_levels(pool_of(txns)), PlacementPolicy.parse("shared-nothing"), 4)
    assert [len(q) for q in sched.levels[0]] == [2, 2, 2, 2]
    assert sched.worker_queue == [0, 1, 2, 3]


def test_shared_group_queues():
    txns = build_txns([[("w", "a", k, 1)] for k in range(8)])
    sched = assign_work(build_levels(pool_of(txns)), PlacementPolicy.parse("shared-group:2"), 4)
    assert [len(q) for q in sched.levels[0]] == [4, 4]
    assert sched.worker_queue == [0, 0, 1, 1]


def test_stealing_drains_short_chains_around_a_long_one():
    def slow(value, ref):
        time.sleep(0.02)
        return value + 1

    reg = FunctionRegistry({"slow": slow, "add": REGISTRY.funs["add"]})
    payloads = [[("rm", "a", 0, "slow", (), None)] for _ in range(5)]
    payloads += [[("w", "b", k % 8, k)] for k in range(99)]
    txns = build_txns(payloads)
    pool = pool_of(txns)
    ev = BatchEvaluator(store_of(kv_tables()), reg, PlacementPolicy.parse("shared-everything"), 4,
                        trace=True)
    ev.prepare(pool, txns)
    ev.run()
    counts = ev.tasks_per_worker
    assert sum(counts) == 1 + 8
    long_worker, = {e[2] for e in ev.trace if e[3:5] == (0, 0)}
    # the long chain's worker did nothing else; the others drained the short chains
    assert counts[long_worker] == 1
    assert all(e[2] != long_worker for e in ev.trace if e[3] == 1)


@pytest.mark.parametrize("placement", ["shared-nothing", "shared-everything", "shared-group:1"])
def test_single_worker_policies_agree(placement):
    payloads = [[("rm", "a", k % 3, "add", (k,), None), ("cw", "b", k % 2, k, 5, ("a", 1))]
                for k in range(30)]
    store = store_of(kv_tables())
    txns = build_txns(payloads)
    result = evaluate_batch(pool_of(txns), store, REGISTRY, txns,
                            PlacementPolicy.parse(placement), 1)
    oracle, _ = oracle_of(payloads, kv_tables())
    assert store.digest() == oracle.digest()
    assert len(result.tasks_per_worker) == 1


def test_trace_records_levels():
    payloads = [[("cw", "a", 1, 5, 0, ("b", 2))], [("rm", "b", 2, "add", (1,), None)]]
    txns = build_txns(payloads)
    result = evaluate_batch(pool_of(txns), store_of(kv_tables()), REGISTRY, txns, trace=True)
    assert [(e[1], e[3], e[4], e[5], e[7]) for e in result.trace] == [
        (0, 1, 2, 1, "ok"), (1, 0, 1, 0, "ok")]


def test_kv_logic_sanity():
    assert KV().registry() is REGISTRY
