import math
import random
from collections import Counter

import pytest

from txnstream.apps import REGISTRY, WorkloadConfig, ZipfSampler, gen_events, get_app, \
    populate_tables, zipf_sample
from txnstream.apps.gs import READ
from txnstream.apps.ob import ALTER, BID, TOP
from txnstream.apps.sl import DEPOSIT, TRANSFER, StreamLedger
from txnstream.apps.tp import TOLL, toll
from txnstream.apps.workload import dump_trace, load_trace, pick_keys
from txnstream.core import Status
from txnstream.errors import ConfigError
from txnstream.scheduler import Engine, stamp
from txnstream.state import StateStore


def test_uniform_zipf_frequencies():
    n, draws = 10_000, 1_000_000
    z = ZipfSampler(n, 0.0, random.Random(11))
    counts = Counter(zipf_sample(z) for _ in range(draws))
    mean = draws / n
    sigma = math.sqrt(draws * (1 / n) * (1 - 1 / n))
    chi2 = sum((counts.get(k, 0) - mean) ** 2 / mean for k in range(n))
    # chi-square with n-1 dof: mean n-1, sd sqrt(2(n-1)); allow 4 sd
    assert abs(chi2 - (n - 1)) < 4 * math.sqrt(2 * (n - 1))
    assert max(abs(counts.get(k, 0) - mean) for k in range(n)) < 5 * sigma
    within = sum(abs(counts.get(k, 0) - mean) <= 3 * sigma for k in range(n)) / n
    assert within > 0.99


def test_zipf_rank_ratio():
    z = ZipfSampler(10, 0.6, random.Random(3))
    counts = Counter(z() for _ in range(1_000_000))
    assert counts[0] / counts[1] == pytest.approx(2 ** 0.6, rel=0.02)
    assert z.pmf(0) / z.pmf(1) == pytest.approx(2 ** 0.6)


def test_zipf_single_key():
    z = ZipfSampler(1, 0.6, random.Random(0))
    assert {z() for _ in range(100)} == {0}
    with pytest.raises(ConfigError):
        ZipfSampler(0, 0.6, random.Random(0))


@pytest.mark.parametrize("spans", [1, 2, 4])
def test_pick_keys_spans_partitions(spans):
    z = ZipfSampler(1000, 0.6, random.Random(spans))
    for _ in range(200):
        keys = pick_keys(z, 10, 8, spans)
        assert len(set(keys)) == 10
        assert len({k % 8 for k in keys}) == spans


def test_gs_multi_partition_share():
    wl = WorkloadConfig(app="gs", event_count=4000, mp_ratio=0.25, mp_length=4, seed=2)
    spans = Counter(len({k % wl.partitions for k in p[1]}) for p in gen_events(wl))
    assert set(spans) <= {1, 4}
    assert spans[4] / 4000 == pytest.approx(0.25, abs=0.03)


@pytest.mark.slow
def test_gs_read_ratio_and_length():
    wl = WorkloadConfig(app="gs", event_count=1_000_000, read_ratio=0.5, seed=1)
    reads = 0
    for kind, keys, values in gen_events(wl):
        assert len(keys) == 10 and len(set(keys)) == 10
        reads += kind == READ
    assert abs(reads / 1_000_000 - 0.5) <= 0.01


@pytest.mark.slow
def test_ob_event_mix():
    wl = WorkloadConfig(app="ob", event_count=800_000, seed=1)
    kinds = Counter(p[0] for p in gen_events(wl))
    total = sum(kinds.values())
    assert kinds[BID] / total == pytest.approx(6 / 8, abs=0.01)
    assert kinds[ALTER] / total == pytest.approx(1 / 8, abs=0.01)
    assert kinds[TOP] / total == pytest.approx(1 / 8, abs=0.01)


def test_sl_event_mix():
    wl = WorkloadConfig(app="sl", event_count=20_000, seed=4)
    kinds = Counter(p[0] for p in gen_events(wl))
    assert kinds[DEPOSIT] / 20_000 == pytest.approx(0.5, abs=0.02)
    assert all(p[1] != p[2] for p in gen_events(wl) if p[0] == TRANSFER)


def test_tp_reports_expand_to_three_events():
    wl = WorkloadConfig(app="tp", event_count=300, seed=4)
    events = list(gen_events(wl))
    assert len(events) == 300
    for i in range(0, 300, 3):
        trio = events[i:i + 3]
        assert [e[0] for e in trio] == [0, 1, 2]
        assert len({e[1:] for e in trio}) == 1


@pytest.mark.parametrize("app", sorted(REGISTRY))
def test_generation_and_population_are_deterministic(app):
    wl = WorkloadConfig(app=app, event_count=500, table_size=200, seed=9)
    assert list(gen_events(wl)) == list(gen_events(wl))
    assert StateStore.from_dict(populate_tables(wl)).digest() == \
        StateStore.from_dict(populate_tables(wl)).digest()
    assert list(gen_events(wl)) != list(gen_events(wl.with_(seed=10)))


def test_population_shapes():
    gs = populate_tables(WorkloadConfig(app="gs"))["grep"]
    assert len(gs) == 10_000
    sl = populate_tables(WorkloadConfig(app="sl", initial_balance=500))
    assert all(len(t) == 10_000 and min(t.values()) >= 500 for t in sl.values())
    ob = populate_tables(WorkloadConfig(app="ob"))["items"]
    assert len(ob) == 10_000 and all(p > 0 and q >= 0 for p, q in ob.values())
    tp = populate_tables(WorkloadConfig(app="tp"))
    assert set(tp["speed"].values()) == {(0, 0)} and set(tp["count"].values()) == {frozenset()}
    assert len(tp["speed"]) == len(tp["count"]) == 100


@pytest.mark.parametrize("app", sorted(REGISTRY))
def test_trace_round_trip(app, tmp_path):
    wl = WorkloadConfig(app=app, event_count=300, seed=5)
    payloads = list(gen_events(wl))
    path = tmp_path / f"{app}.bin"
    assert dump_trace(path, stamp(payloads, 50), get_app(app).codec) == 300
    loaded = load_trace(path, get_app(app).codec)
    data = [e for e in stamp(payloads, 50) if not e.is_punctuation]
    assert loaded == [(e.ts, e.payload) for e in data]
    assert path.stat().st_size == 300 * get_app(app).codec.size


def test_workload_config_errors():
    with pytest.raises(ConfigError):
        WorkloadConfig(app="xx")
    with pytest.raises(ConfigError):
        WorkloadConfig(skew=-0.1)
    with pytest.raises(ConfigError):
        WorkloadConfig(read_ratio=1.5)
    with pytest.raises(ConfigError):
        WorkloadConfig(mp_length=9, partitions=8)
    with pytest.raises(ConfigError):
        WorkloadConfig(app="gs", table_size=5)
    # 20 keys cannot come from one partition of 12
    with pytest.raises(ConfigError):
        WorkloadConfig(app="ob", table_size=100)
    WorkloadConfig(app="ob", table_size=100, mp_ratio=1.0, mp_length=4)
    assert WorkloadConfig(app="TP").table_size == 100


def run_app(app, threads=4, **kw):
    wl = WorkloadConfig(app=app, **kw)
    tables = populate_tables(wl)
    store = StateStore.from_dict(tables)
    logic = get_app(app).logic()
    payloads = list(gen_events(wl))
    outputs = Engine(logic, store, "tstream", threads, 500).run(payloads)
    return tables, payloads, outputs, store.snapshot()


def test_sl_rejection_end_to_end():
    store = StateStore.from_dict({"accounts": {0: 5, 1: 0}, "assets": {0: 500, 1: 0}})
    outputs = Engine(StreamLedger(), store, "tstream", 2, 10).run(
        [(TRANSFER, 0, 1, 10, 10), (DEPOSIT, 0, 0, 1, 1)])
    assert outputs[0].status is Status.REJECTED and outputs[0].value is False
    assert outputs[1].status is Status.COMMITTED and outputs[1].value is True
    assert store.snapshot() == {"accounts": {0: 6, 1: 0}, "assets": {0: 501, 1: 0}}


def test_sl_conservation():
    tables, payloads, outputs, final = run_app("sl", event_count=5000, table_size=100,
                                               initial_balance=100, seed=3)
    deposits = sum(p[3] + p[4] for p, o in zip(payloads, outputs)
                   if p[0] == DEPOSIT and o.status is Status.COMMITTED)
    before = sum(sum(t.values()) for t in tables.values())
    after = sum(sum(t.values()) for t in final.values())
    assert after - before == deposits
    assert any(o.status is Status.REJECTED for o in outputs)
    assert min(min(t.values()) for t in final.values()) >= 0


def test_ob_quantities_stay_non_negative():
    _, payloads, outputs, final = run_app("ob", event_count=5000, table_size=400, seed=3)
    assert all(q >= 0 for _, q in final["items"].values())
    rejected = [p[0] for p, o in zip(payloads, outputs) if o.status is Status.REJECTED]
    assert rejected and set(rejected) == {BID}


def test_tp_tolls_match_a_scalar_replay():
    _, payloads, outputs, _ = run_app("tp", event_count=30_000, seed=2)
    seg = 0
    avg, ids = (0, 0), set()
    expected, got = [], []
    for p, o in zip(payloads, outputs):
        kind, vid, s, speed = p
        if s != seg:
            continue
        if kind == 0:
            avg = (avg[0] + 1, avg[1] + speed)
        elif kind == 1:
            ids.add(vid)
        else:
            expected.append(toll(avg, ids))
            got.append(o.value)
    assert got == expected and max(expected) > 0
    assert all(o.status is Status.COMMITTED for o in outputs if o.value is not None)
    assert sum(1 for p in payloads if p[0] == TOLL) == 10_000
