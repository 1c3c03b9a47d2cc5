"""TollProcessing: road speed, vehicle count and toll notification fused in one operator."""
import struct

from ..api import FunctionRegistry, OperatorLogic
from .workload import TraceCodec, ZipfSampler, make_rng

SPEED = "speed"
COUNT = "count"
ROAD_SPEED, VEHICLE_CNT, TOLL = 0, 1, 2


def populate(config):
    n = config.table_size
    return {SPEED: {s: (0, 0) for s in range(n)}, COUNT: {s: frozenset() for s in range(n)}}


def generate(config):
    """Each position report becomes three consecutive events (speed, count, toll)."""
    rng = make_rng(config, "events")
    zipf = ZipfSampler(config.table_size, config.skew, rng)
    emitted = 0
    while emitted < config.event_count:
        seg = zipf()
        vid = rng.randrange(config.vehicles)
        base = 20 + (seg * 37) % 60
        speed = max(0, base + rng.randint(-10, 10))
        for kind in (ROAD_SPEED, VEHICLE_CNT, TOLL):
            if emitted == config.event_count:
                return
            yield (kind, vid, seg, speed)
            emitted += 1


def _add_speed(avg, ref, speed):
    return (avg[0] + 1, avg[1] + speed)


def _add_vehicle(ids, ref, vid):
    return ids | {vid}


def toll(avg, ids):
    count, total = avg
    cnt = len(ids)
    if count and total / count < 40 and cnt > 150:
        return 2 * (cnt - 150) ** 2
    return 0


class TollProcessing(OperatorLogic):
    name = "tp"
    tables = (SPEED, COUNT)

    def registry(self):
        return FunctionRegistry({"add_speed": _add_speed, "add_vehicle": _add_vehicle})

    def state_access(self, eb, sa):
        kind, vid, seg, speed = eb.params
        if kind == ROAD_SPEED:
            sa.read_modify(eb, SPEED, seg, ("add_speed", (speed,)))
        elif kind == VEHICLE_CNT:
            sa.read_modify(eb, COUNT, seg, ("add_vehicle", (vid,)))
        else:
            sa.read(eb, SPEED, seg)
            sa.read(eb, COUNT, seg)

    def post_process(self, event, eb):
        if eb.status.name != "COMMITTED":
            return None
        kind = eb.params[0]
        if kind == ROAD_SPEED:
            count, total = eb.results[0]
            return total / count
        if kind == VEHICLE_CNT:
            return len(eb.results[0])
        return toll(eb.results[0], eb.results[1])


CODEC = TraceCodec(struct.Struct("<BIII"), lambda p: p, lambda t: tuple(t))
