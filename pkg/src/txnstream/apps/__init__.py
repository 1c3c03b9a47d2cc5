"""The four benchmark applications."""
from dataclasses import dataclass

from . import gs, ob, sl, tp
from .workload import APPS, WorkloadConfig, ZipfSampler, zipf_sample


@dataclass(frozen=True)
class App:
    name: str
    logic: type
    populate: object
    generate: object
    codec: object


REGISTRY = {
    "gs": App("gs", gs.GrepSum, gs.populate, gs.generate, gs.CODEC),
    "sl": App("sl", sl.StreamLedger, sl.populate, sl.generate, sl.CODEC),
    "ob": App("ob", ob.OnlineBidding, ob.populate, ob.generate, ob.CODEC),
    "tp": App("tp", tp.TollProcessing, tp.populate, tp.generate, tp.CODEC),
}


def get_app(name):
    return REGISTRY[name.lower()]


def populate_tables(config):
    return get_app(config.app).populate(config)


def gen_events(config):
    return get_app(config.app).generate(config)


__all__ = ["APPS", "App", "REGISTRY", "WorkloadConfig", "ZipfSampler", "gen_events",
           "get_app", "populate_tables", "zipf_sample"]
