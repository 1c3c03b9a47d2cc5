"""Transactional state access for a multicore stream processor.

Postponed transactions are decomposed into per-state operation chains and
evaluated in parallel between punctuations; LOCK, MVLK, PAT and NoLock are
provided as eager baselines.
"""
from .api import FunctionRegistry, OperatorLogic, StateAccess
from .core import Event, EventBlotter, EventKind, Operation, OpKind, StateTransaction, Status, \
    TimestampAllocator, make_punctuation
from .errors import ApiMisuse, ConfigError, EngineFailure, KeyNotFound, OracleMismatch, \
    OrderViolation
from .oracle import SerialOracle
from .restructure import ChainPool, OperationChain, PlacementPolicy, build_levels, decompose, \
    evaluate_batch
from .scheduler import Engine, ingest, stamp
from .state import StateStore

__version__ = "0.1.0"
