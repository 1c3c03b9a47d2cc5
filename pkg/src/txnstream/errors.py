class TxnStreamError(Exception):
    pass


class ConfigError(TxnStreamError):
    """Invalid engine, workload or harness configuration."""


class ApiMisuse(TxnStreamError):
    """A state-access primitive was issued outside STATE_ACCESS."""


class KeyNotFound(TxnStreamError, KeyError):
    pass


class OrderViolation(TxnStreamError):
    """A write arrived out of timestamp order within a batch."""


class OracleMismatch(TxnStreamError):
    pass


class EngineFailure(TxnStreamError):
    """An executor died while the others were waiting on it."""
