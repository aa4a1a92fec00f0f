"""Event-log repair for processes over shared single-server resources and FIFO queues."""

from .event_log import (
    Event,
    MultiEntityLog,
    SystemRun,
    Trace,
    check_completeness,
    derive_system_run,
    parse_log,
    project_run,
    sequential_view,
    serialize_log,
)
from .model import PQRSystem, bindings_for, fifo_relation, parse_model, serialize_model, validate

__version__ = "0.1.0"
