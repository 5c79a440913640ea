"""Phone agent: local encrypted record store and store-and-forward uploader."""
from .agent import AgentConfig, Backoff, ConsistencyReport, PhoneAgent, compare_records
from .crypto import GpsCipher, GpsDecryptError, check_coordinates
from .outbox import Outbox, OutboxError
from .records import DataRecord, RecordError, content_hash, normalized
from .transport import (
    ConnectionRefused, ConnectionReset, HttpResult, HttpTransport, RequestTimeout, Transport, TransportError,
)

__all__ = [
    "AgentConfig", "Backoff", "ConsistencyReport", "PhoneAgent", "compare_records", "GpsCipher",
    "GpsDecryptError", "check_coordinates", "Outbox", "OutboxError", "DataRecord", "RecordError",
    "content_hash", "normalized", "ConnectionRefused", "ConnectionReset", "HttpResult", "HttpTransport",
    "RequestTimeout", "Transport", "TransportError",
]
