"""Ingestion backend: device signup, token-gated upload, validation and storage."""
from .service import Account, BackendConfig, BackendService, Response
from .store import DUPLICATE, STORED, UPDATED, DocumentStore, MemoryStore
from .tokens import AuthToken, TokenError, TokenIssuer
from .validation import RECORD_FIELDS, RECORD_TYPES, validate_payload, validate_record

__all__ = [
    "Account", "BackendConfig", "BackendService", "Response", "DUPLICATE", "STORED", "UPDATED",
    "DocumentStore", "MemoryStore", "AuthToken", "TokenError", "TokenIssuer", "RECORD_FIELDS",
    "RECORD_TYPES", "validate_payload", "validate_record",
]
