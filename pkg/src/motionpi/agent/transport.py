"""Request transports the agent can talk through, and the failures it distinguishes."""
from __future__ import annotations

import socket
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Mapping, Protocol


class TransportError(Exception):
    """The request did not yield a response."""


class ConnectionRefused(TransportError):
    pass


class RequestTimeout(TransportError):
    pass


class ConnectionReset(TransportError):
    pass


@dataclass(frozen=True)
class HttpResult:
    status: int
    body: bytes


class Transport(Protocol):
    def request(self, method: str, path: str, headers: Mapping[str, str], body: bytes = b""): ...


class HttpTransport:
    """Real HTTP via urllib; every call is bounded by ``timeout_s``."""

    def __init__(self, base_url: str, timeout_s: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def request(self, method, path, headers, body=b""):
        req = urllib.request.Request(self.base_url + path, data=body or None, method=method,
                                     headers={"Content-Type": "application/json", **dict(headers)})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return HttpResult(resp.status, resp.read())
        except urllib.error.HTTPError as exc:
            return HttpResult(exc.code, exc.read())
        except urllib.error.URLError as exc:
            raise _classify(exc.reason) from exc
        except OSError as exc:
            raise _classify(exc) from exc


def _classify(exc) -> TransportError:
    if isinstance(exc, (socket.timeout, TimeoutError)):
        return RequestTimeout(str(exc))
    if isinstance(exc, ConnectionRefusedError):
        return ConnectionRefused(str(exc))
    return ConnectionReset(str(exc))
