"""Device-scoped bearer tokens (HS256 JWT) checked against an injected clock."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import jwt

DEFAULT_EXPIRY_S = 30 * 86400.0
ALGORITHM = "HS256"
# every time-based check is done here against the injected clock
_DECODE_OPTIONS = {"verify_exp": False, "verify_iat": False, "verify_nbf": False,
                   "require": ["device_id", "iat", "exp", "role"]}


class TokenError(Exception):
    pass


@dataclass(frozen=True)
class AuthToken:
    token: str
    issued_t: float
    expires_t: float
    device_id: str

    def to_dict(self) -> dict:
        return {"token": self.token, "issued_t": self.issued_t, "expires_t": self.expires_t,
                "device_id": self.device_id}

    @classmethod
    def from_dict(cls, doc: dict) -> "AuthToken":
        return cls(str(doc["token"]), float(doc["issued_t"]), float(doc["expires_t"]), str(doc["device_id"]))


class TokenIssuer:
    def __init__(self, secret: str | bytes, clock: Callable[[], float], expiry_s: float = DEFAULT_EXPIRY_S):
        if not secret:
            raise ValueError("token secret must be non-empty")
        if expiry_s <= 0:
            raise ValueError("token expiry must be positive")
        self._secret = secret
        self._clock = clock
        self.expiry_s = float(expiry_s)
        self._serial = itertools.count(1)

    def issue(self, device_id: str, role: str = "device") -> AuthToken:
        now = float(self._clock())
        claims = {"device_id": device_id, "role": role, "iat": now, "exp": now + self.expiry_s,
                  "jti": str(next(self._serial))}
        return AuthToken(jwt.encode(claims, self._secret, algorithm=ALGORITHM), now, now + self.expiry_s, device_id)

    def verify(self, token: str) -> dict:
        try:
            claims = jwt.decode(token, self._secret, algorithms=[ALGORITHM], options=_DECODE_OPTIONS)
        except jwt.PyJWTError as exc:
            raise TokenError(str(exc)) from None
        if not isinstance(claims["exp"], (int, float)) or self._clock() >= claims["exp"]:
            raise TokenError("token expired")
        if not isinstance(claims["device_id"], str) or not claims["device_id"]:
            raise TokenError("token carries no device id")
        return claims
