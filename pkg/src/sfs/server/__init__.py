"""Network service: mTLS termination, sessions, REST endpoints, audit."""

from .app import create_app
from .auth import PeerInfo, Session, authenticate_session
from .core import ApiError, SfsSystem

__all__ = [
    "ApiError",
    "PeerInfo",
    "Session",
    "SfsSystem",
    "authenticate_session",
    "create_app",
]
