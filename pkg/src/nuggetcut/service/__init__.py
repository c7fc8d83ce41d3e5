"""Session-oriented HTTP/WebSocket service around the segmenter."""

from .app import create_app
from .storage import SessionRecord, Store

__all__ = ["create_app", "SessionRecord", "Store"]
