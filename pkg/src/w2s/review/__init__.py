"""Expert curation backend: verdict store and HTTP API."""

from .store import ReviewItem, ReviewStore, StoreError
from .service import create_app

__all__ = ["ReviewItem", "ReviewStore", "StoreError", "create_app"]
