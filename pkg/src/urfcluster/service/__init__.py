"""HTTP service wrapping the clustering pipeline."""

from .app import create_app
from .store import Store, StoreError

__all__ = ["create_app", "Store", "StoreError"]
