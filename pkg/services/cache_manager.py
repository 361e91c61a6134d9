import os
import json
import hashlib
from typing import Dict, Optional

import numpy as np

from config.settings import settings

class CacheManager:
    """
    Manages caching of extracted feature arrays to avoid recomputing descriptors.
    """

    def __init__(self, cache_dir: Optional[str] = None, enabled: Optional[bool] = None):
        self.cache_dir = cache_dir or settings.CACHE_DIR
        self.features_dir = os.path.join(self.cache_dir, "features")
        self.metadata_file = os.path.join(self.cache_dir, "metadata.json")
        self.enabled = settings.ENABLE_CACHE if enabled is None else enabled

        # Create cache directories
        if self.enabled:
            os.makedirs(self.features_dir, exist_ok=True)

        # Load existing metadata
        self.metadata = self._load_metadata()

    def _load_metadata(self) -> Dict:
        """Load cache metadata from disk."""
        if os.path.exists(self.metadata_file):
            try:
                with open(self.metadata_file, 'r') as f:
                    return json.load(f)
            except Exception as e:
                print(f"⚠️  Could not load cache metadata: {e}")
        return {"features": {}}

    def _save_metadata(self):
        """Save cache metadata to disk."""
        try:
            with open(self.metadata_file, 'w') as f:
                json.dump(self.metadata, f, indent=2, sort_keys=True)
        except Exception as e:
            print(f"⚠️  Could not save cache metadata: {e}")

    def generate_key(self, backend_signature: str, points: np.ndarray, ids: Optional[np.ndarray] = None) -> str:
        """Hash backend parameters and raw point bytes into a cache key."""
        digest = hashlib.md5(backend_signature.encode())
        digest.update(np.ascontiguousarray(points, dtype=float).tobytes())
        if ids is not None:
            digest.update(np.ascontiguousarray(ids, dtype=np.int64).tobytes())
        return digest.hexdigest()

    def get_cached_features(self, key: str) -> Optional[np.ndarray]:
        """
        Get cached feature vectors if they exist.

        Args:
            key: Cache key from generate_key

        Returns:
            Feature array or None if not cached
        """
        if not self.enabled:
            return None

        cached_path = self.metadata["features"].get(key)
        if cached_path is None:
            return None

        if os.path.exists(cached_path):
            if settings.VERBOSE:
                print(f"Using cached features: {key[:12]}...")
            return np.load(cached_path)

        # Remove invalid cache entry
        del self.metadata["features"][key]
        self._save_metadata()
        return None

    def cache_features(self, key: str, vectors: np.ndarray) -> Optional[str]:
        """
        Cache a feature array.

        Args:
            key: Cache key from generate_key
            vectors: (n, D) feature array

        Returns:
            Path to the cached .npy file, or None when caching is disabled
        """
        if not self.enabled:
            return None

        cached_path = os.path.join(self.features_dir, f"features_{key}.npy")
        if not os.path.exists(cached_path):
            np.save(cached_path, np.asarray(vectors, dtype=float))

        self.metadata["features"][key] = cached_path
        self._save_metadata()

        if settings.VERBOSE:
            print(f"Cached features: {cached_path}")
        return cached_path

    def clear_cache(self):
        """Remove every cached feature file."""
        import shutil
        self.metadata["features"] = {}
        if os.path.exists(self.features_dir):
            shutil.rmtree(self.features_dir)
        os.makedirs(self.features_dir, exist_ok=True)

        self._save_metadata()
        print("Cleared feature cache")

    def get_cache_stats(self) -> Dict:
        """Get cache statistics."""
        return {
            "features_cached": len(self.metadata["features"]),
            "cache_dir": self.cache_dir,
            "cache_enabled": self.enabled,
        }
