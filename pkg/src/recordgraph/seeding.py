from __future__ import annotations

import hashlib
import json


def derive_seed(root: int, label: str) -> int:
    """Stable 63-bit sub-seed for ``label`` under ``root``."""
    digest = hashlib.blake2b(f"{root}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
