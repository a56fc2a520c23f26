"""Small shared helpers: seed derivation, atomic file writes, stable JSON."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile


def derive_seed(*parts) -> int:
    """Derive a stable 63-bit seed from an arbitrary tuple of labels.

    Used to give every (run seed, role) pair its own independent RNG stream
    without the streams colliding or depending on call order.
    """
    key = "|".join(str(p) for p in parts)
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") & 0x7FFFFFFFFFFFFFFF


def atomic_write_text(path: str, text: str) -> None:
    """Write text to `path` via a temp file + rename so readers never see partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    """Serialize to JSON with sorted keys; byte-stable for identical inputs."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path: str, obj) -> None:
    atomic_write_text(path, dump_json(obj))


def read_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
