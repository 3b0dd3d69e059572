"""
Run provenance: checksums of inputs and the versions of the numerical stack.
"""

import hashlib
import json
import platform
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Union

import numba
import numpy as np
import pandas as pd
import scipy

from . import __version__


def get_file_checksum(filepath: Union[str, Path]) -> str:
    """Calculate SHA256 checksum of a file."""
    sha256_hash = hashlib.sha256()
    with open(filepath, "rb") as f:
        for byte_block in iter(lambda: f.read(4096), b""):
            sha256_hash.update(byte_block)
    return sha256_hash.hexdigest()


def config_checksum(config_dict: Dict[str, Any]) -> str:
    """SHA256 of the canonical JSON form (sorted keys, no whitespace)."""
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def library_versions() -> Dict[str, str]:
    return {
        "chemotaxis_blowup": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "pandas": pd.__version__,
    }


def provenance_record(config_dict: Dict[str, Any], config_path: Union[str, Path, None] = None) -> Dict[str, Any]:
    record = {
        "created": datetime.now().isoformat(),
        "config_sha256": config_checksum(config_dict),
        "versions": library_versions(),
    }
    if config_path is not None and Path(config_path).exists():
        record["config_file"] = str(config_path)
        record["config_file_sha256"] = get_file_checksum(config_path)
    return record
