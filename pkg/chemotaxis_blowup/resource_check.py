"""
Resource validation for simulation runs.
"""

import shutil
from datetime import datetime
from pathlib import Path
from typing import Dict, Tuple, Union

import psutil

# fields, CN right-hand sides, CG work vectors and stencil temporaries
WORKING_ARRAYS = 40
BYTES_PER_VALUE = 8


def estimate_memory_bytes(node_count: int) -> int:
    return WORKING_ARRAYS * BYTES_PER_VALUE * node_count


def estimate_snapshot_bytes(node_count: int, snapshots: int, fmt: str) -> int:
    """Disk needed for ``snapshots`` sets of (u, v, w)."""
    if fmt == "none":
        return 0
    per_value = 16 if fmt == "vtk" else BYTES_PER_VALUE  # "%.9g" plus newline vs raw <f8
    return 3 * snapshots * node_count * per_value


def check_system_resources(node_count: int, snapshot_bytes: int = 0,
                           output_dir: Union[str, Path] = ".") -> Tuple[bool, str]:
    """
    Check that the machine can hold the run in memory and its snapshots on disk.

    Args:
        node_count: Lattice nodes per field
        snapshot_bytes: Expected total size of snapshot files
        output_dir: Where outputs go (its filesystem is checked)

    Returns:
        Tuple of (success: bool, message: str)
    """
    checks = []

    needed_memory_gb = estimate_memory_bytes(node_count) / (1024**3)
    memory = psutil.virtual_memory()
    available_memory_gb = memory.available / (1024**3)
    total_memory_gb = memory.total / (1024**3)
    if available_memory_gb < needed_memory_gb:
        checks.append(f"❌ Insufficient memory: {available_memory_gb:.1f}GB available, "
                      f"~{needed_memory_gb:.2f}GB required for {node_count:,} nodes")
    else:
        checks.append(f"✅ Memory: {available_memory_gb:.1f}GB available / {total_memory_gb:.1f}GB total "
                      f"(~{needed_memory_gb:.2f}GB needed)")

    probe = Path(output_dir)
    while not probe.exists() and probe != probe.parent:
        probe = probe.parent
    disk_usage = shutil.disk_usage(probe)
    available_disk_gb = disk_usage.free / (1024**3)
    needed_disk_gb = snapshot_bytes / (1024**3)
    if available_disk_gb < needed_disk_gb:
        checks.append(f"❌ Insufficient disk space: {available_disk_gb:.1f}GB available, "
                      f"~{needed_disk_gb:.2f}GB of snapshots expected")
    else:
        checks.append(f"✅ Disk space: {available_disk_gb:.1f}GB available "
                      f"(~{needed_disk_gb:.2f}GB of snapshots expected)")

    has_errors = any("❌" in check for check in checks)
    status = "FAIL" if has_errors else "PASS"
    message = f"\n🔍 System Resource Check - {status}\n" + "\n".join(f"   {check}" for check in checks)
    return not has_errors, message


def get_memory_info() -> Dict[str, float]:
    """Current system memory and this process's resident set size."""
    memory = psutil.virtual_memory()
    rss = psutil.Process().memory_info().rss
    return {
        'timestamp': datetime.now().isoformat(),
        'total_memory_gb': round(memory.total / (1024**3), 2),
        'available_memory_gb': round(memory.available / (1024**3), 2),
        'memory_percent': memory.percent,
        'process_rss_mb': round(rss / (1024**2), 2),
    }
