import hashlib

from chemotaxis_blowup.provenance import config_checksum, get_file_checksum, library_versions, provenance_record
from chemotaxis_blowup.resource_check import (check_system_resources, estimate_memory_bytes,
                                              estimate_snapshot_bytes, get_memory_info)


def test_estimates_scale_with_nodes():
    assert estimate_memory_bytes(1000) == 320_000
    assert estimate_snapshot_bytes(1000, 2, "vtk") == 96_000
    assert estimate_snapshot_bytes(1000, 2, "raw") == 48_000
    assert estimate_snapshot_bytes(1000, 2, "none") == 0


def test_small_run_passes(tmp_path):
    success, message = check_system_resources(1000, 0, tmp_path / "not" / "yet" / "created")
    assert success
    assert "PASS" in message


def test_oversized_run_fails(tmp_path):
    success, message = check_system_resources(10 ** 15, 10 ** 18, tmp_path)
    assert not success
    assert "Insufficient memory" in message and "Insufficient disk space" in message


def test_memory_info_fields():
    info = get_memory_info()
    assert info["total_memory_gb"] > 0
    assert info["process_rss_mb"] > 0


def test_checksums(tmp_path):
    path = tmp_path / "data.bin"
    path.write_bytes(b"abc")
    assert get_file_checksum(path) == hashlib.sha256(b"abc").hexdigest()
    assert config_checksum({"a": 1, "b": [1, 2]}) == config_checksum({"b": [1, 2], "a": 1})
    assert config_checksum({"a": 1}) != config_checksum({"a": 2})


def test_provenance_record(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("{}")
    record = provenance_record({}, path)
    assert record["config_file_sha256"] == hashlib.sha256(b"{}").hexdigest()
    assert set(library_versions()) <= set(record["versions"])
    assert "config_file" not in provenance_record({}, tmp_path / "missing.json")
