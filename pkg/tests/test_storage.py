"""Store round trips and torn-write detection."""

import pytest

from telecollab.storage import FileStore, StoreCorruptError, StoreError


def test_round_trip(tmp_path):
    store = FileStore(tmp_path / "world.store")
    records = [{"object_id": "a", "value": 1}, {"object_id": "b", "value": 2}]
    store.write("world", {"world_seq": 42}, records)
    meta, out = store.read("world")
    assert meta == {"world_seq": 42}
    assert out == records


def test_empty_record_list(tmp_path):
    store = FileStore(tmp_path / "s")
    store.write("registry", {}, [])
    meta, out = store.read("registry")
    assert out == []


def test_missing_file_is_store_error(tmp_path):
    store = FileStore(tmp_path / "nope")
    assert not store.exists()
    with pytest.raises(StoreError):
        store.read("world")


def test_truncated_mid_record_refused(tmp_path):
    path = tmp_path / "world.store"
    store = FileStore(path)
    store.write("world", {"world_seq": 7}, [{"object_id": "a"}] * 5)
    raw = path.read_bytes()
    path.write_bytes(raw[:len(raw) - 25])  # tear the tail
    with pytest.raises(StoreCorruptError):
        store.read("world")


def test_missing_trailer_refused(tmp_path):
    path = tmp_path / "world.store"
    store = FileStore(path)
    store.write("world", {"world_seq": 7}, [{"object_id": "a"}])
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(StoreCorruptError, match="commit"):
        store.read("world")


def test_garbage_line_names_record(tmp_path):
    path = tmp_path / "world.store"
    store = FileStore(path)
    store.write("world", {"world_seq": 1}, [{"object_id": "a"},
                                            {"object_id": "b"}])
    lines = path.read_text().splitlines()
    lines[2] = '{"broken'
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(StoreCorruptError, match="record 3"):
        store.read("world")


def test_kind_mismatch_refused(tmp_path):
    store = FileStore(tmp_path / "s")
    store.write("registry", {}, [])
    with pytest.raises(StoreCorruptError, match="kind"):
        store.read("world")


def test_write_replaces_atomically(tmp_path):
    path = tmp_path / "s"
    store = FileStore(path)
    store.write("world", {"world_seq": 1}, [{"object_id": "a"}])
    store.write("world", {"world_seq": 2}, [{"object_id": "b"}])
    meta, out = store.read("world")
    assert meta["world_seq"] == 2
    assert out == [{"object_id": "b"}]
    assert not path.with_name(path.name + ".tmp").exists()
