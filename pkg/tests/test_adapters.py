from __future__ import annotations

import json

import numpy as np
import pytest

from app.adapters.artifact_file import FileArtifactSink, render_cell, render_csv, render_json
from app.adapters.result_cache_memory import InMemoryResultCache
from app.adapters.result_cache_redis import RedisResultCache
from app.adapters.table_source_file import FileTableSource
from app.config import settings
from app.domain.errors import ConfigurationError


class FakeRedis:
    """bytes를 돌려주는 최소 redis 대역."""

    def __init__(self):
        self.store = {}

    def get(self, key):
        return self.store.get(key)

    def set(self, key, value):
        self.store[key] = value.encode("utf-8")


def test_memory_cache():
    cache = InMemoryResultCache()
    assert cache.get("k") is None
    cache.set("k", "{}")
    assert cache.get("k") == "{}"
    assert len(cache) == 1


def test_redis_cache_keys_and_decoding():
    client = FakeRedis()
    cache = RedisResultCache(client=client)
    cache.set("abc", '{"x": 1}')
    assert f"{settings.cache.key_prefix}:curve:abc" in client.store
    assert cache.get("abc") == '{"x": 1}'
    assert cache.get("missing") is None


def test_table_source_parses_comments(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("# header\n0.0 0.0 0.0  # trailing\n\n1.0 0.0 1.0\n", encoding="utf-8")
    rows = FileTableSource(str(path)).list_rows()
    assert [(r.a, r.x, r.h) for r in rows] == [(0.0, 0.0, 0.0), (1.0, 0.0, 1.0)]


def test_table_source_reports_bad_line(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("0.0 0.0 0.0\n0.5 nope 1\n", encoding="utf-8")
    with pytest.raises(ConfigurationError) as err:
        FileTableSource(str(path)).list_rows()
    assert ":2" in str(err.value)


def test_table_source_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        FileTableSource(str(tmp_path / "nope.txt")).list_rows()


def test_cells():
    assert render_cell(True) == "true"
    assert render_cell(np.bool_(False)) == "false"
    assert render_cell(np.int64(3)) == "3"
    assert render_cell(0.1) == "0.1"
    assert render_cell(None) == ""


def test_csv_floats_read_back_exactly(tmp_path):
    sink = FileArtifactSink()
    path = str(tmp_path / "out.csv")
    values = [0.1, 1.0 / 3.0, np.float64(2.0) ** -40, -1e-300]
    sink.write_csv(path, ["v"], [[v] for v in values])
    header, rows = sink.read_csv(path)
    assert header == ["v"]
    assert [float(r[0]) for r in rows] == [float(v) for v in values]


def test_json_is_canonical(tmp_path):
    text = render_json({"b": np.array([1.5, 2.0]), "a": float("inf")})
    assert text.endswith("\n")
    doc = json.loads(text)
    assert list(doc) == ["a", "b"]
    assert doc == {"a": "inf", "b": [1.5, 2.0]}


def test_csv_layout():
    assert render_csv(["a", "ok"], [[0.5, True]]) == "a,ok\n0.5,true\n"


def test_text_gets_trailing_newline(tmp_path):
    sink = FileArtifactSink()
    path = tmp_path / "nested" / "s.txt"
    sink.write_text(str(path), "verdict: certified")
    assert path.read_text(encoding="utf-8") == "verdict: certified\n"
