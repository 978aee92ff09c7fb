import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from funreg.config import REQUIRED, apply_schema, canonical_json, config_hash, load_file
from funreg.exceptions import ConfigError
from funreg.rules import Rule

SCHEMA = {"a": 1, "b": REQUIRED, "sub": {"x": 2.0, "any": {"*": None}}}


def test_defaults_materialized():
    out = apply_schema({"b": 3}, SCHEMA)
    assert out == {"a": 1, "b": 3, "sub": {"x": 2.0, "any": {}}}


def test_unknown_key_names_path():
    with pytest.raises(ConfigError, match="unknown config key sub.bandwith"):
        apply_schema({"b": 1, "sub": {"bandwith": 3}}, SCHEMA)
    with pytest.raises(ConfigError, match="missing required config key b"):
        apply_schema({}, SCHEMA)


def test_wildcard_table_accepts_anything():
    out = apply_schema({"b": 1, "sub": {"any": {"c": 1, "d": [1, 2]}}}, SCHEMA)
    assert out["sub"]["any"] == {"c": 1, "d": [1, 2]}


def test_load_toml_and_json(tmp_path):
    (tmp_path / "c.toml").write_text('b = 2\n[sub]\nx = 1.5\n')
    (tmp_path / "c.json").write_text('{"b": 2, "sub": {"x": 1.5}}')
    assert load_file(tmp_path / "c.toml") == load_file(tmp_path / "c.json")
    with pytest.raises(ConfigError, match="not found"):
        load_file(tmp_path / "missing.toml")
    (tmp_path / "bad.toml").write_text("b = = 2")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_file(tmp_path / "bad.toml")


@given(st.dictionaries(st.text(min_size=1, max_size=5), st.integers() | st.text(max_size=5), max_size=8))
def test_hash_ignores_key_order(d):
    shuffled = dict(reversed(list(d.items())))
    assert config_hash(d) == config_hash(shuffled)
    assert json.loads(canonical_json(d)) == d


def test_hash_changes_with_content():
    assert config_hash({"a": 1}) != config_hash({"a": 2})


@pytest.mark.parametrize("text,n,expect", [
    ("ceil(n^(2/3))", 1000, 100),
    ("ceil(n**0.6)", 2000, 96),
    ("c*n^-0.2", 32, 0.5),
    ("max(1, floor(log(n)))", 100, 4),
    ("2 * sqrt(n) + 1", 16, 9.0),
])
def test_rules(text, n, expect):
    assert Rule(text, {"c": 1.0})(n) == pytest.approx(expect)


@pytest.mark.parametrize("text", ["__import__('os')", "n.real", "lambda: 1", "foo(n)", "m + 1", "'a'"])
def test_rules_reject_unsafe(text):
    with pytest.raises(ConfigError):
        Rule(text)


def test_rule_runtime_error():
    with pytest.raises(ConfigError, match="failed"):
        Rule("log(n - 10)")(10)
