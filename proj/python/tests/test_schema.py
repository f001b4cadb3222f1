import json
import pathlib

import pytest

import casewright

jsonschema = pytest.importorskip("jsonschema")

ROOT = pathlib.Path(__file__).resolve().parents[2]
SCHEMA = json.loads((ROOT / "docs" / "model.schema.json").read_text())
FIXTURES = ROOT / "tests" / "fixtures"


def schema_ok(doc):
    return not list(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc))


def parser_ok(doc):
    try:
        casewright.canonical_model(json.dumps(doc))
    except casewright.CasewrightError as e:
        assert e.args[0] in ("SchemaViolation", "SyntaxError"), e.args
        return False
    return True


def test_fixtures_conform():
    for path in sorted(FIXTURES.glob("*.json")):
        doc = json.loads(path.read_text())
        if "plan" not in doc:
            continue
        assert schema_ok(doc), path.name
        assert parser_ok(doc), path.name


def test_canonical_form_conforms():
    doc = json.loads(casewright.canonical_model((FIXTURES / "complaints.json").read_text()))
    assert schema_ok(doc)


BASE = {"id": "m", "plan": {"id": "r"}}


@pytest.mark.parametrize(
    "doc",
    [
        {"plan": {"id": "r"}},
        {"id": "m"},
        {"id": "1bad", "plan": {"id": "r"}},
        {**BASE, "colour": "red"},
        {"id": "m", "plan": {"id": "r", "kind": "milestone"}},
        {"id": "m", "plan": {"id": "r", "children": [{"id": "t", "kind": "robot"}]}},
        {"id": "m", "plan": {"id": "r", "children": [{"id": "t"}]}},
        {"id": "m", "plan": {"id": "r", "children": [
            {"id": "t", "kind": "milestone", "duration": 3}]}},
        {"id": "m", "plan": {"id": "r", "children": [
            {"id": "t", "kind": "milestone", "caseRef": "x"}]}},
        {"id": "m", "plan": {"id": "r", "children": [
            {"id": "t", "kind": "timer_listener", "duration": -1}]}},
        {"id": "m", "plan": {"id": "r", "children": [
            {"id": "t", "kind": "milestone", "entryCriteria": [
                {"id": "s", "on": [{"source": "t", "event": "explode"}]}]}]}},
        {"id": "m", "plan": {"id": "r", "children": [
            {"id": "t", "kind": "milestone", "required": "yes"}]}},
        {**BASE, "roles": [{"name": "r1", "permissions": ["fly"]}]},
        {**BASE, "caseFile": [{"path": "a/b"}, {"path": "c", "extra": 1}]},
        {**BASE, "planningTable": {"entries": [], "owner": "x"}},
    ],
)
def test_schema_and_parser_reject_together(doc):
    assert not schema_ok(doc)
    assert not parser_ok(doc)
