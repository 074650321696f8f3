"""HTTP surface of the analysis service."""

import pytest
from fastapi.testclient import TestClient

from bilcheck.service import app
from conftest import fixture_text


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def test_health(client):
    assert client.get("/health").json() == {"status": "ok"}


def test_parse_endpoint(client):
    response = client.post("/parse", json={"text": fixture_text("example_move.bil.adt")})
    assert response.status_code == 200
    data = response.json()
    assert data["schema"] == 1
    assert data["instructions"] == 1
    assert data["addresses"] == ["0x105dc"]
    assert data["symbols"] == {"test": "0x105dc"}
    assert "Move(Var(\"X8\",Imm(64))" in data["canonical"]


def test_parse_error_is_422_with_offset(client):
    response = client.post("/parse", json={"text": 'Special("unterminated'})
    assert response.status_code == 422
    detail = response.json()["detail"]
    assert "unterminated" in detail["error"]
    assert detail["offset"] == 8


def test_typecheck_endpoint(client):
    response = client.post("/typecheck", json={"text": fixture_text("example_move.bil.adt")})
    data = response.json()
    assert data["ok"] is True
    assert data["results"][0]["addr"] == "0x105dc"

    broken = "100: 00000013\tx\n(Move(Var(\"X8\",Imm(0)),Int(1,8)))\n"
    data = client.post("/typecheck", json={"text": broken}).json()
    assert data["ok"] is False
    assert data["results"][0]["rule"] == "twf_imm"


def test_run_endpoint(client):
    response = client.post("/run", json={
        "text": fixture_text("example_move.bil.adt"),
        "entry": "test",
    })
    data = response.json()
    assert data["outcome"] == "terminated"
    assert data["steps"] == 1
    assert data["final_pc"] == "0x105e0"


def test_run_unknown_entry_is_400(client):
    response = client.post("/run", json={
        "text": fixture_text("example_move.bil.adt"),
        "entry": "nosuch",
    })
    assert response.status_code == 400


def test_check_endpoint_double_free(client):
    response = client.post("/check", json={
        "text": fixture_text("double_free_bad.bil.adt"),
        "property": "double-free",
        "mode": "incorrect",
        "stubs": fixture_text("double_free.stubs"),
        "pre_states": 10,
    })
    data = response.json()
    assert data["verdict"] == "WITNESS"
    ops = [op["op"] for op in data["report"]["witness"]["run"]["observer"]]
    assert ops == ["alloc", "free", "free"]


def test_check_endpoint_av_rule(client):
    response = client.post("/check", json={
        "text": fixture_text("av_rule_23.bil.adt"),
        "property": "av-rule=23",
        "mode": "incorrect",
        "stubs": fixture_text("av.stubs"),
        "pre_states": 5,
    })
    data = response.json()
    assert data["verdict"] == "WITNESS"
    assert "0x11000" in data["report"]["witness"]["run"]["observer"]
    # exactly the forbidden calls made, no more
    assert data["report"]["witness"]["matched_symbols"] == ["atoi"]


def test_check_rejects_unknown_property(client):
    response = client.post("/check", json={
        "text": fixture_text("double_free_bad.bil.adt"),
        "property": "use-after-free",
        "mode": "incorrect",
    })
    assert response.status_code == 400


def test_slice_endpoint(client):
    response = client.post("/slice", json={
        "text": fixture_text("slice_plt.bil.adt"),
        "subroutines": ["f"],
    })
    data = response.json()
    assert data["instructions_before"] == 10
    assert data["instructions_after"] == 8
    assert set(data["symbols"]) == {"f", "g", "puts"}
    # the canonical output reparses
    reparse = client.post("/parse", json={"text": data["canonical"]})
    assert reparse.json()["instructions"] == 8
