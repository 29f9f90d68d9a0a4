import json

import httpx
import pytest
from fastapi.testclient import TestClient

from sausage import cli
from sausage.service import app

client = TestClient(app)


def test_health():
    r = client.get("/health")
    assert r.status_code == 200 and "capacity" in r.json()["subcommands"]


def test_run_capacity_over_http():
    r = client.post("/run/capacity", json={"d": 3, "points": [[0, 0, 0], [1, 0, 0]]})
    assert r.status_code == 200
    body = r.json()
    assert body["exit_code"] == 0 and body["path"] is None
    assert body["estimates"][0]["mean"] == pytest.approx(2 / (2 * 1.516386059151978 - 1), rel=1e-9)


def test_http_errors():
    assert client.post("/run/teleport", json={}).status_code == 404
    r = client.post("/run/sausage", json={"d": 4, "N": 2, "points": "0 0 0 0"})
    assert r.status_code == 422
    assert r.json()["detail"]["field"] == "d"
    r = client.post("/run/capacity", json={"d": 3, "points": [[0, 0]]})
    assert r.status_code == 422


def test_parse_extra():
    assert cli.parse_extra(["--n", "5", "--ns=1,2", "--spine-in-future"]) == {
        "n": "5", "ns": "1,2", "spine_in_future": "true"}


def test_cli_local(capsys, tmp_path):
    f = tmp_path / "A.txt"
    f.write_text("d=3\n0 0 0\n")
    code = cli.main(["capacity", "--set", str(f), "--d", "3", "--no-write"])
    out = json.loads(capsys.readouterr().out)
    assert code == 0 and out["estimates"][0]["mean"] == pytest.approx(1 / 1.516386059151978)


def test_cli_config_file_and_flag_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[experiment]\nsubcommand = capacity\nd = 3\npoints = 0 0 0; 2 0 0\n"
                   "[params]\nmethod = qp\n")
    code = cli.main(["capacity", "--config", str(cfg), "--method", "exact",
                     "--output", str(tmp_path / "res")])
    out = json.loads(capsys.readouterr().out)
    assert code == 0 and out["estimates"][0]["method"] == "exact_linear"
    assert (tmp_path / "res" / "capacity").is_dir()


def test_cli_errors(capsys):
    code = cli.main(["sausage", "--d", "4", "--N", "2", "--points", "0 0 0 0", "--no-write"])
    err = capsys.readouterr().err
    assert code == 2 and "d > 2N required" in err
    code = cli.main(["capacity", "--config", "/nonexistent.cfg"])
    assert code == 2


def test_cli_remote(monkeypatch, capsys, tmp_path):
    def fake_post(url, json, timeout):
        assert url.startswith("http://svc/run/")
        r = client.post(url.removeprefix("http://svc"), json=json)
        return httpx.Response(r.status_code, json=r.json())
    monkeypatch.setattr(httpx, "post", fake_post)
    f = tmp_path / "A.txt"
    f.write_text("d=3\n0 0 0\n1 0 0\n")
    code = cli.main(["capacity", "--set", str(f), "--server", "http://svc/", "--no-write"])
    assert code == 0
    # g(e1) = g(0) - 1 in any dimension
    assert json.loads(capsys.readouterr().out)["estimates"][0]["mean"] == pytest.approx(
        2 / (2 * 1.516386059151978 - 1), rel=1e-9)
    code = cli.main(["capacity", "--points", "0 0", "--d", "3", "--server", "http://svc"])
    assert code == 2
