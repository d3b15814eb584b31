import socket
import threading
import time

import pytest
import uvicorn
from fastapi.testclient import TestClient

from udn_handover import cli
from udn_handover.model import dumps_config, load_config, loads_config, to_raw
from udn_handover.service import app


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


@pytest.fixture(scope="module")
def raw():
    return to_raw(load_config())


def test_health(client):
    assert client.get("/health").json()["status"] == "ok"


def test_default_config_round_trips(client):
    body = client.get("/config/default").json()
    assert loads_config(body["toml"]) == load_config()
    assert body["config"]["tiers"][0]["lambda_per_km2"] == 3.0


def test_normalize_accepts_sections_and_lists(client, raw):
    as_list = dict(raw, tiers=list(raw["tiers"].values()))
    a = client.post("/config/normalize", json=raw).json()
    b = client.post("/config/normalize", json=as_list).json()
    assert a == b


@pytest.mark.parametrize("patch, field", [
    ({"user": {"eta": 2.0}}, "user.eta"),
    ({"seed": -1}, "seed"),
    ({"seed": 2**64}, "seed"),
    ({"tiers": {"0": {"id": "m", "lambda_per_km2": 0, "power_dbm": 46}}}, "lambda_per_km2"),
    ({"tiers": {"x": {"id": "m", "lambda_per_km2": 3, "power_dbm": 46}}}, "tiers"),
    ({"sim": {"trajectory": "spiral"}}, "trajectory"),
    ({"bogus": 1}, "bogus"),
])
def test_invalid_configs_are_422(client, raw, patch, field):
    body = dict(raw)
    body.update(patch)
    resp = client.post("/config/normalize", json=body)
    assert resp.status_code == 422
    assert field in str(resp.json()["detail"])


def test_analyze(client, raw):
    body = client.post("/analyze", json=raw).json()
    assert body["tier_ids"] == ["m", "s"]
    assert body["association"]["m"]["total"] == pytest.approx(0.801173, abs=1e-6)
    assert body["thresholds_m"]["m"] == pytest.approx(73.96, abs=0.01)
    assert body["thresholds_m"]["s"] == 0
    assert sum(body["hol_per_km"].values()) == pytest.approx(body["hol_total_per_km"])
    assert body["rate_total_per_h"] == pytest.approx(30 * body["hol_total_per_km"])


def test_analyze_rejects_three_tiers(client, raw):
    body = dict(raw)
    body["tiers"] = dict(raw["tiers"], **{"2": dict(raw["tiers"]["1"], id="p")})
    assert client.post("/analyze", json=body).status_code == 422


def test_sweep_endpoint(client, raw):
    req = {"config": raw, "variable": "user_height", "start": 0, "stop": 10, "points": 3}
    body = client.post("/sweep", json=req).json()
    assert body["csv"].startswith("user_height_m,A_m,A_s,")
    assert len(body["csv"].splitlines()) == 4 and body["failed_points"] == 0
    bad = client.post("/sweep", json=dict(req, stop=0))
    assert bad.status_code == 422 and "sweep.range" in bad.text


def test_validate_endpoint(client, raw):
    ok = client.post("/validate", json={"config": raw, "simulate": False}).json()
    assert ok["status"] == 0 and all(r["passed"] for r in ok["rows"])
    bad = client.post("/validate", json={"config": raw, "simulate": False, "mutate_beta": 1.3}).json()
    assert bad["status"] == 1
    assert "FAIL" in bad["report"]


# command line -----------------------------------------------------------------

def test_cli_dump_config(tmp_path, capsys):
    assert cli.main(["dump-config", "--seed", "42"]) == 0
    text = capsys.readouterr().out
    assert loads_config(text).seed == 42
    assert cli.main(["dump-config", "--out", str(tmp_path)]) == 0
    assert loads_config((tmp_path / "config.toml").read_text()) == load_config()


def test_cli_overrides_reach_config(tmp_path, capsys):
    assert cli.main(["dump-config", "--realizations", "7", "--traj-km", "2.5"]) == 0
    cfg = loads_config(capsys.readouterr().out)
    assert cfg.sim.realizations == 7 and cfg.sim.trajectory_length == 2500.0


def test_cli_sweep_writes_stable_csv(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["sweep", "--variable", "user_height", "--start", "0", "--stop", "30", "--points", "3",
            "--mc", "--realizations", "2", "--traj-km", "0.5", "--seed", "9", "--events"]
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    name = "sweep_user_height.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "events_000.csv").read_bytes() == (b / "events_000.csv").read_bytes()
    assert (a / name).read_bytes().decode("utf-8").splitlines()[0].startswith("user_height_m,")


def test_cli_validate_exit_codes(tmp_path, capsys):
    assert cli.main(["validate", "--no-mc", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "validation.csv").exists()
    assert cli.main(["validate", "--no-mc", "--mutate-beta", "1.5"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_cli_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('[tiers.0]\nid = "m"\nlambda_per_km2 = 3\npower_dbm = 46\n[user]\neta = 1.5\n')
    assert cli.main(["validate", "--config", str(bad)]) == 2
    assert "user.eta" in capsys.readouterr().err
    broken = tmp_path / "broken.toml"
    broken.write_text("[tiers.0\n")
    assert cli.main(["dump-config", "--config", str(broken)]) == 2
    assert cli.main(["dump-config", "--config", str(tmp_path / "missing.toml")]) == 2
    assert cli.main(["sweep", "--start", "3", "--stop", "3"]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["sweep", "--seed", str(2**64)])
    assert exc.value.code == 2


def test_cli_plot_script(tmp_path, capsys):
    assert cli.main(["sweep", "--preset", "fig4", "--out", str(tmp_path)]) == 0
    assert cli.main(["plot-script", str(tmp_path / "sweep_fig4.csv"), "--out", str(tmp_path / "plots")]) == 0
    assert (tmp_path / "plots" / "sweep_fig4_plot.py").exists()
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert cli.main(["plot-script", str(empty)]) == 2


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_cli_against_running_server(tmp_path, capsys):
    port = _free_port()
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        for _ in range(100):
            if server.started:
                break
            time.sleep(0.05)
        url = f"http://127.0.0.1:{port}"
        assert cli.main(["dump-config", "--server", url]) == 0
        assert loads_config(capsys.readouterr().out) == load_config()
        remote, local = tmp_path / "remote", tmp_path / "local"
        assert cli.main(["sweep", "--preset", "fig4", "--server", url, "--out", str(remote)]) == 0
        assert cli.main(["sweep", "--preset", "fig4", "--out", str(local)]) == 0
        assert (remote / "sweep_fig4.csv").read_bytes() == (local / "sweep_fig4.csv").read_bytes()
        assert cli.main(["validate", "--no-mc", "--server", url, "--mutate-beta", "2"]) == 1
    finally:
        server.should_exit = True
        thread.join(timeout=10)
    assert cli.main(["dump-config", "--server", url]) == 1


def test_shipped_config_text_is_canonical():
    assert loads_config(dumps_config(load_config())) == load_config()
