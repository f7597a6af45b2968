import json
import socket
import subprocess
import sys

import pytest

from encounter.cli import main
from encounter.protocol import read_trace
from encounter.trajectories import ROBOT_FILE, SCENE_DIR, TRAJ_DIR

SCENE = str(SCENE_DIR / "sphere.json")
TOUCH = str(TRAJ_DIR / "sphere_touch.jsonl")


def last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


class TestRender:
    def test_writes_trace(self, tmp_path, capsys):
        out = tmp_path / "trace.jsonl"
        assert main(["render", "--scene", SCENE, "--robot", str(ROBOT_FILE), "--hand", TOUCH,
                     "--out", str(out)]) == 0
        summary = last_json(capsys)
        trace = read_trace(out)
        assert summary["ticks"] == len(trace) > 0
        assert {o.phase.value for o in trace} >= {"idle", "approach", "contact"}

    def test_rate_and_params(self, tmp_path, capsys):
        params = tmp_path / "p.json"
        params.write_text(json.dumps({"texture": {"amplitude": 0.5}}))
        out = tmp_path / "trace.jsonl"
        assert main(["render", "--scene", SCENE, "--hand", TOUCH, "--out", str(out), "--rate", "50",
                     "--params", str(params)]) == 0
        trace = read_trace(out)
        assert abs((trace[1].t - trace[0].t) - 0.02) < 1e-12
        assert max(max(o.frame.electrodes) for o in trace) <= 0.5

    def test_missing_hand_file(self, tmp_path, capsys):
        assert main(["render", "--scene", SCENE, "--hand", str(tmp_path / "nope.jsonl"),
                     "--out", str(tmp_path / "t.jsonl")]) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_rate_out_of_range(self, tmp_path, capsys):
        assert main(["render", "--scene", SCENE, "--hand", TOUCH, "--out", str(tmp_path / "t.jsonl"),
                     "--rate", "5"]) == 1

    def test_bad_line_reports_number(self, tmp_path, capsys):
        hand = tmp_path / "h.jsonl"
        hand.write_text('{"t":0,"p":[0,0,1],"q":[1,0,0,0]}\n{"t":1,"p":[0,0]}\n')
        assert main(["render", "--scene", SCENE, "--hand", str(hand), "--out", str(tmp_path / "t.jsonl")]) == 1
        assert "line 2" in capsys.readouterr().err

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["render", "--scene", SCENE])
        assert exc.value.code == 2


class TestAnova:
    def test_wide(self, tmp_path, capsys):
        path = tmp_path / "w.csv"
        path.write_text("subject,a,b,c\ns1,3,5,7\ns2,2,4,9\ns3,4,4,8\ns4,1,3,6\n")
        assert main(["anova", "--input", str(path)]) == 0
        assert capsys.readouterr().out.startswith("F(2,6) = 33.86")

    def test_long_json(self, tmp_path, capsys):
        path = tmp_path / "r.csv"
        rows = ["subject,trial,presented,answered"]
        answers = {0: "sphere cube pyramid edge", 1: "sphere cube cube edge", 2: "cube cube pyramid sphere"}
        shapes = ["sphere", "cube", "pyramid", "edge"]
        for s, ans in answers.items():
            for i, (p, a) in enumerate(zip(shapes, ans.split())):
                rows.append(f"s{s},{i},{p},{a}")
        path.write_text("\n".join(rows) + "\n")
        assert main(["anova", "--input", str(path), "--json"]) == 0
        d = last_json(capsys)
        assert d["conditions"] == shapes and d["n"] == 3 and (d["df1"], d["df2"]) == (3, 6)

    def test_degenerate(self, tmp_path, capsys):
        path = tmp_path / "w.csv"
        path.write_text("subject,a,b\ns1,1,1\ns2,1,1\n")
        assert main(["anova", "--input", str(path)]) == 1
        assert "error:" in capsys.readouterr().err


class TestExperiment:
    def test_small_run(self, tmp_path, capsys):
        out = tmp_path / "exp"
        assert main(["experiment", "--out", str(out), "--shapes", "cube", "sphere", "--trials", "1",
                     "--seed", "2"]) == 0
        assert last_json(capsys)["traces"] == 2
        assert (out / "responses.csv").exists() and (out / "diagnostics.json").exists()

    def test_unknown_shape(self, tmp_path, capsys):
        assert main(["experiment", "--out", str(tmp_path), "--shapes", "torus"]) == 1


def test_console_module_help():
    r = subprocess.run([sys.executable, "-m", "encounter.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("render", "serve", "experiment", "anova"):
        assert cmd in r.stdout


def test_serve_subprocess():
    proc = subprocess.Popen([sys.executable, "-m", "encounter.cli", "serve", "--scene", SCENE, "--port", "0"],
                            stdout=subprocess.PIPE, text=True)
    try:
        host, port = proc.stdout.readline().split()[-1].rsplit(":", 1)
        with socket.create_connection((host, int(port)), timeout=30) as sock:
            f = sock.makefile("rw", encoding="utf-8", newline="\n")
            f.write('{"t":0,"p":[0.3,0,0.6],"q":[1,0,0,0]}\nnot json\n')
            f.flush()
            assert json.loads(f.readline())["phase"] == "idle"
            assert json.loads(f.readline()) == {"err": "parse"}
    finally:
        proc.terminate()
        proc.wait(timeout=10)
        proc.stdout.close()
