import json
import re
import subprocess
import sys

import pytest

import cpps_cascade.cascade as cascade_mod
from cpps_cascade.cli import main


def test_run_empty_attack(tmp_path, capsys):
    assert main(["run", "--case", "case30", "--cyber", "mirror", "--summary", str(tmp_path / "s.json")]) == 0
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["blackout"] is False and summary["iterations"] == 1
    # nothing failed, so every MW is either served or shed
    assert summary["served_load_mw"] + summary["shed_load_mw"] == pytest.approx(
        summary["initial_load_mw"], abs=1e-6)


def test_run_summary_to_stdout(capsys):
    assert main(["run", "--case", "case30", "--attack-branches", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["attack_branches"] == [3]


def test_missing_case_file(tmp_path, capsys):
    assert main(["run", "--case", str(tmp_path / "nope.m")]) == 2
    assert "not found" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["run", "--case", "case30", "--attack-buses", "1,x"],
    ["run", "--case", "case30", "--cyber", "star"],
    ["run", "--case", "case30", "--attack-buses", "999"],
    ["run", "--case", "case30", "--cyber", "file:/no/such/edges.txt"],
    ["sweep", "--case", "case30", "--k-min", "5", "--k-max", "2", "--out", "x.csv"],
    ["sweep", "--case", "case30"],
])
def test_input_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        sys.exit(main(argv))
    assert exc.value.code == 2


def test_malformed_case_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.m"
    bad.write_text("mpc.baseMVA = 100;\nmpc.bus = [\n 1 3 0;\n];\n")
    assert main(["run", "--case", str(bad)]) == 2
    assert "line" in capsys.readouterr().err


def test_safety_cap_exit_3(monkeypatch, capsys):
    # a phase B that never stops drives a power-only run into the cap
    monkeypatch.setattr(cascade_mod, "phase_b", lambda state: state)
    assert main(["run", "--case", "case30"]) == 3
    assert json.loads(capsys.readouterr().out)["abnormal_termination"] is True


def test_snapshot_sequence_118_mirror(tmp_path):
    snaps = tmp_path / "snaps"
    code = main(["run", "--case", "case118", "--cyber", "mirror", "--random-buses", "2", "--seed", "3",
                 "--snapshots", str(snaps), "--summary", str(tmp_path / "s.json")])
    assert code == 0
    names = sorted(p.name for p in snaps.iterdir())
    tags = [re.fullmatch(r"\d{3}_(\d{2})(trigger|[ABCD])\.json", n).groups() for n in names]
    assert tags[0] == ("00", "trigger")
    body = tags[1:]
    for i, (it, phase) in enumerate(body):
        assert phase == "ABCD"[i % 4]
        assert int(it) == i // 4 + 1
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["iterations"] == int(body[-1][0])
    assert len(summary["attack_buses"]) == 2


def test_snapshot_files_are_self_describing(tmp_path):
    snaps = tmp_path / "snaps"
    main(["run", "--case", "case30", "--cyber", "mirror", "--attack-buses", "6,10", "--snapshots", str(snaps),
          "--summary", str(tmp_path / "s.json")])
    for path in sorted(snaps.iterdir()):
        doc = json.loads(path.read_text())
        assert {"iteration", "phase", "served_load_mw", "power", "cyber"} <= set(doc)
        islands = {i["id"] for i in doc["power"]["islands"]}
        for bus in doc["power"]["buses"]:
            assert bus["island"] == "failed" or bus["island"] in islands
        assert all(isinstance(b["in_service"], bool) for b in doc["power"]["branches"])
        assert doc["served_load_mw"] == pytest.approx(sum(i["served_load_mw"] for i in doc["power"]["islands"]))
        assert doc["cyber"]["layer"] == "cyber"


def test_sweep_rows_and_replay(tmp_path):
    argv = ["sweep", "--case", "case30", "--cyber", "mirror", "--k-min", "0", "--k-max", "3", "--runs", "4",
            "--seed", "11"]
    assert main(argv + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b.csv"), "--workers", "2"]) == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0] == "k,runs,blackouts,probability,ci95"
    assert len(lines) - 1 == 3 - 0 + 1
    assert lines[1].startswith("0,4,0,0.000000")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cpps_cascade", "run", "--case", "case30"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["blackout"] is False
