import copy
import json
import subprocess
import sys

import numpy as np
import pytest

from tbemon import cli
from tbemon.aggregate import load_artifact, save_artifact
from tbemon.calibrate import replication_rng, run_once
from tbemon.distributions import MobeParams, params_to_dict
from tbemon.monitor import events_to_ndjson
from tbemon.scenarios import make_scenarios
from tbemon.transform import events_from_pairs

IC = {"family": "mobe", "params": {"lambda1": 0.2, "lambda2": 0.2}}
SMALL = ["--m", "20000", "--pool-size", "1000", "--burn-in", "10000", "--spacing", "50"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def ic_file(tmp_path):
    path = tmp_path / "ic.json"
    path.write_text(json.dumps(IC))
    return path


@pytest.fixture
def calibrated(tmp_path, small_artifact):
    """Copy of the shared small artifact with both charts calibrated."""
    art = load_artifact_copy(small_artifact, tmp_path)
    return art


def load_artifact_copy(art, tmp_path):
    path = tmp_path / "cal.art"
    art = copy.deepcopy(art)
    art.h = 2.0
    art.target = {"metric": "ats", "value": 100.0, "R": 1, "seed": 0}
    art.meta["shewhart"] = {"h": 4.0, "target": {"metric": "ats", "value": 100.0}}
    save_artifact(art, path)
    return path


class TestBuild:
    def test_checksum_reproducible(self, capsys, tmp_path, ic_file):
        digests = []
        for name in ("a.art", "b.art"):
            code, out, _ = run(capsys, "build", "--ic", ic_file, *SMALL, "--seed", 5,
                               "--out", tmp_path / name)
            assert code == 0
            digests.append(json.loads(out)["sha256"])
        assert digests[0] == digests[1]
        assert (tmp_path / "a.art").read_bytes() == (tmp_path / "b.art").read_bytes()

    def test_real_data_params(self, capsys, tmp_path):
        path = tmp_path / "mobw.json"
        path.write_text(json.dumps({"family": "mobw", "params": {
            "lambda1": 0.0435, "lambda2": 0.0105, "lambda3": 5.78e-8, "eta": 1.1677}}))
        code, out, _ = run(capsys, "build", "--ic", path, *SMALL, "--seed", 1,
                           "--out", tmp_path / "m.art")
        assert code == 0
        assert load_artifact(tmp_path / "m.art").ic.eta == 1.1677

    def test_missing_family(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"params": {"lambda1": 1, "lambda2": 1}}))
        code, _, err = run(capsys, "build", "--ic", path, "--out", tmp_path / "x.art")
        assert code == 1 and "missing field: family" in err

    def test_from_scenario(self, capsys, tmp_path):
        code, out, _ = run(capsys, "build", "--family", "gumbel", "--scenario", 2, *SMALL,
                           "--seed", 1, "--out", tmp_path / "g.art")
        assert code == 0
        assert load_artifact(tmp_path / "g.art").ic.delta == 0.5

    def test_seed_printed_when_absent(self, capsys, tmp_path, ic_file):
        code, _, err = run(capsys, "build", "--ic", ic_file, "--m", 2000, "--pool-size", 10,
                           "--burn-in", 0, "--out", tmp_path / "s.art")
        assert code == 0 and err.startswith("seed: ")


class TestCalibrate:
    def test_calibrate_and_simulate(self, capsys, tmp_path, small_artifact):
        path = tmp_path / "c.art"
        save_artifact(small_artifact, path)
        code, out, _ = run(capsys, "calibrate", "--artifact", path, "--target", 100,
                           "--r-coarse", 1000, "--r-fine", 4000, "--tol", 0.03, "--seed", 2)
        assert code == 0
        h = json.loads(out)["h"]
        assert load_artifact(path).h == h
        code, out, _ = run(capsys, "simulate", "--artifact", path, "--R", 4000, "--seed", 9)
        res = json.loads(out)
        assert abs(res["ats"] - 100) <= max(3.0, 3 * res["ats_se"])

    def test_anos_mode(self, capsys, tmp_path, small_artifact):
        path = tmp_path / "c.art"
        save_artifact(small_artifact, path)
        code, out, _ = run(capsys, "calibrate", "--artifact", path, "--metric", "arl",
                           "--target", 30, "--r-coarse", 1000, "--r-fine", 4000,
                           "--tol", 0.03, "--seed", 2)
        assert code == 0 and json.loads(out)["metric"] == "anos"
        assert load_artifact(path).target["metric"] == "anos"

    def test_unreachable_target(self, capsys, tmp_path, small_artifact):
        path = tmp_path / "c.art"
        save_artifact(small_artifact, path)
        code, _, err = run(capsys, "calibrate", "--artifact", path, "--target", 1e9,
                           "--seed", 1)
        assert code == 1 and "error" in err

    def test_simulate_oc_file(self, capsys, tmp_path, calibrated):
        oc = tmp_path / "oc.json"
        oc.write_text(json.dumps(params_to_dict(MobeParams(1.0, 1.0))))
        code, out, _ = run(capsys, "simulate", "--artifact", calibrated, "--oc", oc,
                           "--R", 200, "--seed", 1)
        assert code == 0 and json.loads(out)["ats"] < 20

    def test_simulate_shewhart(self, capsys, calibrated):
        code, out, _ = run(capsys, "simulate", "--artifact", calibrated, "--chart", "shewhart",
                           "--R", 200, "--seed", 1)
        assert code == 0 and json.loads(out)["h"] == 4.0


class TestTable:
    def _args(self, tmp_path, csv_name):
        rows = tmp_path / "rows.json"
        rows.write_text(json.dumps([[5, 5], [2.5, 2.5], [10, 10]]))
        return ["table", "--family", "mobe", "--scenario", 1, "--rows", rows,
                "--artifact", tmp_path / "t.art", "--R", 200, "--seed", 3,
                "--csv", tmp_path / csv_name]

    def test_deterministic(self, capsys, tmp_path, small_artifact):
        a = self._args(tmp_path, "a.csv")
        a[a.index("--artifact") + 1] = tmp_path / "t.art"
        art = copy.deepcopy(small_artifact)
        art.h = 2.0
        art.meta["shewhart"] = {"h": 4.5}
        save_artifact(art, tmp_path / "t.art")
        code, out, _ = run(capsys, *a)
        assert code == 0
        code, _, _ = run(capsys, *self._args(tmp_path, "b.csv"))
        first = (tmp_path / "a.csv").read_bytes()
        assert first == (tmp_path / "b.csv").read_bytes()
        lines = first.decode().splitlines()
        assert lines[0].startswith("scenario,row,mean1,mean2,chart,ats")
        assert len(lines) == 1 + 3 * 2
        assert "acusum" in out and "shewhart" in out

    def test_zero_replications(self, capsys, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["table", "--family", "mobe", "--scenario", "1", "--R", "0"])
        assert exc.value.code == 1

    def test_artifact_mismatch(self, capsys, tmp_path, small_artifact):
        save_artifact(small_artifact, tmp_path / "t.art")
        code, _, err = run(capsys, "table", "--family", "mobe", "--scenario", 3,
                           "--artifact", tmp_path / "t.art", "--R", 10, "--seed", 1)
        assert code == 1 and "do not match" in err


class TestTransform:
    def test_ndjson(self, capsys, tmp_path, ic_file):
        src = tmp_path / "ev.ndjson"
        src.write_text('{"i": 1, "rank": "first", "x": 2.0, "v": 1}\n'
                       '{"i": 1, "rank": "second", "x": 3.0}\n'
                       '{"i": 2, "rank": "tied", "x": 1.0}\n')
        code, out, _ = run(capsys, "transform", "--ic", ic_file, "--input", src)
        recs = [json.loads(line) for line in out.splitlines()]
        assert code == 0
        assert [r["label"] for r in recs] == [1, 3, 1]
        assert [r["t"] for r in recs] == [1, 2, 3]
        assert recs[0]["z"] == pytest.approx(0.8)
        assert recs[1]["z"] == pytest.approx(0.2)

    def test_csv(self, capsys, tmp_path, ic_file):
        src = tmp_path / "p.csv"
        src.write_text("x1,x2\n3,2\n1,1\n")
        code, out, _ = run(capsys, "transform", "--ic", ic_file, "--input", src)
        assert code == 0
        assert [json.loads(line)["label"] for line in out.splitlines()] == [1, 3, 1]

    @pytest.mark.parametrize("text,needle", [
        ('{"i": 1, "rank": "first", "x": 2.0, "v": 1}\nnot json\n', "line 2"),
        ('{"i": 1, "rank": "second", "x": 2.0}\n', "without a first"),
        ('{"i": 1, "rank": "first", "x": 2.0}\n', "line 1"),
    ])
    def test_errors(self, capsys, tmp_path, ic_file, text, needle):
        src = tmp_path / "bad.ndjson"
        src.write_text(text)
        code, _, err = run(capsys, "transform", "--ic", ic_file, "--input", src)
        assert code == 1 and needle in err

    def test_csv_error_line(self, capsys, tmp_path, ic_file):
        src = tmp_path / "bad.csv"
        src.write_text("x1,x2\n1,2\n3,abc\n")
        code, _, err = run(capsys, "transform", "--ic", ic_file, "--input", src)
        assert code == 1 and "line 3" in err


def _oc_events(scenario, art, seed, index, obs_needed, chart="acusum"):
    """Event stream identical to the one run_once draws for replication index."""
    rng = replication_rng(seed, index)
    # only the CUSUM bank starts from a pool snapshot
    k = int(rng.integers(len(art.pool))) if chart == "acusum" else 0
    x1s, x2s = [], []
    nvec, total = 64, 0
    while total < 2 * obs_needed + 2:
        a, b = scenario.oc.sample(nvec, rng)
        x1s.append(a)
        x2s.append(b)
        total += nvec
        nvec = min(2 * nvec, 4096)
    return k, events_from_pairs(np.concatenate(x1s), np.concatenate(x2s))


class TestMonitor:
    def test_empty_input(self, capsys, tmp_path, calibrated):
        src = tmp_path / "empty.ndjson"
        src.write_text("")
        code, out, _ = run(capsys, "monitor", "--artifact", calibrated, "--input", src,
                           "--seed", 1)
        assert code == 0 and out == ""

    @pytest.mark.parametrize("chart", ["acusum", "shewhart"])
    def test_matches_simulation(self, capsys, tmp_path, calibrated, chart):
        art = load_artifact(calibrated)
        sc = make_scenarios("mobe", 1)[5]
        h = art.h if chart == "acusum" else art.meta["shewhart"]["h"]
        for index in range(5):
            res = run_once(sc, art, h, chart, replication_rng(11, index))
            k, events = _oc_events(sc, art, 11, index, res.obs, chart)
            src = tmp_path / f"ev{index}.ndjson"
            src.write_text(events_to_ndjson(events))
            code, out, _ = run(capsys, "monitor", "--artifact", calibrated, "--chart", chart,
                               "--input", src, "--snapshot", k, "--alarms-only")
            assert code == 2
            alarm = json.loads(out.splitlines()[0])
            assert alarm["t"] == res.obs
            assert alarm["elapsed"] == pytest.approx(res.time, rel=1e-9)

    def test_status_records_and_continue(self, capsys, tmp_path, calibrated):
        rng = np.random.default_rng(0)
        x1, x2 = MobeParams(1.0, 1.0).sample(40, rng)
        src = tmp_path / "p.csv"
        src.write_text("x1,x2\n" + "".join(f"{a},{b}\n" for a, b in zip(x1, x2)))
        code, out, _ = run(capsys, "monitor", "--artifact", calibrated, "--input", src,
                           "--init", "zero", "--continue")
        recs = [json.loads(line) for line in out.splitlines()]
        status = [r for r in recs if "alarm" not in r]
        alarms = [r for r in recs if r.get("alarm")]
        assert code == 2
        assert len(status) == 80
        assert set(status[0]) == {"t", "i", "z", "label", "Q"}
        assert len(alarms) > 1
        for a in alarms:
            assert a["Q"] > 2.0
            assert max(a["q"].values()) == a["Q"]
            # a rate increase shows up in combos estimating an increase
            assert "+" in a["combo"]

    def test_strong_shift_alarms_fast(self, capsys, tmp_path, calibrated):
        src = tmp_path / "fast.csv"
        src.write_text("x1,x2\n" + "0.001,0.002\n" * 30)
        code, out, _ = run(capsys, "monitor", "--artifact", calibrated, "--input", src,
                           "--snapshot", 0)
        alarm = json.loads(out.splitlines()[-1])
        assert code == 2 and alarm["alarm"] and alarm["t"] <= 10
        assert alarm["combo"].count("+") >= 1

    def test_ic_mismatch(self, capsys, tmp_path, calibrated):
        other = tmp_path / "other.json"
        other.write_text(json.dumps(params_to_dict(MobeParams(0.3, 0.2))))
        code, _, err = run(capsys, "monitor", "--artifact", calibrated, "--ic", other,
                           "--input", "-")
        assert code == 1 and "do not match" in err

    def test_target_must_match(self, capsys, tmp_path, calibrated):
        code, _, err = run(capsys, "monitor", "--artifact", calibrated, "--target", 50)
        assert code == 1 and "calibrate" in err

    def test_h_and_target_exclusive(self, capsys, calibrated):
        code, _, err = run(capsys, "monitor", "--artifact", calibrated, "--h", 2,
                           "--target", 100)
        assert code == 1

    def test_uncalibrated(self, capsys, tmp_path, small_artifact):
        art = load_artifact_copy(small_artifact, tmp_path)
        raw = load_artifact(art)
        raw.h = None
        save_artifact(raw, tmp_path / "raw.art")
        code, _, err = run(capsys, "monitor", "--artifact", tmp_path / "raw.art")
        assert code == 1 and "calibrate" in err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "tbemon", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    for cmd in ("build", "calibrate", "simulate", "table", "transform", "monitor"):
        assert cmd in proc.stdout


def test_stop_on_alarm_flag(capsys, tmp_path, calibrated):
    src = tmp_path / "fast.csv"
    src.write_text("x1,x2\n" + "0.001,0.002\n" * 30)
    code, out, _ = run(capsys, "monitor", "--artifact", calibrated, "--input", src,
                       "--snapshot", 0, "--stop-on-alarm", "--alarms-only")
    assert code == 2 and len(out.splitlines()) == 1
    with pytest.raises(SystemExit):
        cli.main(["monitor", "--artifact", str(calibrated), "--stop-on-alarm", "--continue"])
