import json
import re
import struct

import numpy as np
import pytest

from icdilate.cli import main

GEN_SPEC = {
    "distribution": {"kind": "uniform", "a": 1.0},
    "layers": [
        {"name": "c0", "k": 1, "d_max": 2, "c_in": 3, "c_out": 8, "affine": True},
        {"name": "pw", "k": 0, "d_max": 2, "c_in": 8, "c_out": 6},
        {"name": "c1", "k": 1, "d_max": 2, "c_in": 6, "c_out": 4,
         "stride": [2, 2], "affine": True},
    ],
}


@pytest.fixture
def spec_file(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(GEN_SPEC))
    return p


def run_pipeline(tmp_path, spec_file, seed=7):
    model = tmp_path / "m.icw"
    assign = tmp_path / "assign.json"
    icw = tmp_path / "ic.icw"
    assert main(["gen", "--seed", str(seed), "--spec", str(spec_file),
                 "--out", str(model)]) == 0
    assert main(["search", "--model", str(model), "--dmax", "2",
                 "--out", str(assign)]) == 0
    assert main(["apply", "--model", str(model), "--assign", str(assign),
                 "--out", str(icw)]) == 0
    return model, assign, icw


class TestCost:
    def test_k1_dmax4_ratio_in_json(self, tmp_path, capsys):
        spec = tmp_path / "cost.json"
        spec.write_text(json.dumps({
            "layers": [{"name": "c", "k": 1, "d_max": 4,
                        "c_in": 64, "c_out": 64}],
        }))
        assert main(["cost", "--spec", str(spec), "--input", "56,56"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["reports"][0]["ratio_edo_over_darts"] == 0.5625

    def test_bad_input_string(self, tmp_path, spec_file, capsys):
        assert main(["cost", "--spec", str(spec_file), "--input", "56"]) == 2


class TestSearch:
    def test_dmax1_selects_all_dense(self, tmp_path, capsys):
        spec = tmp_path / "d1.json"
        spec.write_text(json.dumps({
            "layers": [{"name": "c", "k": 1, "d_max": 1, "c_in": 2, "c_out": 3}],
        }))
        model, assign = tmp_path / "m.icw", tmp_path / "a.json"
        assert main(["gen", "--seed", "1", "--spec", str(spec),
                     "--out", str(model)]) == 0
        assert main(["search", "--model", str(model), "--dmax", "1",
                     "--out", str(assign)]) == 0
        doc = json.loads(assign.read_text())
        assert doc["assignments"][0]["patterns"] == [[1, 1], [1, 1], [1, 1]]

    def test_errors_rendered_with_9_significant_digits(self, tmp_path, spec_file):
        _, assign, _ = run_pipeline(tmp_path, spec_file)
        text = assign.read_text()
        for tok in re.findall(r"-?\d+\.\d+(?:e-?\d+)?", text):
            assert len(tok.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 9
        doc = json.loads(text)
        assert doc["skipped"] == ["pw"]

    def test_search_rejects_inception_container(self, tmp_path, spec_file, capsys):
        _, _, icw = run_pipeline(tmp_path, spec_file)
        assert main(["search", "--model", str(icw), "--dmax", "2",
                     "--out", str(tmp_path / "x.json")]) == 2

    def test_dmax_mismatch_exits_2(self, tmp_path, spec_file, capsys):
        model = tmp_path / "m.icw"
        assert main(["gen", "--seed", "1", "--spec", str(spec_file),
                     "--out", str(model)]) == 0
        assert main(["search", "--model", str(model), "--dmax", "4",
                     "--out", str(tmp_path / "x.json")]) == 2
        assert "c0" in capsys.readouterr().err


class TestApply:
    def test_stale_assignment_rejected(self, tmp_path, spec_file, capsys):
        model, assign, _ = run_pipeline(tmp_path, spec_file)
        doc = json.loads(assign.read_text())
        doc["assignments"][0]["errors"][0] += 1.0
        stale = tmp_path / "stale.json"
        stale.write_text(json.dumps(doc))
        assert main(["apply", "--model", str(model), "--assign", str(stale),
                     "--out", str(tmp_path / "x.icw")]) == 2
        assert "does not match weights" in capsys.readouterr().err


class TestVerify:
    def test_full_pipeline_verifies(self, tmp_path, spec_file, capsys):
        model, _, icw = run_pipeline(tmp_path, spec_file)
        assert main(["verify", "--supernet", str(model), "--ic", str(icw),
                     "--trials", "2", "--seed", "5", "--exact"]) == 0
        out = json.loads(capsys.readouterr().out.splitlines()[-1])
        assert out["ok"] is True

    def test_tampered_weights_fail_with_site(self, tmp_path, spec_file, capsys):
        model, _, icw = run_pipeline(tmp_path, spec_file)
        raw = bytearray(icw.read_bytes())
        _, hlen = struct.unpack("<IQ", raw[8:20])
        blob_at = 20 + hlen + (64 - (20 + hlen) % 64) % 64
        val = struct.unpack_from("<f", raw, blob_at)[0]
        struct.pack_into("<f", raw, blob_at, val + 0.5)
        bad = tmp_path / "tampered.icw"
        bad.write_bytes(bytes(raw))
        capsys.readouterr()
        assert main(["verify", "--supernet", str(model), "--ic", str(bad),
                     "--trials", "1", "--seed", "5"]) == 1
        out = capsys.readouterr().out
        assert out.startswith("FAIL:")
        assert "c0" in out and "channel" in out


class TestBench:
    def test_structure_and_mac_parity_line(self, tmp_path, spec_file, capsys):
        _, _, icw = run_pipeline(tmp_path, spec_file)
        capsys.readouterr()
        assert main(["bench", "--ic", str(icw), "--input", "1,3,12,12",
                     "--reps", "3"]) == 0
        out = capsys.readouterr().out
        det, timings = out.split("--- timings (machine-dependent) ---")
        for line in det.strip().splitlines():
            doc = json.loads(line)
            assert doc["mac_ratio"] == 1.0
        assert len(timings.strip().splitlines()) == 2

    def test_bad_shape_exits_2(self, tmp_path, spec_file):
        _, _, icw = run_pipeline(tmp_path, spec_file)
        assert main(["bench", "--ic", str(icw), "--input", "1,3,12",
                     "--reps", "3"]) == 2


class TestExitCodes:
    def test_missing_file_is_2(self, tmp_path):
        assert main(["search", "--model", str(tmp_path / "no.icw"),
                     "--dmax", "2", "--out", str(tmp_path / "x.json")]) == 2

    def test_usage_error_is_2(self):
        assert main(["search"]) == 2

    def test_unknown_command_is_2(self):
        assert main(["frobnicate"]) == 2


class TestDeterminism:
    def test_pipeline_bytes_stable_across_runs_and_threads(
        self, tmp_path, spec_file, monkeypatch, capsys
    ):
        outputs = []
        for run, threads in ((0, "1"), (1, "1"), (2, "2")):
            monkeypatch.setenv("ICDILATE_THREADS", threads)
            d = tmp_path / f"run{run}"
            d.mkdir()
            model, assign, icw = run_pipeline(d, spec_file)
            outputs.append(
                (model.read_bytes(), assign.read_bytes(), icw.read_bytes())
            )
        assert outputs[0] == outputs[1] == outputs[2]

    def test_search_stdout_is_stable(self, tmp_path, spec_file, capsys):
        model = tmp_path / "m.icw"
        main(["gen", "--seed", "3", "--spec", str(spec_file), "--out", str(model)])
        capsys.readouterr()
        main(["search", "--model", str(model), "--dmax", "2",
              "--out", str(tmp_path / "a1.json")])
        out1 = capsys.readouterr().out.replace("a1.json", "a.json")
        main(["search", "--model", str(model), "--dmax", "2",
              "--out", str(tmp_path / "a2.json")])
        out2 = capsys.readouterr().out.replace("a2.json", "a.json")
        assert out1 == out2
