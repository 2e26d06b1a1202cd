import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from pitchcal.cli import EXIT_NO_INPUT, EXIT_OK, EXIT_PARTIAL, RunConfig, main
from pitchcal.io_formats import read_camera, validate_svg, write_camera
from pitchcal.synth import perturb_camera


def tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--n", "10", "--seed", "7", "--out", str(out)]) == EXIT_OK
    return out


def run(*argv):
    return main([str(a) for a in argv])


def summary(out):
    return json.loads((Path(out) / "summary.json").read_text())


def test_synth_is_deterministic(synth_dir, tmp_path):
    assert run("synth", "--n", 10, "--seed", 7, "--out", tmp_path) == EXIT_OK
    assert tree(tmp_path) == tree(synth_dir)
    assert len(list(tmp_path.glob("scene_*.camera.json"))) == 10


def test_synth_flags_and_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"noise_sigma": 0.0, "focal_range": [2000.0, 2000.0]}))
    out = tmp_path / "o"
    assert run("synth", "--n", 2, "--seed", 3, "--noise", 1.5, "--config", cfg, "--out", out) == EXIT_OK
    written = json.loads((out / "synth.config.json").read_text())
    assert written["noise_sigma"] == 1.5 and written["seed"] == 3 and written["focal_range"] == [2000.0, 2000.0]
    assert read_camera(out / "scene_0000.camera.json").focal == 2000.0


def test_evaluate_identity(synth_dir, tmp_path, capsys):
    assert run("evaluate", "--annotations", synth_dir, "--cameras", synth_dir, "--out", tmp_path) == EXIT_OK
    s = summary(tmp_path)
    assert s["n_images"] == 10 and s["taus"] == [5.0, 2.0] and s["failures"] == []
    assert s["jaccard"]["5"]["micro_jaccard"] == 1.0
    assert s["jaccard"]["2"]["micro_jaccard"] == 1.0
    assert len(list((tmp_path / "per_image").glob("*.eval.json"))) == 10
    with open(tmp_path / "dataset_tau5.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 10
    assert "JaC_5 = 1.0000" in capsys.readouterr().out


def test_evaluate_half_perturbed(synth_dir, tmp_path):
    cams = tmp_path / "cams"
    cams.mkdir()
    for i, p in enumerate(sorted(synth_dir.glob("*.camera.json"))):
        cam = read_camera(p)
        write_camera(perturb_camera(cam, 4.0, i) if i % 2 else cam, cams / p.name)
    assert run("evaluate", "--annotations", synth_dir, "--cameras", cams, "--out", tmp_path / "o") == EXIT_OK
    jac = summary(tmp_path / "o")["jaccard"]["5"]["micro_jaccard"]
    assert 0.0 < jac < 1.0


def test_missing_camera_is_partial(synth_dir, tmp_path, capsys):
    cams = tmp_path / "cams"
    shutil.copytree(synth_dir, cams)
    (cams / "scene_0003.camera.json").unlink()
    assert run("evaluate", "--annotations", synth_dir, "--cameras", cams, "--out", tmp_path / "o") == EXIT_PARTIAL
    s = summary(tmp_path / "o")
    assert s["n_images"] == 9
    assert [f["image_id"] for f in s["failures"]] == ["scene_0003"]
    assert "scene_0003" in capsys.readouterr().err


def test_unreadable_camera_is_partial(synth_dir, tmp_path):
    cams = tmp_path / "cams"
    shutil.copytree(synth_dir, cams)
    (cams / "scene_0001.camera.json").write_text('{"model": "fisheye"}')
    assert run("evaluate", "--annotations", synth_dir, "--cameras", cams, "--out", tmp_path / "o") == EXIT_PARTIAL
    assert "fisheye" in summary(tmp_path / "o")["failures"][0]["error"]


def test_no_pairs_exits_one(synth_dir, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("evaluate", "--annotations", synth_dir, "--cameras", empty, "--out", tmp_path / "o") == EXIT_NO_INPUT
    assert not (tmp_path / "o" / "summary.json").exists()


def test_manifest_overrides_pairing(synth_dir, tmp_path):
    cams = tmp_path / "cams"
    cams.mkdir()
    manifest = {}
    for p in synth_dir.glob("*.camera.json"):
        stem = p.name[: -len(".camera.json")]
        shutil.copy(p, cams / f"{stem}-gt.json")
        manifest[stem] = f"{stem}-gt.json"
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    argv = ["evaluate", "--annotations", synth_dir, "--cameras", cams, "--manifest", tmp_path / "m.json", "--out", tmp_path / "o"]
    assert run(*argv) == EXIT_OK
    assert summary(tmp_path / "o")["jaccard"]["5"]["micro_jaccard"] == 1.0


def test_legacy_convention_flag(synth_dir, tmp_path):
    from pitchcal.camera_models import ground_homography_of
    from pitchcal.io_formats import write_legacy_homography

    cams = tmp_path / "legacy"
    cams.mkdir()
    for p in synth_dir.glob("*.camera.json"):
        stem = p.name[: -len(".camera.json")]
        write_legacy_homography(ground_homography_of(read_camera(p), ignore_distortion=True), cams / f"{stem}.homography.txt")
    argv = ["evaluate", "--annotations", synth_dir, "--cameras", cams, "--legacy-homography-convention", "meters_to_pixels_center", "--out", tmp_path / "o"]
    assert run(*argv) == EXIT_OK
    assert summary(tmp_path / "o")["n_images"] == 10


def test_custom_taus(synth_dir, tmp_path):
    assert run("evaluate", "--annotations", synth_dir, "--cameras", synth_dir, "--tau", 1, "--tau", 10, "--out", tmp_path) == EXIT_OK
    assert sorted(summary(tmp_path)["jaccard"]) == ["1", "10"]
    assert (tmp_path / "dataset_tau10.csv").exists()


def test_compare_identical_dirs(synth_dir, tmp_path, capsys):
    other = tmp_path / "copy"
    shutil.copytree(synth_dir, other)
    assert run("compare", "--annotations", synth_dir, "--cameras", synth_dir, "--cameras", other, "--out", tmp_path / "o") == EXIT_OK
    with open(tmp_path / "o" / "compare.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["model", "JaC_5", "JaC_2"]
    assert rows[1][1:] == rows[2][1:]
    text = (tmp_path / "o" / "compare.txt").read_text()
    assert text == capsys.readouterr().out
    table = text.split("\n\n")[0].splitlines()
    assert len({len(line) for line in table[1:]}) == 1
    assert "67.4" in text and "92.5" in text


def test_compare_mismatch_exits_one(synth_dir, tmp_path):
    other = tmp_path / "partial"
    shutil.copytree(synth_dir, other)
    (other / "scene_0000.camera.json").unlink()
    assert run("compare", "--annotations", synth_dir, "--cameras", synth_dir, "--cameras", other, "--out", tmp_path / "o") == EXIT_NO_INPUT


def test_compare_needs_two_dirs(synth_dir, tmp_path):
    assert run("compare", "--annotations", synth_dir, "--cameras", synth_dir, "--out", tmp_path) == EXIT_NO_INPUT


@pytest.mark.slow
def test_fit_then_evaluate(tmp_path):
    data = tmp_path / "data"
    assert run("synth", "--n", 4, "--seed", 2, "--out", data) == EXIT_OK
    fits = tmp_path / "fits"
    assert run("fit", "--annotations", data, "--out", fits) == EXIT_OK
    report = json.loads((fits / "scene_0000.fit.json").read_text())
    assert report["rms_px"] < 1.0
    assert run("evaluate", "--annotations", data, "--cameras", fits, "--out", tmp_path / "o") == EXIT_OK
    assert summary(tmp_path / "o")["jaccard"]["5"]["micro_jaccard"] >= 0.95


def test_fit_homography_model(tmp_path):
    data = tmp_path / "data"
    assert run("synth", "--n", 1, "--seed", 5, "--out", data) == EXIT_OK
    assert run("fit", "--annotations", data, "--model", "homography", "--out", tmp_path / "f") == EXIT_OK
    assert json.loads((tmp_path / "f" / "scene_0000.camera.json").read_text())["model"] == "homography"


def test_render_identity_all_green(synth_dir, tmp_path):
    assert run("render", "--annotations", synth_dir, "--cameras", synth_dir, "--out", tmp_path) == EXIT_OK
    svgs = sorted(tmp_path.glob("*.svg"))
    assert len(svgs) == 10
    for p in svgs:
        text = p.read_text()
        assert validate_svg(text) == []
        body = text.split('id="legend"')[0]
        assert 'class="TP"' in body and 'class="FP' not in body and 'class="FN"' not in body


def test_parallel_output_matches_serial(synth_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("evaluate", "--annotations", synth_dir, "--cameras", synth_dir, "--out", a) == EXIT_OK
    assert run("evaluate", "--annotations", synth_dir, "--cameras", synth_dir, "--out", b, "--jobs", 3) == EXIT_OK
    assert tree(a) == tree(b)


@pytest.mark.parametrize("kwargs", [{"taus": (0.0,)}, {"taus": (5.0, -1.0)}, {"jobs": 0}, {"spacing": 0.0}])
def test_run_config_validation(kwargs, tmp_path):
    with pytest.raises(ValueError):
        RunConfig(command="evaluate", out=tmp_path, **kwargs)


def test_bad_tau_is_usage_error(synth_dir, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", "--annotations", str(synth_dir), "--cameras", str(synth_dir), "--tau", "-1", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pitchcal", "synth", "--n", "1", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "scene_0000.json").exists()
