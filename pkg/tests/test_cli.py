import json
import subprocess
import sys

import numpy as np
import pytest

from fredholm_distortion.cli import cached_r_matrix, main
from fredholm_distortion.grid import ScalarField, read_fgrid, write_fgrid
from fredholm_distortion.psf import gaussian_image

THETA = [0, -2e-6, 0, 2e-6, 1e-6, 2e-6, 0, 1e-6, 0, 3e-6, 1e-6, -1e-6]


@pytest.fixture(autouse=True)
def cache(tmp_path, monkeypatch):
    d = tmp_path / "rcache"
    monkeypatch.setenv("FREDHOLM_CACHE_DIR", str(d))
    return d


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


def scene_cfg(**extra):
    cfg = {"canvas": [155, 155], "grid": {"count": 3, "spacing": 50, "flux": 1e5},
           "psf": {"gaussian": {"sigma": 10}}, "distortion": {"theta": THETA}}
    cfg.update(extra)
    return cfg


def test_simulate_writes_outputs_and_is_deterministic(tmp_path):
    cfg = write_json(tmp_path / "scene.json", scene_cfg(noise={"lambda": 5, "seed": 3}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a.fgrid")]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b.fgrid")]) == 0
    a = (tmp_path / "a.fgrid").read_bytes()
    assert a == (tmp_path / "b.fgrid").read_bytes()
    assert (tmp_path / "a.png").exists()
    man = json.loads((tmp_path / "a.fgrid.manifest").read_text())
    assert man["command"] == "simulate" and man["seed"] == 3
    assert man["tool_version"] == "0.1.0"
    assert {o["path"] for o in man["outputs"]} == {str(tmp_path / "a.fgrid"), str(tmp_path / "a.png")}
    other = json.loads((tmp_path / "b.fgrid.manifest").read_text())
    assert other["config_digest"] == man["config_digest"]


def test_simulate_seed_flag_changes_noise(tmp_path):
    cfg = write_json(tmp_path / "scene.json", scene_cfg(noise={"lambda": 5, "seed": 3}))
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a.fgrid")])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b.fgrid"), "--seed", "4"])
    assert (tmp_path / "a.fgrid").read_bytes() != (tmp_path / "b.fgrid").read_bytes()


def test_simulate_undistorted_grid_of_identical_spots(tmp_path):
    cfg = scene_cfg(canvas=[505, 505], grid={"count": 9, "spacing": 50, "flux": 1e5})
    del cfg["distortion"]
    path = write_json(tmp_path / "scene.json", cfg)
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o.fgrid")]) == 0
    img = read_fgrid(tmp_path / "o.fgrid")
    assert img.shape == (505, 505)
    idx = [tuple(int(t) for t in img.coord_to_index(x, y))
           for x in range(-200, 201, 50) for y in range(-200, 201, 50)]
    peaks = np.array([img.data[i] for i in idx])
    # identical spots; only the far tails of differing neighbor sets separate them
    assert np.ptp(peaks) <= 1e-4 * peaks.max()
    assert peaks.min() == pytest.approx(1e5 / (200 * np.pi), rel=1e-4)


def test_simulate_downsample_flag(tmp_path):
    path = write_json(tmp_path / "scene.json", scene_cfg())
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o.fgrid"),
                 "--downsample", "5"]) == 0
    assert read_fgrid(tmp_path / "o.fgrid").shape == (31, 31)
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "p.fgrid"),
                 "--downsample", "2"]) == 2
    assert not (tmp_path / "p.fgrid").exists()


def test_missing_psf_is_named(tmp_path, capsys):
    cfg = scene_cfg()
    del cfg["psf"]
    path = write_json(tmp_path / "scene.json", cfg)
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o.fgrid")]) == 2
    assert "'psf'" in capsys.readouterr().err
    assert not (tmp_path / "o.fgrid").exists()


def test_bad_json_reports_line(tmp_path, capsys):
    path = tmp_path / "scene.json"
    path.write_text('{\n  "canvas": [10, 10],\n  "psf": oops\n}')
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o.fgrid")]) == 2
    assert "scene.json:3:" in capsys.readouterr().err


@pytest.mark.parametrize("patch, needle", [
    ({"canvas": [10]}, "'canvas'"),
    ({"grid": {"count": 3, "spacing": 50}}, "'flux'"),
    ({"sources": [{"x": 0, "y": 0, "flux": -1}], "grid": None}, "sources[0].flux"),
    ({"noise": {"lambda": -2}}, "noise.lambda"),
    ({"colour": 1}, "colour"),
    ({"psf": {"gaussian": {}}}, "'sigma'"),
])
def test_validation_errors_name_the_field(tmp_path, capsys, patch, needle):
    cfg = scene_cfg()
    for k, v in patch.items():
        if v is None:
            del cfg[k]
        else:
            cfg[k] = v
    path = write_json(tmp_path / "scene.json", cfg)
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o.fgrid")]) == 2
    assert needle in capsys.readouterr().err


def test_sense_desense_round_trip(tmp_path, cache):
    src = tmp_path / "ideal.fgrid"
    ideal = gaussian_image((64, 64), 3.0)
    write_fgrid(ideal, src)
    assert main(["sense", "--in", str(src), "--out", str(tmp_path / "s.fgrid")]) == 0
    assert main(["desense", "--in", str(tmp_path / "s.fgrid"), "--out", str(tmp_path / "d.fgrid")]) == 0
    back = read_fgrid(tmp_path / "d.fgrid")
    assert np.abs(back.data - ideal.data).max() <= 1e-10 * ideal.data.max()
    assert (cache / "r_64.npy").exists()


def test_sense_zero_image(tmp_path):
    write_fgrid(ScalarField.zeros(16, 16), tmp_path / "z.fgrid")
    assert main(["sense", "--in", str(tmp_path / "z.fgrid"), "--out", str(tmp_path / "o.fgrid")]) == 0
    assert not read_fgrid(tmp_path / "o.fgrid").data.any()


def test_rectangular_sense(tmp_path):
    ideal = gaussian_image((40, 48), 3.0)
    write_fgrid(ideal, tmp_path / "i.fgrid")
    assert main(["sense", "--in", str(tmp_path / "i.fgrid"), "--out", str(tmp_path / "o.fgrid")]) == 0
    assert read_fgrid(tmp_path / "o.fgrid").shape == (40, 48)


def test_mismatched_r_cache_is_rebuilt(tmp_path, cache):
    ideal = gaussian_image((64, 64), 3.0)
    write_fgrid(ideal, tmp_path / "i.fgrid")
    main(["sense", "--in", str(tmp_path / "i.fgrid"), "--out", str(tmp_path / "a.fgrid")])
    np.save(cache / "r_64.npy", np.eye(32))
    main(["sense", "--in", str(tmp_path / "i.fgrid"), "--out", str(tmp_path / "b.fgrid")])
    assert (tmp_path / "a.fgrid").read_bytes() == (tmp_path / "b.fgrid").read_bytes()
    assert np.load(cache / "r_64.npy").shape == (64, 64)
    (cache / "r_64.npy").write_bytes(b"garbage")
    assert cached_r_matrix(64).values.shape == (64, 64)


def test_desense_condition_guard_exits_nonzero(tmp_path, monkeypatch, capsys):
    import fredholm_distortion.sampling as sampling
    monkeypatch.setattr(sampling, "CONDITION_LIMIT", 1.0)
    write_fgrid(gaussian_image((32, 32), 3.0), tmp_path / "i.fgrid")
    assert main(["desense", "--in", str(tmp_path / "i.fgrid"), "--out", str(tmp_path / "o.fgrid")]) == 1
    assert "ill-conditioned" in capsys.readouterr().err
    assert not (tmp_path / "o.fgrid").exists()


def test_bad_fgrid_input(tmp_path, capsys):
    (tmp_path / "bad.fgrid").write_bytes(b"NOPE")
    assert main(["sense", "--in", str(tmp_path / "bad.fgrid"), "--out", str(tmp_path / "o.fgrid")]) == 2
    assert "bad.fgrid" in capsys.readouterr().err


def test_extract_psf(tmp_path):
    write_fgrid(gaussian_image((101, 101), 3.0, flux=500.0), tmp_path / "img.fgrid")
    assert main(["extract-psf", "--in", str(tmp_path / "img.fgrid"), "--out",
                 str(tmp_path / "psf.fgrid"), "--window", "31", "--upsample", "4"]) == 0
    psf = read_fgrid(tmp_path / "psf.fgrid")
    assert psf.shape == (124, 124)
    assert psf.data.sum() / 16 == pytest.approx(1.0, rel=1e-9)


def test_extract_psf_neighbor_check(tmp_path, capsys):
    write_fgrid(gaussian_image((155, 155), 3.0), tmp_path / "img.fgrid")
    cfg = write_json(tmp_path / "scene.json", scene_cfg(grid={"count": 3, "spacing": 20, "flux": 1}))
    assert main(["extract-psf", "--in", str(tmp_path / "img.fgrid"), "--out",
                 str(tmp_path / "psf.fgrid"), "--window", "51", "--config", str(cfg)]) == 1
    assert "neighbor" in capsys.readouterr().err
    assert not (tmp_path / "psf.fgrid").exists()


def test_estimate_pipeline_recovers_theta(tmp_path):
    cfg = write_json(tmp_path / "scene.json", scene_cfg(fit={"starts": 1}))
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "obs.fgrid")])
    assert main(["estimate", "--config", str(cfg), "--in", str(tmp_path / "obs.fgrid"),
                 "--out", str(tmp_path / "rep.json")]) == 0
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert np.abs(np.array(rep["params_1e-6"]) - np.array(THETA) * 1e6).max() <= 0.01
    assert rep["starts"] == 1
    assert read_fgrid(tmp_path / "rep.residue.fgrid").shape == (155, 155)
    man = json.loads((tmp_path / "rep.json.manifest").read_text())
    assert man["seed"] == 7 and len(man["outputs"]) == 3


def test_estimate_pinhole_contrast(tmp_path):
    cfg = write_json(tmp_path / "scene.json", scene_cfg(fit={"starts": 1}))
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "obs.fgrid")])
    for model in ("fredholm", "pinhole"):
        assert main(["estimate", "--config", str(cfg), "--in", str(tmp_path / "obs.fgrid"),
                     "--out", str(tmp_path / f"{model}.json"), "--model", model]) == 0
    vf = json.loads((tmp_path / "fredholm.json").read_text())["value_per_source_flux"]
    vp = json.loads((tmp_path / "pinhole.json").read_text())["value_per_source_flux"]
    assert vp >= 100 * vf


def test_estimate_grid_mismatch(tmp_path, capsys):
    cfg = write_json(tmp_path / "scene.json", scene_cfg())
    write_fgrid(ScalarField.zeros(20, 20), tmp_path / "obs.fgrid")
    assert main(["estimate", "--config", str(cfg), "--in", str(tmp_path / "obs.fgrid"),
                 "--out", str(tmp_path / "rep.json")]) == 2
    assert "155x155" in capsys.readouterr().err
    assert not (tmp_path / "rep.json").exists()


def test_compare_identical(tmp_path):
    write_fgrid(gaussian_image((21, 21), 2.0), tmp_path / "x.fgrid")
    assert main(["compare", "--in", str(tmp_path / "x.fgrid"), str(tmp_path / "x.fgrid"),
                 "--out", str(tmp_path / "cmp.json")]) == 0
    rep = json.loads((tmp_path / "cmp.json").read_text())
    assert rep["value"] == 0.0 and rep["lambda_hat"] == 0.0 and rep["chi2"] is None
    assert not read_fgrid(tmp_path / "cmp.residue.fgrid").data.any()


def test_compare_background(tmp_path):
    rng = np.random.default_rng(0)
    base = gaussian_image((101, 101), 3.0, flux=1e4)
    write_fgrid(ScalarField(base.data + rng.poisson(10.0, base.shape)), tmp_path / "a.fgrid")
    write_fgrid(base, tmp_path / "b.fgrid")
    main(["compare", "--in", str(tmp_path / "a.fgrid"), str(tmp_path / "b.fgrid"),
          "--out", str(tmp_path / "cmp.json")])
    rep = json.loads((tmp_path / "cmp.json").read_text())
    assert rep["lambda_hat"] == pytest.approx(10.0, rel=0.03)
    assert rep["chi2"] == pytest.approx(1.0, abs=0.1)


def test_thread_cap_env(tmp_path, monkeypatch, capsys):
    write_fgrid(gaussian_image((32, 32), 2.0), tmp_path / "i.fgrid")
    monkeypatch.setenv("FREDHOLM_THREADS", "1")
    assert main(["sense", "--in", str(tmp_path / "i.fgrid"), "--out", str(tmp_path / "o.fgrid")]) == 0
    monkeypatch.setenv("FREDHOLM_THREADS", "zero")
    assert main(["sense", "--in", str(tmp_path / "i.fgrid"), "--out", str(tmp_path / "p.fgrid")]) == 2
    assert "FREDHOLM_THREADS" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fredholm_distortion.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "fredholm_distortion.cli", "simulate"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
