import math
import os

import numpy as np
import pytest

from gcosamp.engine import NumericalAbort, RecoverySettings
from gcosamp.harness import cli, experiments
from gcosamp.harness.config import (ConfigError, dump_config, get_list, load_config, model_from_section,
                                    model_to_section, parse_config_string, parse_pairs, settings_from_section,
                                    settings_to_section)
from gcosamp.harness.experiments import (ImageExperimentConfig, VanishingNoiseConfig, cartoon_cosparsity,
                                         default_m_grid, fit_loglog, run_image_experiment, run_vanishing_noise,
                                         synthesize_cartoon_texture, vanishing_noise_trial)
from gcosamp.io import read_pgm, write_matrix_csv
from gcosamp.metrics import psnr
from gcosamp.models import AnalysisModel, BlockSparseModel, KSparseModel, LowRankModel, Subspace
from gcosamp.operators import build_finite_difference, build_local_dct


def test_psnr_examples():
    a = np.arange(16.0).reshape(4, 4)
    assert psnr(a, a) == math.inf
    assert experiments._fmt(psnr(a, a)) == "inf"
    assert psnr(np.zeros((3, 3)), np.full((3, 3), 255.0)) == pytest.approx(0.0)
    assert psnr(np.zeros(100), np.full(100, 25.5)) == pytest.approx(20.0)
    with pytest.raises(ValueError):
        psnr(np.zeros(3), np.zeros(4))


# -- config -------------------------------------------------------------------------


def test_config_round_trip(tmp_path):
    sections = {"problem": {"operator": "gaussian", "m": "40"}, "model": {"variant": "ksparse", "n": "100", "k": "3"},
                "settings": settings_to_section(RecoverySettings(max_iterations=7)), "experiment": {}}
    path = tmp_path / "c.ini"
    path.write_text(dump_config(sections), encoding="utf-8")
    assert load_config(path) == sections
    assert parse_config_string(dump_config(sections)) == sections
    assert settings_from_section(sections["settings"]) == RecoverySettings(max_iterations=7)


def test_config_errors(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\nvariant = ksparse\n[extra]\na = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
    with pytest.raises(ConfigError):
        parse_pairs(["novalue"])
    with pytest.raises(ConfigError):
        settings_from_section({"max_iterations": "ten"})
    with pytest.raises(ConfigError):
        settings_from_section({"max_iterations": "0"})
    with pytest.raises(ConfigError):
        settings_from_section({"speed": "1"})
    with pytest.raises(ConfigError):
        model_from_section({"variant": "ksparse", "n": "10"})
    with pytest.raises(ConfigError):
        model_from_section({"variant": "wavelet"})
    with pytest.raises(ConfigError):
        model_from_section({"variant": "blocksparse", "n": "10", "k": "4", "J": "3"})
    assert get_list({"g": "1, 2 3"}, "g", int) == [1, 2, 3]


@pytest.mark.parametrize("section", [
    {"variant": "ksparse", "n": "50", "k": "4"},
    {"variant": "blocksparse", "n": "24", "k": "6", "J": "3"},
    {"variant": "lowrank", "n1": "5", "n2": "6", "r": "2"},
    {"variant": "synthesis", "k": "3", "selector": "omp", "dictionary": "local-dct", "image_height": "8",
     "image_width": "8", "window": "4", "overlap": "2", "excluded": "1"},
    {"variant": "analysis", "ell": "90", "analysis": "finite-difference", "image_height": "8", "image_width": "8"},
    {"variant": "combined", "k": "3", "selector": "threshold", "ell": "90", "dictionary": "local-dct",
     "image_height": "8", "image_width": "8", "window": "4", "overlap": "2", "excluded": "1",
     "analysis": "finite-difference"},
])
def test_model_section_round_trip(section):
    model = model_from_section(section)
    assert model_to_section(model) == section


def test_model_from_matrix_files(tmp_path):
    rng = np.random.default_rng(0)
    write_matrix_csv(tmp_path / "D.csv", rng.standard_normal((6, 9)))
    write_matrix_csv(tmp_path / "Om.csv", rng.standard_normal((8, 6)))
    syn = model_from_section({"variant": "synthesis", "k": "2", "dictionary": "file",
                              "dictionary_file": str(tmp_path / "D.csv")})
    assert syn.n == 6 and syn.D.atoms == 9
    ana = model_from_section({"variant": "analysis", "ell": "3", "analysis": "file",
                              "analysis_file": str(tmp_path / "Om.csv")})
    assert ana.Omega.rows == 8
    with pytest.raises(ConfigError):
        model_to_section(syn)


# -- vanishing noise ------------------------------------------------------------------


def test_default_grid_shape():
    grid = default_m_grid()
    assert grid[0] == 50 and grid[-1] < 2000
    assert grid == sorted(set(grid))
    assert len(grid) == 20


def test_vanishing_config_validation():
    with pytest.raises(ValueError):
        VanishingNoiseConfig(n=100, m_grid=[50, 100])
    with pytest.raises(ValueError):
        VanishingNoiseConfig(n=100, m_grid=[50], trials=2)
    with pytest.raises(ValueError):
        VanishingNoiseConfig(n=100, m_grid=[50], noise="gaussian")
    assert VanishingNoiseConfig().fit_floor == pytest.approx(40 * math.log(2000))


def test_noiseless_recovery_at_ten_k_log_n():
    n, k = 2000, 5
    m = int(math.ceil(10 * k * math.log(n)))
    cfg = VanishingNoiseConfig(n=n, k=k, m_grid=[m], trials=10, noise_ratio=0.0)
    res = run_vanishing_noise(cfg)
    assert res.rows[0]["median_error"] < 1e-6


def test_error_is_linear_in_noise_level():
    base = VanishingNoiseConfig(n=500, k=5, m_grid=[400], trials=15, noise_ratio=0.01)
    double = VanishingNoiseConfig(n=500, k=5, m_grid=[400], trials=15, noise_ratio=0.02)
    e1 = run_vanishing_noise(base).rows[0]["median_error"]
    e2 = run_vanishing_noise(double).rows[0]["median_error"]
    assert 0.8 * 2 <= e2 / e1 <= 1.2 * 2


def test_vanishing_noise_rows_monotone_and_reproducible():
    cfg = VanishingNoiseConfig(n=500, k=5, m_grid=[160, 250, 480], trials=5, slope_fit_floor=150)
    res = run_vanishing_noise(cfg)
    assert len(res.rows) == 3
    assert res.rows[-1]["median_error"] < res.rows[0]["median_error"]
    assert res.meta["fit_points"] == 3
    assert res.slope < 0
    csv = res.to_csv().splitlines()
    assert csv[0] == "m,median_error,mean_error,std_error,median_iterations,failures"
    assert len(csv) == 4 and all(len(line.split(",")) == 6 for line in csv)
    assert run_vanishing_noise(cfg).to_csv() == res.to_csv()


def test_failed_trials_become_nan_and_are_counted(monkeypatch):
    real = experiments.vanishing_noise_trial

    def flaky(cfg, m, trial, index=0):
        if m == 200 or (m == 300 and trial == 0):
            raise NumericalAbort("forced")
        return real(cfg, m, trial, index)

    monkeypatch.setattr(experiments, "vanishing_noise_trial", flaky)
    cfg = VanishingNoiseConfig(n=400, k=3, m_grid=[200, 300, 390], trials=3, slope_fit_floor=100)
    res = run_vanishing_noise(cfg)
    assert res.failures == 4
    assert math.isnan(res.rows[0]["median_error"])
    assert res.rows[1]["failures"] == 1
    assert res.meta["fit_points"] == 2
    assert "nan" in res.to_csv()


def test_trial_is_deterministic():
    cfg = VanishingNoiseConfig(n=300, k=3, m_grid=[100], trials=3)
    assert vanishing_noise_trial(cfg, 100, 1) == vanishing_noise_trial(cfg, 100, 1)
    assert vanishing_noise_trial(cfg, 100, 1) != vanishing_noise_trial(cfg, 100, 2)


def test_fit_loglog_recovers_power_law():
    ms = np.array([100, 200, 400, 800, 1600])
    slope, half, intercept = fit_loglog(ms, 3.0 * ms ** -0.5)
    assert slope == pytest.approx(-0.5)
    assert intercept == pytest.approx(math.log(3.0))
    assert half == pytest.approx(0.0, abs=1e-12)
    assert math.isnan(fit_loglog([10], [1.0])[0])


# -- cartoon + texture ------------------------------------------------------------------


def small_image_config(**kw):
    base = dict(height=32, width=32, rectangles=3, window=8, overlap=4, excluded=4, k=6, seed=1,
                settings=RecoverySettings(max_iterations=30, ls_max_iterations=600))
    base.update(kw)
    return ImageExperimentConfig(**base)


@pytest.mark.parametrize("ratio", [0.05, 0.1, 0.2])
def test_texture_ratio(ratio):
    data = synthesize_cartoon_texture(ImageExperimentConfig(texture_ratio=ratio, seed=3))
    got = np.linalg.norm(data.texture) / np.linalg.norm(data.cartoon)
    assert abs(got - ratio) <= 1e-10
    assert np.array_equal(data.noisy, data.cartoon + data.texture)
    D = build_local_dct(64, 64, 16, 8, 8)
    assert np.allclose(D.apply(data.alpha), data.texture.ravel())
    assert np.count_nonzero(data.alpha) == 20


def test_zero_texture_gives_cartoon():
    data = synthesize_cartoon_texture(ImageExperimentConfig(texture_ratio=0.0))
    assert np.array_equal(data.noisy, data.cartoon)


@pytest.mark.parametrize("seed", range(5))
def test_cartoon_cosparsity_is_feasible(seed):
    cfg = ImageExperimentConfig(seed=seed)
    data = synthesize_cartoon_texture(cfg)
    Om = build_finite_difference(64, 64)
    diffs = Om.apply(data.cartoon.ravel())
    nnz = int(np.count_nonzero(diffs))
    # each rectangle changes at most the 2 * (height + width) edges on its border
    rng = np.random.default_rng(seed)
    perimeter = 0
    for _ in range(cfg.rectangles):
        rh = int(rng.integers(64 // 6, 64 // 2))
        rw = int(rng.integers(64 // 6, 64 // 2))
        rng.integers(0, 64 - rh + 1)
        rng.integers(0, 64 - rw + 1)
        rng.integers(4)
        perimeter += 2 * (rh + rw)
    assert nnz <= perimeter
    ell = Om.rows - nnz
    assert cartoon_cosparsity(Om, data.cartoon) == ell
    model = AnalysisModel(Om, ell)
    cos = np.flatnonzero(diffs == 0)
    x = data.cartoon.ravel()
    assert np.linalg.norm(model.project(Subspace("analysis", 1, cosupport=cos), x) - x) < 1e-9 * np.linalg.norm(x)


def test_image_config_validation():
    with pytest.raises(ValueError):
        ImageExperimentConfig(fraction=1.0)
    with pytest.raises(ValueError):
        ImageExperimentConfig(mask="spiral")
    with pytest.raises(ValueError):
        ImageExperimentConfig(modes=("unified", "magic"))
    with pytest.raises(ValueError):
        run_image_experiment(small_image_config(ell=2 * 32 * 31 + 1))
    with pytest.raises(ValueError):
        run_image_experiment(small_image_config(ell=2 * 32 * 31))


def test_image_experiment_outputs(tmp_path):
    cfg = small_image_config(fraction=0.4)
    res = run_image_experiment(cfg, tmp_path)
    assert [r["mode"] for r in res.rows] == list(cfg.modes)
    for mode, (x1, x2, x) in res.meta["outputs"].items():
        assert np.array_equal(x, x1 + x2)
    names = set(os.listdir(tmp_path))
    for f in ("cartoon.pgm", "texture.pgm", "noisy.pgm", "mask.pgm", "psnr.csv", "unified_trace.csv",
              "split_trace.csv", "analysis-only_trace.csv", "unified_x2.pgm", "unified_x1.pgm", "naive_x.pgm"):
        assert f in names
    lines = (tmp_path / "psnr.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "mode,psnr_x2,psnr_x,iterations,halt,residual_norm"
    assert len(lines) == 1 + len(cfg.modes)
    assert all(len(line.split(",")) == 6 for line in lines)
    img = read_pgm(tmp_path / "cartoon.pgm")
    assert img.shape == (32, 32)
    data = synthesize_cartoon_texture(cfg)
    assert np.array_equal(img, np.clip(np.rint(data.cartoon), 0, 255))
    again = run_image_experiment(cfg, tmp_path / "again")
    assert again.to_csv() == res.to_csv()
    assert (tmp_path / "again" / "unified_trace.csv").read_bytes() == (tmp_path / "unified_trace.csv").read_bytes()


def test_full_sampling_recovers_cartoon():
    cfg = ImageExperimentConfig(mask="full", texture_ratio=0.0, ell_margin=1.0, modes=("unified",))
    res = run_image_experiment(cfg)
    assert res.meta["ell"] == res.meta["cartoon_zeros"]
    assert res.rows[0]["psnr_x2"] >= 60.0


# -- CLI -------------------------------------------------------------------------------


def write_ini(path, sections):
    path.write_text(dump_config({k: sections.get(k, {}) for k in ("problem", "model", "settings", "experiment")}),
                    encoding="utf-8")
    return str(path)


def test_cli_recover(tmp_path, capsys):
    cfg = write_ini(tmp_path / "r.ini", {"problem": {"operator": "gaussian", "m": "60", "seed": "3"},
                                         "model": {"variant": "ksparse", "n": "120", "k": "4"}})
    trace = tmp_path / "t.csv"
    assert cli.main(["recover", "--config", cfg, "--trace", str(trace), "--estimate", str(tmp_path / "x.csv")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "halt,iterations,residual_norm,relative_error"
    assert float(out[1].split(",")[3]) < 1e-6
    assert trace.read_text().startswith("t,residual_norm")


def test_cli_recover_sacosamp_fourier(tmp_path, capsys):
    cfg = write_ini(tmp_path / "s.ini", {
        "problem": {"operator": "fourier", "image_height": "16", "image_width": "16", "mask": "variable-density",
                    "fraction": "0.5", "solver": "sacosamp", "ls_mode": "split"},
        "model": {"variant": "combined", "k": "2", "ell": "400", "image_height": "16", "image_width": "16",
                  "window": "8", "overlap": "4", "excluded": "2"},
        "settings": {"max_iterations": "5"}})
    assert cli.main(["recover", "--config", cfg]) == 0
    assert capsys.readouterr().out.startswith("halt,")


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write_ini(tmp_path / "bad.ini", {"problem": {"operator": "gaussian"},
                                           "model": {"variant": "ksparse", "n": "20", "k": "2"}})
    assert cli.main(["recover", "--config", cfg]) == 2
    assert cli.main(["recover", "--config", str(tmp_path / "nope.ini")]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_numerical_abort_exit_code(tmp_path):
    y = np.ones((10, 1))
    y[4, 0] = np.nan
    write_matrix_csv(tmp_path / "y.csv", y)
    cfg = write_ini(tmp_path / "nan.ini", {"problem": {"operator": "gaussian", "m": "10",
                                                       "measurements_file": str(tmp_path / "y.csv")},
                                           "model": {"variant": "ksparse", "n": "20", "k": "2"}})
    assert cli.main(["recover", "--config", cfg]) == 3


def test_cli_bound(capsys):
    assert cli.main(["bound", "--m", "20000", "--m0", "56.1", "--eta", "1"]) == 0
    header, row = capsys.readouterr().out.splitlines()
    values = dict(zip(header.split(","), row.split(",")))
    assert float(values["threshold"]) == pytest.approx(11796.025)
    assert values["converges"] == "True"


def test_cli_meanwidth(capsys):
    assert cli.main(["meanwidth", "--model", "variant=ksparse", "n=2", "k=1", "--samples", "2000"]) == 0
    header, row = capsys.readouterr().out.splitlines()
    values = dict(zip(header.split(","), row.split(",")))
    assert abs(float(values["mean"]) - 2 / math.sqrt(math.pi)) <= 3 * float(values["std_error"])
    assert values["exactness"] == "exact-sup"


def test_cli_verify(capsys):
    args = ["--model", "variant=ksparse", "n=40", "k=2", "--m", "30", "--trials", "50"]
    assert cli.main(["verify", "gordon", *args]) == 0
    assert cli.main(["verify", "contraction", *args]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "check,pass_rate,floor,passes,trials,width,bound"
    assert lines[1].startswith("gordon,") and lines[3].startswith("contraction,")
    assert cli.main(["verify", "contraction", *args, "--mu", "10"]) == 2


def test_cli_exp_vanishing_noise(tmp_path, capsys):
    cfg = write_ini(tmp_path / "v.ini", {"experiment": {"n": "300", "k": "3", "m_grid": "120 200 290",
                                                        "trials": "3", "slope_fit_floor": "100"}})
    out = tmp_path / "v.csv"
    assert cli.main(["exp", "vanishing-noise", "--config", cfg, "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 4
    assert capsys.readouterr().out.startswith("slope,")
    bad = write_ini(tmp_path / "b.ini", {"experiment": {"n": "100", "m_grid": "200"}})
    assert cli.main(["exp", "vanishing-noise", "--config", bad, "--out", str(out)]) == 2


def test_cli_exp_image(tmp_path):
    cfg = write_ini(tmp_path / "i.ini", {"experiment": {"height": "32", "width": "32", "rectangles": "2",
                                                        "window": "8", "overlap": "4", "excluded": "4", "k": "4",
                                                        "modes": "unified naive"},
                                         "settings": {"max_iterations": "5"}})
    assert cli.main(["exp", "image", "--config", cfg, "--out", str(tmp_path / "img")]) == 0
    assert len((tmp_path / "img" / "psnr.csv").read_text().splitlines()) == 3
