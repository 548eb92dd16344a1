"""Config parsing, presets, output files, and the command-line surface."""

import json

import numpy as np
import pytest

from hklab.cli import EXIT_OK, EXIT_PARSE, EXIT_RESOURCE, EXIT_VALIDATION, main
from hklab.config import (
    ConfigError,
    EnsembleSettings,
    ExperimentConfig,
    config_fingerprint,
    config_from_dict,
    config_to_dict,
    dump_config,
    load_config,
    loads_config,
    with_workers,
)
from hklab.engine import run_batch
from hklab.model import InitialCondition, ModelConfig
from hklab.noise import NoiseSpec
from hklab.output import (
    FINGERPRINT_PREFIX,
    read_samples,
    read_summary,
    read_survival,
    write_samples,
)
from hklab.presets import PRESET_NAMES, preset, preset_variants, scaled_preset

MINIMAL_HK = {
    "scenario": "hk",
    "n": 4,
    "d": 1,
    "epsilon": 0.5,
    "space_mode": "bounded",
    "delta": 0.25,
    "initial": {"kind": "uniform_box", "seed": 3},
}


def _tiny_run_cfg(**ens):
    settings = dict(runs=8, horizons=(2000,), base_seed=5, extra_after_hit=50)
    settings.update(ens)
    return ExperimentConfig(
        scenario="hk",
        ensemble=EnsembleSettings(**settings),
        model=ModelConfig(
            n=4,
            d=1,
            epsilon=0.5,
            space_mode="bounded",
            noise=NoiseSpec("uniform_ball", 0.25),
            initial=InitialCondition("uniform_box", seed=3),
        ),
        label="tiny",
    )


def _enum_cfg(horizon=3):
    return ExperimentConfig(
        scenario="hk",
        ensemble=EnsembleSettings(runs=10, horizons=(horizon,), base_seed=0),
        model=ModelConfig(
            n=2,
            d=1,
            epsilon=1.0,
            space_mode="bounded",
            noise=NoiseSpec("rademacher_axes", 0.5),
            initial=InitialCondition("explicit", values=((-1.0,), (1.0,))),
        ),
    )


# ---------------------------------------------------------------------------
# Parsing and defaults
# ---------------------------------------------------------------------------


def test_minimal_config_defaults():
    cfg = config_from_dict(MINIMAL_HK)
    assert cfg.scenario == "hk"
    assert cfg.ensemble.runs == 1000
    assert cfg.ensemble.horizons == (100_000,)
    assert cfg.ensemble.horizon == 100_000
    assert cfg.ensemble.workers == 1
    assert cfg.model.noise == NoiseSpec("uniform_ball", 0.25)
    assert cfg.model.space_mode == "bounded"


def test_delta_shorthand_and_nested_conflict():
    nested = dict(MINIMAL_HK)
    del nested["delta"]
    nested["noise"] = {"family": "uniform_cube", "delta": 0.25, "requires_symmetry": True}
    cfg = config_from_dict(nested)
    assert cfg.model.noise == NoiseSpec("uniform_cube", 0.25, requires_symmetry=True)
    both = dict(nested)
    both["delta"] = 0.25
    with pytest.raises(ConfigError) as err:
        config_from_dict(both)
    assert any("delta" in p for p in err.value.problems)


def test_unknown_keys_rejected_with_paths():
    data = dict(MINIMAL_HK)
    data["epsilonn"] = 0.5
    data["initial"] = {"kind": "uniform_box", "seeed": 3}
    with pytest.raises(ConfigError) as err:
        config_from_dict(data)
    joined = "\n".join(err.value.problems)
    assert "epsilonn" in joined
    assert "initial.seeed" in joined
    assert err.value.kind == "validation"


def test_horizon_list_must_ascend():
    data = dict(MINIMAL_HK)
    data["ensemble"] = {"runs": 10, "horizon": [100, 100, 50]}
    with pytest.raises(ConfigError) as err:
        config_from_dict(data)
    assert any("horizon" in p and "increasing" in p for p in err.value.problems)
    data["ensemble"] = {"runs": 10, "horizon": [100, 500, 1000]}
    cfg = config_from_dict(data)
    assert cfg.ensemble.horizons == (100, 500, 1000)
    assert cfg.ensemble.horizon == 1000


def test_model_validation_problems_surface():
    data = dict(MINIMAL_HK)
    data["delta"] = 0.4  # > epsilon/2
    with pytest.raises(ConfigError) as err:
        config_from_dict(data)
    assert any("delta exceeds epsilon/2" in p for p in err.value.problems)


def test_config_error_report_format():
    err = ConfigError("2 problems in cfg", problems=["a: bad", "b: worse"])
    assert err.report() == "2 problems in cfg\n  - a: bad\n  - b: worse"


def test_yaml_parse_error_kind():
    with pytest.raises(ConfigError) as err:
        loads_config("scenario: [unclosed")
    assert err.value.kind == "parse"


def test_non_mapping_rejected():
    with pytest.raises(ConfigError):
        loads_config("- just\n- a list\n")


def test_with_workers():
    cfg = config_from_dict(MINIMAL_HK)
    assert with_workers(cfg, 6).ensemble.workers == 6
    assert cfg.ensemble.workers == 1  # original untouched


# ---------------------------------------------------------------------------
# Round-trips and fingerprints
# ---------------------------------------------------------------------------


def test_all_presets_roundtrip_through_yaml():
    for name in PRESET_NAMES:
        for variant in preset_variants(name):
            cfg = preset(name, variant)
            text = dump_config(cfg)
            back = loads_config(text)
            assert config_to_dict(back) == config_to_dict(cfg), (name, variant)
            assert config_fingerprint(back) == config_fingerprint(cfg)


def test_fingerprint_sensitivity():
    base = config_from_dict(MINIMAL_HK)
    bumped = dict(MINIMAL_HK)
    bumped["epsilon"] = 0.6
    relabeled = dict(MINIMAL_HK)
    relabeled["label"] = "renamed"
    assert config_fingerprint(base) != config_fingerprint(config_from_dict(bumped))
    assert config_fingerprint(base) != config_fingerprint(config_from_dict(relabeled))
    assert config_fingerprint(base) == config_fingerprint(config_from_dict(dict(MINIMAL_HK)))


def test_scaled_preset_shrinks_budget():
    cfg = preset("lemma2_walk")
    small = scaled_preset(cfg, runs=16, horizon=500)
    assert small.ensemble.runs == 16
    assert small.ensemble.horizons == (500,)
    assert small.ensemble.horizon == 500


def test_preset_names_and_variants():
    assert len(PRESET_NAMES) == 8
    assert preset_variants("thm1_bounded") == ("d1", "d2", "d3")
    assert preset_variants("lemma4_recurrence") == ("d1", "d3")
    with pytest.raises(KeyError, match="unknown preset"):
        preset("thm9")
    with pytest.raises(KeyError, match="unknown variant"):
        preset("thm1_bounded", "d9")


def test_preset_two_cluster_pins():
    d1 = preset("thm2a_d1")
    assert d1.model.initial.kind == "two_cluster"
    assert d1.model.initial.separation_eps == 5.0
    assert d1.model.space_mode == "unbounded"
    assert d1.ensemble.horizons == (1_000, 10_000, 100_000, 1_000_000)
    d3 = preset("thm2b_d3")
    assert d3.model.initial.separation_eps == 10.0
    assert d3.model.d == 3
    assert d3.model.noise.requires_symmetry
    assert d3.ensemble.horizons == (10_000, 100_000)
    for cfg in (d1, d3):
        sep = cfg.model.initial.separation_eps * cfg.model.epsilon
        assert sep > np.sqrt(2.0) * cfg.model.epsilon + 2.0 * cfg.model.delta


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def test_sample_file_roundtrip_exact(tmp_path):
    cfg = _tiny_run_cfg()
    res = run_batch(cfg.model, 5, np.arange(6), 2000)
    path = tmp_path / "samples.csv"
    write_samples(path, res.samples, "f" * 64)
    fingerprint, rows = read_samples(path)
    assert fingerprint == "f" * 64
    assert len(rows) == 6
    for row, s in zip(rows, res.samples):
        assert row["run_index"] == s.run_index
        assert row["hit"] == s.hit
        assert row["t_hit_or_horizon"] == s.t_end
        assert row["censored"] == (not s.hit)
        assert row["d_v_end"] == s.d_v_at_end  # repr round-trip is exact


def test_read_samples_rejects_untagged(tmp_path):
    path = tmp_path / "samples.csv"
    path.write_text("run_index,hit\n0,1\n")
    with pytest.raises(ValueError, match="fingerprint"):
        read_samples(path)


def test_read_samples_rejects_wrong_columns(tmp_path):
    path = tmp_path / "samples.csv"
    path.write_text(FINGERPRINT_PREFIX + "ab\nrun_index,hit\n0,1\n")
    with pytest.raises(ValueError, match="columns"):
        read_samples(path)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _write_cfg(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(dump_config(cfg))
    return str(path)


def test_cli_validate_ok(tmp_path, capsys):
    path = _write_cfg(tmp_path, _tiny_run_cfg())
    assert main(["validate", path]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("OK scenario=hk")
    assert "fingerprint=" in out


def test_cli_validate_parse_error(tmp_path, capsys):
    path = tmp_path / "broken.yaml"
    path.write_text("scenario: [unclosed\n")
    assert main(["validate", str(path)]) == EXIT_PARSE
    assert "broken.yaml" in capsys.readouterr().err


def test_cli_validate_validation_error(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("scenario: teleport\n")
    assert main(["validate", str(path)]) == EXIT_VALIDATION
    assert "scenario" in capsys.readouterr().err


def test_cli_missing_file_is_parse_error(tmp_path, capsys):
    # An unreadable config is an input problem, reported like a parse
    # failure rather than a mid-run crash.
    assert main(["validate", str(tmp_path / "nope.yaml")]) == EXIT_PARSE
    assert "cannot read config" in capsys.readouterr().err


def test_cli_run_writes_outputs(tmp_path, capsys):
    cfg = _tiny_run_cfg()
    path = _write_cfg(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["run", path, "--out", str(out)]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "tiny: hit_fraction=" in stdout

    fingerprint, rows = read_samples(out / "samples.csv")
    assert fingerprint == config_fingerprint(cfg)
    assert len(rows) == 8
    fp2, (t, s, n_at_risk) = read_survival(out / "survival.csv")
    assert fp2 == fingerprint
    assert t[0] == 0 and s[0] == 1.0
    summary = read_summary(out / "summary.json")
    assert summary["tool"] == "hklab"
    assert summary["config_fingerprint"] == fingerprint
    assert summary["runs"] == 8
    assert summary["absorb_violations"] == 0
    assert not summary["incomplete"]


def test_cli_rerun_is_byte_identical(tmp_path):
    path = _write_cfg(tmp_path, _tiny_run_cfg())
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", path, "--out", str(out1)]) == EXIT_OK
    assert main(["run", path, "--out", str(out2)]) == EXIT_OK
    assert (out1 / "samples.csv").read_bytes() == (out2 / "samples.csv").read_bytes()
    assert (out1 / "survival.csv").read_bytes() == (out2 / "survival.csv").read_bytes()
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()


def test_cli_worker_override_keeps_outputs_identical(tmp_path):
    path = _write_cfg(tmp_path, _tiny_run_cfg())
    out1, out2 = tmp_path / "w1", tmp_path / "w2"
    assert main(["run", path, "--out", str(out1), "--workers", "1"]) == EXIT_OK
    assert main(["run", path, "--out", str(out2), "--workers", "2"]) == EXIT_OK
    assert (out1 / "samples.csv").read_bytes() == (out2 / "samples.csv").read_bytes()


def test_cli_env_workers(tmp_path, monkeypatch, capsys):
    path = _write_cfg(tmp_path, _tiny_run_cfg())
    out = tmp_path / "envout"
    monkeypatch.setenv("HKLAB_WORKERS", "not-a-number")
    assert main(["run", path, "--out", str(out)]) == EXIT_PARSE
    assert "HKLAB_WORKERS" in capsys.readouterr().err
    monkeypatch.setenv("HKLAB_WORKERS", "2")
    assert main(["run", path, "--out", str(out)]) == EXIT_OK


def test_cli_run_walk_and_projected(tmp_path):
    walk = scaled_preset(preset("lemma2_walk"), runs=16, horizon=500)
    proj = scaled_preset(preset("lemma1_alpha_gt1"), runs=16, horizon=2000)
    for cfg, name in ((walk, "walk"), (proj, "proj")):
        path = _write_cfg(tmp_path, cfg, f"{name}.yaml")
        out = tmp_path / name
        assert main(["run", path, "--out", str(out)]) == EXIT_OK
        summary = read_summary(out / "summary.json")
        assert summary["runs"] == 16
        assert "absorb_violations" not in summary
    proj_summary = read_summary(tmp_path / "proj" / "summary.json")
    assert proj_summary["hit_fraction"] == 1.0


def test_cli_run_recurrence_writes_summary_only(tmp_path):
    cfg = scaled_preset(preset("lemma4_recurrence", "d1"), runs=32, horizon=2000)
    path = _write_cfg(tmp_path, cfg)
    out = tmp_path / "rec"
    assert main(["run", path, "--out", str(out)]) == EXIT_OK
    summary = read_summary(out / "summary.json")
    assert summary["kind"] == "recurrence"
    assert summary["profile"]["horizons"] == [100, 1000, 2000]
    visits = summary["profile"]["mean_visits"]
    assert visits == sorted(visits)
    assert not (out / "samples.csv").exists()
    assert not (out / "survival.csv").exists()


def test_cli_preset_emit_config_roundtrips(tmp_path, capsys):
    assert main(["preset", "thm1_bounded", "--variant", "d2", "--emit-config"]) == EXIT_OK
    text = capsys.readouterr().out
    cfg = loads_config(text)
    assert config_fingerprint(cfg) == config_fingerprint(preset("thm1_bounded", "d2"))


def test_cli_preset_listing_and_bad_variant(capsys):
    assert main(["preset", "thm2b_d3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "thm2b_d3" in out and "fingerprint=" in out
    assert main(["preset", "thm1_bounded", "--variant", "d7"]) == EXIT_VALIDATION
    assert "unknown variant" in capsys.readouterr().err


def test_cli_enumerate_exact_law(tmp_path, capsys):
    path = _write_cfg(tmp_path, _enum_cfg(horizon=3))
    assert main(["enumerate", path]) == EXIT_OK
    out = capsys.readouterr().out
    assert "1/4" in out and "5/16" in out and "11/64" in out and "17/64" in out


def test_cli_enumerate_refuses_large(tmp_path, capsys):
    path = _write_cfg(tmp_path, _enum_cfg(horizon=100_000))
    assert main(["enumerate", path]) == EXIT_RESOURCE
    assert "2^200000" in capsys.readouterr().err


def test_cli_enumerate_needs_sign_noise(tmp_path, capsys):
    path = _write_cfg(tmp_path, _tiny_run_cfg())
    assert main(["enumerate", path]) == EXIT_VALIDATION
    assert "rademacher_axes" in capsys.readouterr().err
