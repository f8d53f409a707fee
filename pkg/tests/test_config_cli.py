import yaml
import pytest

from trusmil.cli import main
from trusmil.config import (
    ConfigError,
    config_from_dict,
    config_hash,
    dump_effective_config,
    load_config,
)

MINIMAL = {"dataset": {"synthetic": {"n_patients": 10}}}


def write_config(tmp_path, raw):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


class TestConfigLoading:
    def test_minimal_config_fills_defaults(self):
        cfg = config_from_dict(MINIMAL)
        assert cfg.k == 5
        assert cfg.backbone.variant == "resnet18_slim"
        assert cfg.multiscale.gammas == [0.5]
        assert cfg.dataset.synthetic.n_patients == 10
        assert cfg.finetune.mode == "probe"

    def test_unknown_key_rejected_with_name(self):
        with pytest.raises(ConfigError, match="optimzer"):
            config_from_dict({**MINIMAL, "optimzer": "adam"})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="n_patient\\b"):
            config_from_dict({"dataset": {"synthetic": {"n_patient": 10}}})

    def test_dataset_requires_exactly_one_source(self):
        with pytest.raises(ConfigError, match="exactly one"):
            config_from_dict({"dataset": {}})
        with pytest.raises(ConfigError, match="exactly one"):
            config_from_dict({"dataset": {"synthetic": {"n_patients": 4},
                                          "manifest": "x.json"}})

    def test_missing_manifest_path_rejected(self):
        with pytest.raises(ConfigError, match="does not exist"):
            config_from_dict({"dataset": {"manifest": "/nope/manifest.json"}})

    def test_gamma_scalar_becomes_sweep(self):
        cfg = config_from_dict({**MINIMAL, "multiscale": {"gamma": 0.25}})
        assert cfg.multiscale.gammas == [0.25]

    def test_gamma_out_of_range(self):
        with pytest.raises(ConfigError, match="outside"):
            config_from_dict({**MINIMAL, "multiscale": {"gammas": [1.5]}})

    def test_tuple_fields_coerced_from_lists(self):
        cfg = config_from_dict({"dataset": {"synthetic": {
            "n_patients": 4, "involvement_range": [0.3, 0.7],
            "frame_shape": [64, 64]}}})
        assert cfg.dataset.synthetic.involvement_range == (0.3, 0.7)
        assert cfg.dataset.synthetic.frame_shape == (64, 64)

    def test_texture_params_nested(self):
        cfg = config_from_dict({"dataset": {"synthetic": {
            "n_patients": 4,
            "cancer_texture": {"spectral_slope": 3.0, "variance": 2.0,
                               "speckle_scale": 8.0}}}})
        assert cfg.dataset.synthetic.cancer_texture.spectral_slope == 3.0

    def test_invalid_k(self):
        with pytest.raises(ConfigError, match="k must be"):
            config_from_dict({**MINIMAL, "k": 1})

    def test_effective_config_roundtrip_preserves_hash(self):
        cfg = config_from_dict({**MINIMAL, "seed": 9,
                                "multiscale": {"gammas": [0.0, 1.0]}})
        dumped = yaml.safe_load(dump_effective_config(cfg))
        again = config_from_dict(dumped)
        assert config_hash(cfg) == config_hash(again)

    def test_hash_sensitive_to_changes(self):
        a = config_from_dict(MINIMAL)
        b = config_from_dict({**MINIMAL, "seed": 1})
        assert config_hash(a) != config_hash(b)

    def test_load_config_from_file(self, tmp_path):
        path = write_config(tmp_path, {**MINIMAL, "seed": 4})
        assert load_config(path).seed == 4

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        with pytest.raises(ConfigError, match="empty"):
            load_config(path)


class TestCli:
    def test_print_effective_config(self, tmp_path, capsys):
        path = write_config(tmp_path, MINIMAL)
        assert main(["run-all", "--config", str(path),
                     "--print-effective-config"]) == 0
        out = capsys.readouterr().out
        parsed = yaml.safe_load(out)
        assert parsed["k"] == 5
        assert parsed["backbone"]["variant"] == "resnet18_slim"

    def test_overrides_applied(self, tmp_path, capsys):
        path = write_config(tmp_path, MINIMAL)
        assert main(["run-all", "--config", str(path), "--seed", "42",
                     "--gamma", "0.25", "--gamma", "0.75",
                     "--backbone", "cct",
                     "--print-effective-config"]) == 0
        parsed = yaml.safe_load(capsys.readouterr().out)
        assert parsed["seed"] == 42
        assert parsed["multiscale"]["gammas"] == [0.25, 0.75]
        assert parsed["backbone"]["variant"] == "cct"

    def test_bad_config_exits_nonzero(self, tmp_path, capsys):
        path = write_config(tmp_path, {"dataset": {}})
        assert main(["run-all", "--config", str(path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_backbone_override_exits_nonzero(self, tmp_path, capsys):
        path = write_config(tmp_path, MINIMAL)
        assert main(["synth", "--config", str(path),
                     "--backbone", "densenet"]) == 1

    def test_evaluate_without_artifacts_exits_nonzero(self, tmp_path, capsys):
        raw = {**MINIMAL, "output_dir": str(tmp_path / "run")}
        path = write_config(tmp_path, raw)
        assert main(["evaluate", "--config", str(path)]) == 1
        err = capsys.readouterr().err
        assert "fold plan" in err or "error" in err
