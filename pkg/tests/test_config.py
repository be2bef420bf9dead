"""Tests for recipes, TOML loading and --set overrides."""
from pathlib import Path

import pytest

from config import RECIPES, dump_config, load_config, parse_override, recipe
from config.settings import Settings
from models.base import Arch, ForwardMode, KtStrategy, LossTerm
from models.config import StageSpec, TrainConfig
from utils.errors import ArtifactNotFoundError, ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestRecipes:
    @pytest.mark.parametrize("name", sorted(RECIPES))
    def test_every_recipe_validates(self, name):
        cfg = recipe(name)
        assert isinstance(cfg, TrainConfig)
        assert cfg.stages[-1].teacher == "teacher"

    def test_desk_shape(self):
        cfg = recipe("desk")
        assert cfg.model.arch is Arch.TINY_CNN
        assert [s.name for s in cfg.stages] == ["bnn-act", "distill"]
        assert cfg.kurtosis.lam == 1e-3

    def test_cifar_teacher_uses_heterogeneous_targets(self):
        cfg = recipe("cifar-resnet20")
        assert cfg.teacher_kurtosis.strategy is KtStrategy.HETEROGENEOUS
        assert cfg.model.binarize_downsample is True

    @pytest.mark.parametrize("name", sorted(RECIPES))
    def test_class_count_matches_dataset(self, name):
        cfg = recipe(name)
        assert cfg.model.num_classes == 10
        assert cfg.data.dataset.value in ("mnist", "cifar10")

    def test_unknown_recipe(self):
        with pytest.raises(ConfigError) as info:
            recipe("imagenet")
        assert info.value.key == "recipe"
        assert info.value.exit_code == 2


class TestOverrides:
    @pytest.mark.parametrize(
        "item, expected",
        [
            ("epochs=3", ("epochs", 3)),
            ("kurtosis.lambda=1e-4", ("kurtosis.lambda", 1e-4)),
            ("data.augment=crop-flip", ("data.augment", "crop-flip")),
            ("model.binarize_downsample=false", ("model.binarize_downsample", False)),
            ("optimizer.kind = 'sgd'", ("optimizer.kind", "sgd")),
        ],
    )
    def test_parse(self, item, expected):
        assert parse_override(item) == expected

    @pytest.mark.parametrize("item", ["epochs", "=3"])
    def test_malformed(self, item):
        with pytest.raises(ConfigError):
            parse_override(item)

    def test_applied_on_top_of_recipe(self):
        cfg = load_config(recipe_name="desk", overrides=["epochs=7", "kurtosis.kt=1.8", "wdm.range=2.0"])
        assert cfg.epochs == 7
        assert cfg.kurtosis.kt == 1.8
        assert cfg.wdm.support == 2.0
        assert cfg.model.arch is Arch.TINY_CNN

    def test_recipe_cannot_be_overridden(self):
        with pytest.raises(ConfigError) as info:
            load_config(recipe_name="desk", overrides=["recipe=cifar-resnet20"])
        assert info.value.key == "recipe"

    def test_validation_error_names_the_key(self):
        with pytest.raises(ConfigError) as info:
            load_config(recipe_name="desk", overrides=["data.batch_size=0"])
        assert info.value.key == "data.batch_size"
        assert "data.batch_size" in str(info.value)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError) as info:
            load_config(recipe_name="desk", overrides=["kurtosis.gamma=1"])
        assert info.value.key == "kurtosis.gamma"

    def test_kl_target_only_accepts_latent(self):
        assert load_config(recipe_name="desk").wdm.kl_target == "latent"
        with pytest.raises(ConfigError) as info:
            load_config(recipe_name="desk", overrides=["wdm.kl_target=binary"])
        assert info.value.key == "wdm.kl_target"


class TestTomlFiles:
    def test_explicit_file_matches_recipe(self):
        assert load_config(CONFIGS / "desk-explicit.toml") == recipe("desk")

    @pytest.mark.parametrize("name", ["desk", "cifar-resnet20", "imagenet-style-resnet18"])
    def test_shipped_files_load(self, name):
        cfg = load_config(CONFIGS / f"{name}.toml")
        assert cfg.stages

    def test_aliases(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('recipe = "desk"\n[kurtosis]\nlambda = 0.5\n[wdm]\nrange = 1.0\n', encoding="utf-8")
        cfg = load_config(path)
        assert cfg.kurtosis.lam == 0.5
        assert cfg.wdm.support == 1.0
        assert cfg.wdm.bin_width == pytest.approx(2.0 / 32)

    def test_file_stages_replace_recipe_stages(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(
            'recipe = "desk"\n[[stages]]\nname = "only"\nmode = "full-binary"\nlosses = ["ce"]\n',
            encoding="utf-8",
        )
        cfg = load_config(path)
        assert [s.name for s in cfg.stages] == ["only"]

    def test_dump_round_trips(self, tmp_path):
        cfg = load_config(recipe_name="cifar-resnet20", overrides=["seed=3"])
        snapshot = dump_config(cfg)
        assert snapshot["kurtosis"]["lambda"] == cfg.kurtosis.lam
        assert TrainConfig.model_validate(snapshot) == cfg

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactNotFoundError):
            load_config(tmp_path / "absent.toml")

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("epochs = = 3\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)


class TestModelValidation:
    def test_distillation_stage_needs_teacher(self):
        with pytest.raises(ValueError):
            StageSpec(name="d", mode=ForwardMode.FULL_BINARY, losses=[LossTerm.CE, LossTerm.WDM])

    def test_duplicate_losses_collapse(self):
        stage = StageSpec(name="s", mode=ForwardMode.FP, losses=[LossTerm.CE, LossTerm.CE])
        assert stage.losses == [LossTerm.CE]

    def test_reserved_and_duplicate_stage_names(self):
        stage = StageSpec(name="teacher", mode=ForwardMode.FP)
        with pytest.raises(ValueError):
            TrainConfig(stages=[stage])
        dup = StageSpec(name="a", mode=ForwardMode.FP)
        with pytest.raises(ValueError):
            TrainConfig(stages=[dup, dup])

    def test_stage_epochs_fall_back(self):
        cfg = TrainConfig(epochs=4, stages=[StageSpec(name="a", mode=ForwardMode.FP, epochs=2),
                                            StageSpec(name="b", mode=ForwardMode.FP)])
        assert [cfg.stage_epochs(s) for s in cfg.stages] == [2, 4]
        assert cfg.teacher_stage_epochs == 4


class TestSettings:
    def test_environment_prefix(self, monkeypatch):
        monkeypatch.setenv("BDBNN_THREADS", "4")
        monkeypatch.setenv("BDBNN_PRECISION", "float64")
        fresh = Settings(_env_file=None)
        assert fresh.threads == 4
        assert fresh.precision == "float64"
