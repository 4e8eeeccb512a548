import json

import pytest

from src.config.config_manager import ConfigManager, builtin_presets, read_experiment
from src.core.errors import ConfigurationError
from src.models.experiment import Experiment
from src.models.network_spec import TopologyKind
from src.models.training import SynthConfig


@pytest.fixture
def manager(tmp_path):
    return ConfigManager(config_dir=str(tmp_path / "config"))


def test_presets_cover_every_topology_and_validate():
    presets = builtin_presets()
    assert {p.model.topology.kind for p in presets} == set(TopologyKind)
    for preset in presets:
        assert preset.validate() == []
        assert preset.synth.image_size == preset.model.image_size == 128


def test_install_presets_once(manager):
    assert len(manager.install_presets()) == len(TopologyKind)
    assert manager.install_presets() == []
    assert len(manager.install_presets(overwrite=True)) == len(TopologyKind)
    assert manager.find("toy-sat3").model.topology.kind == TopologyKind.SAT3


def test_create_and_reload(manager, tmp_path):
    created = manager.create_experiment("mine", description="unit", n_train=20)
    fresh = ConfigManager(config_dir=str(tmp_path / "config"))
    loaded = fresh.load_experiment(created.id)
    assert loaded.name == "mine" and loaded.n_train == 20
    assert loaded.model.to_dict() == created.model.to_dict()
    assert fresh.find("mine").id == created.id


def test_invalid_experiment_is_not_saved(manager):
    with pytest.raises(ConfigurationError) as info:
        manager.create_experiment("bad", synth=SynthConfig(n_landmarks=5))
    assert any("landmarks" in e for e in info.value.errors)


def test_duplicate_export_import_delete(manager, tmp_path):
    original = manager.create_experiment("base")
    copy = manager.duplicate_experiment(original.id, "copy")
    assert copy.id != original.id and copy.description == "Copy of base"

    path = str(tmp_path / "exported.json")
    assert manager.export_experiment(original.id, path)
    imported = manager.import_experiment(path)
    assert imported.id != original.id and imported.name == "base"

    assert manager.delete_experiment(copy.id)
    assert manager.load_experiment(copy.id) is None
    assert manager.duplicate_experiment("missing", "x") is None


def test_default_experiment(manager):
    assert manager.get_default_experiment() is None
    first = manager.create_experiment("a")
    second = manager.create_experiment("b")
    manager.set_default_experiment(second.id)
    assert manager.get_default_experiment().id == second.id
    assert manager.get_general_config()['default_experiment'] == second.id
    assert first.id != second.id


def test_unknown_general_setting(manager):
    with pytest.raises(ConfigurationError):
        manager.set_general("colour", "blue")


def test_resolve_file_stored_and_builtin(manager, tmp_path):
    preset = builtin_presets()[0]
    data = preset.to_dict()
    del data['id'], data['name']
    path = tmp_path / "from_file.json"
    path.write_text(json.dumps(data))
    assert manager.resolve(str(path)).name == "from_file"

    stored = manager.create_experiment("stored")
    assert manager.resolve("stored").id == stored.id
    assert manager.resolve("toy-dla").model.topology.kind == TopologyKind.DLA
    with pytest.raises(ConfigurationError):
        manager.resolve("nowhere")


def test_broken_json_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigurationError):
        read_experiment(str(path))


def test_experiment_dict_roundtrip():
    preset = builtin_presets()[2]
    again = Experiment.from_dict(json.loads(json.dumps(preset.to_dict())))
    assert again.to_dict() == preset.to_dict()
