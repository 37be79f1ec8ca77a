import pytest

from sna_lab import __version__
from sna_lab.core.errors import ConfigError
from sna_lab.core.run_manager import RunManager


def test_save_artifact_writes_manifest(tmp_path):
    manager = RunManager(runs_dir=str(tmp_path))
    path = manager.save_artifact(tmp_path / "graph.csv", "theta_1,phi,n\n", {"seed": 7})
    assert path.read_text(encoding="utf-8") == "theta_1,phi,n\n"
    manifest = manager.load_manifest(path)
    assert manifest == {"tool": "sna_lab", "version": __version__, "artifact": "graph.csv", "seed": 7}
    assert manager.manifest_path(path).name == "graph.csv.manifest.json"


def test_resolve_uses_runs_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SNA_RUNS_DIR", str(tmp_path / "elsewhere"))
    manager = RunManager()
    assert manager.resolve(None, "a.json") == tmp_path / "elsewhere" / "a.json"
    assert str(manager.resolve("out/b.json", "a.json")) == "out/b.json"


def test_list_runs_skips_unreadable_manifests(tmp_path):
    messages = []
    manager = RunManager(runs_dir=str(tmp_path), status_callback=messages.append)
    manager.save_artifact(tmp_path / "b.json", "{}\n", {"command": "check"})
    manager.save_artifact(tmp_path / "a.json", "{}\n", {"command": "verify"})
    (tmp_path / "broken.json.manifest.json").write_text("{not json", encoding="utf-8")
    runs = manager.list_runs()
    assert [run["artifact"] for run in runs] == ["a.json", "b.json"]
    assert any("Skipping" in msg for msg in messages)


def test_missing_manifest_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        RunManager(runs_dir=str(tmp_path)).load_manifest(tmp_path / "nothing.csv")


def test_list_runs_on_missing_directory(tmp_path):
    assert RunManager(runs_dir=str(tmp_path / "absent")).list_runs() == []
