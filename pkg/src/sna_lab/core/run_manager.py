"""
Artifact persistence for laboratory runs
实验运行产物的持久化
"""

import json
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

from .. import __version__
from ..utils.file_utils import atomic_write_text, json_text
from .errors import ConfigError

MANIFEST_SUFFIX = ".manifest.json"


class RunManager:
    """Write artifacts and their manifests under a runs directory"""

    def __init__(self, runs_dir: Optional[str] = None, status_callback: Optional[Callable] = None):
        self.runs_dir = Path(runs_dir or os.getenv("SNA_RUNS_DIR") or "runs")
        self.status_callback = status_callback or (lambda msg: None)

    def resolve(self, out: Optional[str], default_name: str) -> Path:
        """Explicit --out paths are used as given; otherwise the file goes in runs_dir."""
        return Path(out) if out else self.runs_dir / default_name

    def manifest_path(self, artifact: Union[str, Path]) -> Path:
        artifact = Path(artifact)
        return artifact.with_name(artifact.name + MANIFEST_SUFFIX)

    def save_artifact(self, path: Union[str, Path], content: str, manifest: Dict[str, Any]) -> Path:
        """
        Write an artifact and its sibling manifest atomically
        原子写入产物及其清单
        """
        target = atomic_write_text(path, content)
        record = {"tool": "sna_lab", "version": __version__, "artifact": target.name}
        record.update(manifest)
        atomic_write_text(self.manifest_path(target), json_text(record))
        self.status_callback(f"💾 Saved {target} / 已保存 {target}")
        return target

    def load_manifest(self, artifact: Union[str, Path]) -> Dict[str, Any]:
        """
        Load the manifest written next to an artifact
        读取产物旁的清单
        """
        path = self.manifest_path(artifact)
        if not path.exists():
            raise ConfigError(f"no manifest found for {artifact}")
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)

    def list_runs(self) -> List[Dict[str, Any]]:
        """Manifests found in runs_dir, sorted by artifact name"""
        if not self.runs_dir.exists():
            return []
        runs = []
        for path in sorted(self.runs_dir.glob(f"*{MANIFEST_SUFFIX}")):
            try:
                with open(path, "r", encoding="utf-8") as f:
                    runs.append(json.load(f))
            except (OSError, json.JSONDecodeError) as e:
                self.status_callback(f"⚠️ Skipping unreadable manifest {path.name}: {e}")
        return runs
