"""Versioned model store: manifests, payloads, and an atomic ACTIVE pointer.

Layout on disk::

    <root>/<purpose>/<version>/manifest.json
    <root>/<purpose>/<version>/payload.bin
    <root>/<purpose>/ACTIVE

Purposes are "detection" or "correction:<class-id>". Version ids are
monotone per purpose and never reused. Manifest and payload are written to
temporary names and renamed into place, and the ACTIVE pointer flip is a
single atomic rename, so in-flight readers keep working on the model they
already loaded.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import TxcError
from .forest import ForestModel, forest_from_payload, forest_to_payload
from .logistic import OvrLogisticModel, logistic_from_payload, logistic_to_payload


class RegistryError(TxcError):
    module = "registry"


class UnknownVersion(RegistryError):
    pass


class PayloadCorrupt(RegistryError):
    pass


PURPOSE_DETECTION = "detection"


def correction_purpose(class_id: int) -> str:
    return f"correction:{class_id}"


def _purpose_dirname(purpose: str) -> str:
    return purpose.replace(":", "-")


@dataclass
class ModelArtifact:
    purpose: str
    version: int
    kind: str
    hyperparameters: dict
    seed: int
    dataset_provenance: dict
    evaluation: dict | None
    created_at: str
    checksum: str
    payload: bytes = field(repr=False, default=b"")

    def manifest(self) -> dict:
        return {
            "purpose": self.purpose,
            "version": self.version,
            "kind": self.kind,
            "hyperparameters": self.hyperparameters,
            "seed": self.seed,
            "dataset_provenance": self.dataset_provenance,
            "evaluation": self.evaluation,
            "created_at": self.created_at,
            "checksum": self.checksum,
        }


def _dump_manifest(manifest: dict) -> bytes:
    return (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class ModelRegistry:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()

    # -- paths ---------------------------------------------------------------

    def _purpose_dir(self, purpose: str) -> Path:
        return self.root / _purpose_dirname(purpose)

    def _version_dir(self, purpose: str, version: int) -> Path:
        return self._purpose_dir(purpose) / str(version)

    def versions(self, purpose: str) -> list[int]:
        pdir = self._purpose_dir(purpose)
        if not pdir.is_dir():
            return []
        return sorted(int(p.name) for p in pdir.iterdir()
                      if p.is_dir() and p.name.isdigit())

    def purposes(self) -> list[str]:
        return sorted(p.name.replace("-", ":", 1) if p.name.startswith("correction-")
                      else p.name
                      for p in self.root.iterdir() if p.is_dir())

    # -- save / load -----------------------------------------------------------

    def save(self, purpose: str, model: ForestModel | OvrLogisticModel,
             dataset_provenance: dict, evaluation: dict | None = None,
             created_at: str | None = None) -> int:
        """Persist a model; returns its new version id."""
        if isinstance(model, ForestModel):
            kind, payload = "forest", forest_to_payload(model)
        elif isinstance(model, OvrLogisticModel):
            kind, payload = "ovr_logistic", logistic_to_payload(model)
        else:
            raise RegistryError(f"cannot persist {type(model).__name__}")
        with self._lock:
            existing = self.versions(purpose)
            version = (existing[-1] + 1) if existing else 1
            vdir = self._version_dir(purpose, version)
            vdir.mkdir(parents=True, exist_ok=False)
            checksum = hashlib.sha256(payload).hexdigest()
            artifact = ModelArtifact(
                purpose=purpose, version=version, kind=kind,
                hyperparameters=model.hyperparameters(), seed=model.seed,
                dataset_provenance=dataset_provenance, evaluation=evaluation,
                created_at=created_at or _dt.datetime.now(_dt.timezone.utc)
                .strftime("%Y-%m-%dT%H:%M:%SZ"),
                checksum=checksum, payload=payload,
            )
            _atomic_write(vdir / "payload.bin", payload)
            _atomic_write(vdir / "manifest.json", _dump_manifest(artifact.manifest()))
            return version

    def manifest(self, purpose: str, version: int) -> dict:
        path = self._version_dir(purpose, version) / "manifest.json"
        if not path.exists():
            raise UnknownVersion(f"{purpose} has no version {version}")
        return json.loads(path.read_text(encoding="utf-8"))

    def load(self, purpose: str, version: int) -> ForestModel | OvrLogisticModel:
        manifest = self.manifest(purpose, version)
        payload = (self._version_dir(purpose, version) / "payload.bin").read_bytes()
        checksum = hashlib.sha256(payload).hexdigest()
        if checksum != manifest["checksum"]:
            raise PayloadCorrupt(
                f"{purpose} v{version}: payload checksum {checksum[:12]}... does not "
                f"match manifest {manifest['checksum'][:12]}...")
        if manifest["kind"] == "forest":
            return forest_from_payload(payload)
        return logistic_from_payload(payload)

    def attach_evaluation(self, purpose: str, version: int, evaluation: dict):
        """Store an evaluation report in the version's manifest."""
        with self._lock:
            manifest = self.manifest(purpose, version)
            manifest["evaluation"] = evaluation
            _atomic_write(self._version_dir(purpose, version) / "manifest.json",
                          _dump_manifest(manifest))

    # -- activation ------------------------------------------------------------

    def activate(self, purpose: str, version: int):
        with self._lock:
            if version not in self.versions(purpose):
                raise UnknownVersion(f"{purpose} has no version {version}")
            _atomic_write(self._purpose_dir(purpose) / "ACTIVE",
                          f"{version}\n".encode("ascii"))

    def active_version(self, purpose: str) -> int | None:
        path = self._purpose_dir(purpose) / "ACTIVE"
        if not path.exists():
            return None
        return int(path.read_text(encoding="ascii").strip())

    def load_active(self, purpose: str):
        version = self.active_version(purpose)
        if version is None:
            return None, None
        return version, self.load(purpose, version)

    def list_artifacts(self) -> list[dict]:
        out = []
        for purpose in self.purposes():
            active = self.active_version(purpose)
            for version in self.versions(purpose):
                manifest = self.manifest(purpose, version)
                manifest["active"] = version == active
                out.append(manifest)
        return out
