"""Run manifests written next to every CLI output."""

from datetime import datetime, timezone
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field

from tapudd import __version__
from tapudd.formats import atomic_write

MANIFEST_SUFFIX = ".manifest.json"


class RunManifest(BaseModel):
    """Everything needed to re-run one subcommand and get the same outputs."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tool: str = "tapudd"
    version: str = __version__
    subcommand: str
    argv: list[str]
    config: dict = Field(default_factory=dict)
    inputs: dict[str, str | list[str]] = Field(default_factory=dict)
    outputs: list[str] = Field(default_factory=list)
    seed: int | None = None
    started_at: str
    wall_clock_seconds: float = Field(ge=0)


def manifest_path(output):
    return Path(f"{output}{MANIFEST_SUFFIX}")


def utc_now():
    return datetime.now(timezone.utc).isoformat()


def write_manifest(manifest, output):
    path = manifest_path(output)
    with atomic_write(path) as fh:
        fh.write(manifest.model_dump_json(indent=2).encode("utf-8"))
    return path


def read_manifest(path):
    return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))
