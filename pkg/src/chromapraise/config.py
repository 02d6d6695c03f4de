"""Pipeline configuration: one TOML file covering every tunable.

Every extraction stage reads its parameters from a section of the same
name; missing sections and keys fall back to the documented defaults,
unknown ones are rejected so typos cannot silently change results.  A
short hash of the effective configuration is stamped into every output
row for provenance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .complexity import CcmParams
from .edges import CannyParams
from .harmony import HarmonyParams
from .saliency import DstParams
from .segmentation import SegParams


@dataclass
class ImagingParams:
    max_side: int = 512

    def __post_init__(self):
        if self.max_side < 1:
            raise ValueError("max_side must be >= 1")


@dataclass
class PipelineConfig:
    imaging: ImagingParams = field(default_factory=ImagingParams)
    complexity: CcmParams = field(default_factory=CcmParams)
    saliency: DstParams = field(default_factory=DstParams)
    edges: CannyParams = field(default_factory=CannyParams)
    harmony: HarmonyParams = field(default_factory=HarmonyParams)
    segmentation: SegParams = field(default_factory=SegParams)


_SECTIONS = {
    "imaging": ImagingParams,
    "complexity": CcmParams,
    "saliency": DstParams,
    "edges": CannyParams,
    "harmony": HarmonyParams,
    "segmentation": SegParams,
}


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Configuration from a TOML file, or pure defaults when path is None."""
    if path is None:
        return PipelineConfig()
    raw = Path(path).read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ValueError(f"invalid config file {path}: {exc}") from exc
    kwargs = {}
    for section, payload in doc.items():
        cls = _SECTIONS.get(section)
        if cls is None:
            raise ValueError(
                f"unknown config section [{section}]; expected one of "
                + ", ".join(sorted(_SECTIONS))
            )
        if not isinstance(payload, dict):
            raise ValueError(f"config section [{section}] must be a table")
        known = {f.name: f.type for f in fields(cls)}
        bad = sorted(set(payload) - set(known))
        if bad:
            raise ValueError(f"unknown keys in [{section}]: " + ", ".join(bad))
        values = dict(payload)
        if "channel_gates" in values:
            values["channel_gates"] = tuple(bool(v) for v in values["channel_gates"])
        try:
            kwargs[section] = cls(**values)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"bad value in [{section}]: {exc}") from exc
    return PipelineConfig(**kwargs)


def config_hash(config: PipelineConfig) -> str:
    """Twelve hex characters identifying the effective configuration."""
    canonical = json.dumps(asdict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
