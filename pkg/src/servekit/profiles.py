"""Declarative data model: model catalog, deployment specs, site and platform profiles.

All four document kinds share one YAML file format (human-editable,
comment-capable); the full schema lives in docs/config.md. Loaded values are
frozen dataclasses, safe to share across threads. Every validation failure
names the offending field and the rule it broke.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ParseError, UnknownModel, ValidationError

ACCELERATOR_KINDS = ("cuda", "rocm")
RUNTIMES = ("podman", "apptainer", "kubernetes")
SCHEDULERS = ("slurm", "flux", "kubernetes", "none")
MODES = ("offline", "online")
INGRESS_MODES = ("ssh_tunnel", "cal_proxy", "k8s_ingress")
KNOWN_QUANTIZATIONS = ("none", "w4a16")  # free-form strings beyond these are accepted

DEFAULT_PORT = 8000
DEFAULT_S3_MAX_ATTEMPTS = 10
DEFAULT_GPU_MEMORY_UTILIZATION = 0.90


@dataclass(frozen=True)
class ModelCatalogEntry:
    """One servable model: identity, upstream source, and serving footprint.

    weight_size_gib is the declared as-loaded size of the serialized weights
    (it includes serialization overhead, so it is data, not parameter-count
    arithmetic).
    """

    id: str
    upstream_repo_url: str = ""
    weight_size_gib: float = 0.0
    quantization: str = "none"
    default_context_len: int = 1
    served_name: str = ""
    notes: str = ""

    def __post_init__(self):
        if not self.id:
            raise ValidationError("model.id: must be a non-empty string")
        if not self.weight_size_gib > 0:
            raise ValidationError(
                f"model '{self.id}' weight_size_gib: must be > 0 for a servable "
                f"entry (got {self.weight_size_gib})"
            )
        if self.default_context_len < 1:
            raise ValidationError(
                f"model '{self.id}' default_context_len: must be >= 1 "
                f"(got {self.default_context_len})"
            )
        if not self.served_name:
            object.__setattr__(self, "served_name", self.id)


@dataclass(frozen=True)
class ModelCatalog:
    """Ordered collection of catalog entries with unique ids."""

    entries: tuple[ModelCatalogEntry, ...] = ()

    def __post_init__(self):
        seen: set[str] = set()
        for entry in self.entries:
            if entry.id in seen:
                raise ValidationError(
                    f"catalog.models: duplicate id '{entry.id}' (ids must be unique)"
                )
            seen.add(entry.id)

    def get(self, model_id: str) -> ModelCatalogEntry:
        for entry in self.entries:
            if entry.id == model_id:
                return entry
        raise UnknownModel(f"model '{model_id}' is not in the catalog")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class DeploymentSpec:
    """What to serve: model, per-accelerator images, mode, parallelism, port."""

    model: str
    image_by_accelerator: dict[str, str] = field(default_factory=dict)
    mode: str = "offline"
    max_model_len: int = 0
    tensor_parallel_size: int | None = None
    port: int = DEFAULT_PORT
    extra_engine_args: tuple[str, ...] = ()
    models_dir: str = "./models"

    def __post_init__(self):
        if not self.model:
            raise ValidationError("spec.model: must reference a catalog id")
        if not self.image_by_accelerator:
            raise ValidationError("spec.images: must map at least one accelerator kind to an image")
        for kind in self.image_by_accelerator:
            if kind not in ACCELERATOR_KINDS:
                raise ValidationError(
                    f"spec.images: unknown accelerator kind '{kind}' "
                    f"(expected one of {ACCELERATOR_KINDS})"
                )
        if self.mode not in MODES:
            raise ValidationError(f"spec.mode: '{self.mode}' is not one of {MODES}")
        if self.max_model_len < 1:
            raise ValidationError(
                f"spec.max_model_len: must be >= 1 (got {self.max_model_len})"
            )
        if self.tensor_parallel_size is not None and self.tensor_parallel_size < 1:
            raise ValidationError(
                f"spec.tensor_parallel_size: must be a positive int "
                f"(got {self.tensor_parallel_size})"
            )
        if not 1 <= self.port <= 65535:
            raise ValidationError(f"spec.port: must be in [1, 65535] (got {self.port})")


@dataclass(frozen=True)
class SiteProfile:
    """Where to serve: registry, object store, proxies, runtime preference."""

    registry_prefix: str = ""
    s3_endpoint_url: str = ""
    s3_bucket: str = ""
    s3_checksum_workaround: bool = True
    s3_max_attempts: int = DEFAULT_S3_MAX_ATTEMPTS
    ca_cert_path: str | None = None
    ca_cert_required: bool = False
    proxy_exclusions: tuple[str, ...] = ()
    preferred_runtime: str = "podman"

    def __post_init__(self):
        if self.registry_prefix and not self.registry_prefix.endswith("/"):
            raise ValidationError(
                "site.registry_prefix: must be empty or end with '/' "
                f"(got '{self.registry_prefix}')"
            )
        if self.s3_max_attempts < 1:
            raise ValidationError(
                f"site.s3_max_attempts: must be >= 1 (got {self.s3_max_attempts})"
            )
        if self.preferred_runtime not in RUNTIMES:
            raise ValidationError(
                f"site.preferred_runtime: '{self.preferred_runtime}' is not one of {RUNTIMES}"
            )


@dataclass(frozen=True)
class PlatformProfile:
    """One computing platform: GPU shape, scheduler, runtimes, ingress modes."""

    name: str
    accelerator_kind: str
    gpus_per_node: int
    gpu_memory_gib: float
    scheduler: str = "none"
    available_runtimes: frozenset[str] = frozenset()
    ingress_modes: frozenset[str] = frozenset()
    login_host: str | None = None
    gpu_memory_utilization: float = DEFAULT_GPU_MEMORY_UTILIZATION

    def __post_init__(self):
        if not self.name:
            raise ValidationError("platform.name: must be a non-empty string")
        if self.accelerator_kind not in ACCELERATOR_KINDS:
            raise ValidationError(
                f"platform.accelerator_kind: '{self.accelerator_kind}' is not one of "
                f"{ACCELERATOR_KINDS}"
            )
        if self.gpus_per_node < 1:
            raise ValidationError(
                f"platform.gpus_per_node: must be >= 1 (got {self.gpus_per_node})"
            )
        if not self.gpu_memory_gib > 0:
            raise ValidationError(
                f"platform.gpu_memory_gib: must be > 0 (got {self.gpu_memory_gib})"
            )
        if self.scheduler not in SCHEDULERS:
            raise ValidationError(
                f"platform.scheduler: '{self.scheduler}' is not one of {SCHEDULERS}"
            )
        for runtime in self.available_runtimes:
            if runtime not in RUNTIMES:
                raise ValidationError(
                    f"platform.available_runtimes: unknown runtime '{runtime}'"
                )
        for mode in self.ingress_modes:
            if mode not in INGRESS_MODES:
                raise ValidationError(f"platform.ingress_modes: unknown mode '{mode}'")
        if not (
            0.0 < self.gpu_memory_utilization <= 1.0
            and math.isfinite(self.gpu_memory_utilization)
        ):
            raise ValidationError(
                "platform.gpu_memory_utilization: must be a fraction in (0, 1] "
                f"(got {self.gpu_memory_utilization})"
            )


# -- file loading ---------------------------------------------------------------

def _read_yaml(path: str | Path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(str(path), f"cannot read file: {exc.strerror or exc}") from exc
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(str(path), f"malformed YAML: {problem}", line=line) from exc


def _require_mapping(data: Any, path: str | Path, what: str) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ParseError(str(path), f"{what} must be a mapping, got {type(data).__name__}")
    return data


def _check_keys(data: dict, allowed: tuple[str, ...], where: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ValidationError(f"{where}: unknown key(s) {unknown}; allowed keys are {sorted(allowed)}")


_ENTRY_KEYS = (
    "id", "upstream_repo_url", "weight_size_gib", "quantization",
    "default_context_len", "served_name", "notes",
)
_SPEC_KEYS = (
    "model", "images", "mode", "max_model_len", "tensor_parallel_size",
    "port", "extra_engine_args", "models_dir",
)
_SITE_KEYS = (
    "registry_prefix", "s3_endpoint_url", "s3_bucket", "s3_checksum_workaround",
    "s3_max_attempts", "ca_cert_path", "ca_cert_required", "proxy_exclusions",
    "preferred_runtime",
)
_PLATFORM_KEYS = (
    "name", "accelerator_kind", "gpus_per_node", "gpu_memory_gib", "scheduler",
    "available_runtimes", "ingress_modes", "login_host", "gpu_memory_utilization",
)


def entry_from_dict(data: dict, where: str = "model") -> ModelCatalogEntry:
    _check_keys(data, _ENTRY_KEYS, where)
    if "id" not in data:
        raise ValidationError(f"{where}.id: required key is missing")
    return ModelCatalogEntry(
        id=str(data["id"]),
        upstream_repo_url=str(data.get("upstream_repo_url", "")),
        weight_size_gib=float(data.get("weight_size_gib", 0.0)),
        quantization=str(data.get("quantization", "none")),
        default_context_len=int(data.get("default_context_len", 1)),
        served_name=str(data.get("served_name", "")),
        notes=str(data.get("notes", "")),
    )


def load_catalog(path: str | Path) -> ModelCatalog:
    """Load a model catalog file. An empty file yields an empty catalog."""
    data = _require_mapping(_read_yaml(path), path, "catalog")
    _check_keys(data, ("models",), "catalog")
    raw_entries = data.get("models") or []
    if not isinstance(raw_entries, list):
        raise ValidationError("catalog.models: must be a list of model entries")
    entries = []
    for i, raw in enumerate(raw_entries):
        if not isinstance(raw, dict):
            raise ValidationError(f"catalog.models[{i}]: each entry must be a mapping")
        entries.append(entry_from_dict(raw, where=f"catalog.models[{i}]"))
    return ModelCatalog(entries=tuple(entries))


def site_from_dict(data: dict) -> SiteProfile:
    _check_keys(data, _SITE_KEYS, "site")
    kwargs: dict[str, Any] = {}
    for key in _SITE_KEYS:
        if key in data and data[key] is not None:
            kwargs[key] = data[key]
    if "proxy_exclusions" in kwargs:
        kwargs["proxy_exclusions"] = tuple(str(h) for h in kwargs["proxy_exclusions"])
    return SiteProfile(**kwargs)


def load_site_profile(path: str | Path) -> SiteProfile:
    """Load and validate a site profile; documented defaults fill absent keys."""
    return site_from_dict(_require_mapping(_read_yaml(path), path, "site profile"))


def platform_from_dict(data: dict) -> PlatformProfile:
    _check_keys(data, _PLATFORM_KEYS, "platform")
    for key in ("name", "accelerator_kind", "gpus_per_node", "gpu_memory_gib"):
        if key not in data:
            raise ValidationError(f"platform.{key}: required key is missing")
    return PlatformProfile(
        name=str(data["name"]),
        accelerator_kind=str(data["accelerator_kind"]),
        gpus_per_node=int(data["gpus_per_node"]),
        gpu_memory_gib=float(data["gpu_memory_gib"]),
        scheduler=str(data.get("scheduler", "none")),
        available_runtimes=frozenset(str(r) for r in data.get("available_runtimes") or ()),
        ingress_modes=frozenset(str(m) for m in data.get("ingress_modes") or ()),
        login_host=data.get("login_host"),
        gpu_memory_utilization=float(
            data.get("gpu_memory_utilization", DEFAULT_GPU_MEMORY_UTILIZATION)
        ),
    )


def load_platform_profile(path: str | Path) -> PlatformProfile:
    """Load and validate a platform profile."""
    return platform_from_dict(_require_mapping(_read_yaml(path), path, "platform profile"))


# -- deployment spec resolution ---------------------------------------------------

def spec_from_dict(data: dict, catalog: ModelCatalog) -> DeploymentSpec:
    """Build a validated spec from a raw mapping, filling catalog defaults."""
    _check_keys(data, _SPEC_KEYS, "spec")
    if "model" not in data:
        raise ValidationError("spec.model: required key is missing")
    entry = catalog.get(str(data["model"]))

    images = data.get("images") or {}
    if not isinstance(images, dict):
        raise ValidationError("spec.images: must map accelerator kind -> image reference")

    max_model_len = data.get("max_model_len")
    if max_model_len is None:
        max_model_len = entry.default_context_len  # catalog default

    tp = data.get("tensor_parallel_size")
    spec = DeploymentSpec(
        model=entry.id,
        image_by_accelerator={str(k): str(v) for k, v in images.items()},
        mode=str(data.get("mode", "offline")),
        max_model_len=int(max_model_len),
        tensor_parallel_size=int(tp) if tp is not None else None,
        port=int(data.get("port", DEFAULT_PORT)),
        extra_engine_args=tuple(str(a) for a in data.get("extra_engine_args") or ()),
        models_dir=str(data.get("models_dir", "./models")),
    )
    if spec.max_model_len > entry.default_context_len:
        raise ValidationError(
            f"spec.max_model_len: {spec.max_model_len} exceeds the catalog context "
            f"length {entry.default_context_len} of model '{entry.id}'"
        )
    return spec


def parse_override(item: str) -> tuple[str, Any]:
    """Parse one ``key=value`` override; values go through YAML scalar rules."""
    if "=" not in item:
        raise ValidationError(f"override '{item}': expected key=value")
    key, _, raw = item.partition("=")
    key = key.strip()
    if not key:
        raise ValidationError(f"override '{item}': empty key")
    try:
        value = yaml.safe_load(raw) if raw != "" else ""
    except yaml.YAMLError:
        value = raw
    return key, value


def apply_overrides(data: dict, overrides: tuple[str, ...] | list[str]) -> dict:
    """Apply ``key=value`` overrides onto a raw spec mapping.

    Later overrides win over earlier ones; ``images.<kind>=ref`` addresses one
    entry of the image map. The input mapping is not mutated.
    """
    merged: dict = {k: v for k, v in data.items()}
    for item in overrides:
        key, value = parse_override(item)
        if key.startswith("images."):
            kind = key[len("images."):]
            images = dict(merged.get("images") or {})
            images[kind] = value
            merged["images"] = images
        else:
            merged[key] = value
    return merged


def resolve_spec(
    spec_path: str | Path,
    catalog: ModelCatalog,
    overrides: tuple[str, ...] | list[str] = (),
) -> DeploymentSpec:
    """Load a spec file and apply overrides.

    Precedence is command-line > file > catalog default; cross-field
    invariants are re-checked after overrides land.
    """
    data = _require_mapping(_read_yaml(spec_path), spec_path, "deployment spec")
    return spec_from_dict(apply_overrides(data, overrides), catalog)


# -- serialization (round-trips with the loaders) ---------------------------------

def entry_to_dict(entry: ModelCatalogEntry) -> dict:
    return {
        "id": entry.id,
        "upstream_repo_url": entry.upstream_repo_url,
        "weight_size_gib": entry.weight_size_gib,
        "quantization": entry.quantization,
        "default_context_len": entry.default_context_len,
        "served_name": entry.served_name,
        "notes": entry.notes,
    }


def catalog_to_dict(catalog: ModelCatalog) -> dict:
    return {"models": [entry_to_dict(e) for e in catalog.entries]}


def spec_to_dict(spec: DeploymentSpec) -> dict:
    return {
        "model": spec.model,
        "images": dict(spec.image_by_accelerator),
        "mode": spec.mode,
        "max_model_len": spec.max_model_len,
        "tensor_parallel_size": spec.tensor_parallel_size,
        "port": spec.port,
        "extra_engine_args": list(spec.extra_engine_args),
        "models_dir": spec.models_dir,
    }


def site_to_dict(site: SiteProfile) -> dict:
    return {
        "registry_prefix": site.registry_prefix,
        "s3_endpoint_url": site.s3_endpoint_url,
        "s3_bucket": site.s3_bucket,
        "s3_checksum_workaround": site.s3_checksum_workaround,
        "s3_max_attempts": site.s3_max_attempts,
        "ca_cert_path": site.ca_cert_path,
        "ca_cert_required": site.ca_cert_required,
        "proxy_exclusions": list(site.proxy_exclusions),
        "preferred_runtime": site.preferred_runtime,
    }


def platform_to_dict(platform: PlatformProfile) -> dict:
    return {
        "name": platform.name,
        "accelerator_kind": platform.accelerator_kind,
        "gpus_per_node": platform.gpus_per_node,
        "gpu_memory_gib": platform.gpu_memory_gib,
        "scheduler": platform.scheduler,
        "available_runtimes": sorted(platform.available_runtimes),
        "ingress_modes": sorted(platform.ingress_modes),
        "login_host": platform.login_host,
        "gpu_memory_utilization": platform.gpu_memory_utilization,
    }


def to_yaml(data: dict) -> str:
    """Canonical YAML emission: insertion order kept, block style, no aliases."""
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=False)


def save(data: dict, path: str | Path) -> None:
    Path(path).write_text(to_yaml(data))


def with_overrides(spec: DeploymentSpec, **changes: Any) -> DeploymentSpec:
    """Return a copy of a spec with fields replaced (re-validates)."""
    return replace(spec, **changes)


def field_names(cls: type) -> tuple[str, ...]:
    return tuple(f.name for f in fields(cls))
