"""GPU capacity planning: layout search, per-GPU memory budgets, image selection.

Layouts keep tensor parallelism inside a node and use pipeline parallelism
across nodes, because crossing nodes buys memory, not speed. The search
minimizes node count first, then maximizes GPUs used per node.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ImageMissing, Infeasible
from .profiles import DeploymentSpec, ModelCatalogEntry, PlatformProfile, SiteProfile

# A hard floor on per-GPU kvcache memory prevents degenerate plans that load
# weights with no room left for inference state. Overridable per call.
DEFAULT_KVCACHE_FLOOR_GIB = 8.0
DEFAULT_MAX_NODES = 8
DEFAULT_GPU_CAP = 64


@dataclass(frozen=True)
class Plan:
    """A resource decision: parallel sizes, memory budget, resolved image."""

    tensor_parallel_size: int
    pipeline_parallel_size: int
    total_gpus: int
    weight_shard_per_gpu_gib: float
    kvcache_budget_per_gpu_gib: float
    image: str
    accelerator_kind: str
    feasible: bool = True
    reason: str | None = None

    def __post_init__(self):
        assert self.total_gpus == self.tensor_parallel_size * self.pipeline_parallel_size


def per_gpu_budget_gib(platform: PlatformProfile) -> float:
    """Engine-usable memory per GPU: capacity scaled by the utilization knob."""
    return platform.gpu_memory_gib * platform.gpu_memory_utilization


def min_gpus(
    entry: ModelCatalogEntry,
    platform: PlatformProfile,
    kvcache_floor_gib: float = DEFAULT_KVCACHE_FLOOR_GIB,
    cap: int = DEFAULT_GPU_CAP,
) -> int:
    """Smallest power-of-two GPU count whose weight shard leaves the kvcache floor.

    Raises Infeasible when no count up to ``cap`` fits.
    """
    budget = per_gpu_budget_gib(platform)
    g = 1
    while g <= cap:
        if entry.weight_size_gib / g + kvcache_floor_gib <= budget:
            return g
        g *= 2
    raise Infeasible(
        f"model '{entry.id}' ({entry.weight_size_gib} GiB) does not fit "
        f"{budget:.6g} GiB/GPU budgets with a {kvcache_floor_gib:.6g} GiB kvcache "
        f"floor at any GPU count up to {cap}"
    )


def resolve_image(
    spec: DeploymentSpec,
    platform: PlatformProfile,
    site: SiteProfile | None = None,
) -> str:
    """Pick the accelerator-matched image and apply the site registry prefix."""
    try:
        image = spec.image_by_accelerator[platform.accelerator_kind]
    except KeyError:
        raise ImageMissing(
            f"spec for '{spec.model}' has no {platform.accelerator_kind} image "
            f"(platform '{platform.name}'); images are declared for "
            f"{sorted(spec.image_by_accelerator)}"
        ) from None
    prefix = site.registry_prefix if site is not None else ""
    return prefix + image


def _tp_candidates(gpus_per_node: int) -> list[int]:
    """Powers of two up to the node GPU count, descending (engine sharding convention)."""
    sizes = []
    tp = 1
    while tp <= gpus_per_node:
        sizes.append(tp)
        tp *= 2
    return sizes[::-1]


def plan(
    spec: DeploymentSpec,
    entry: ModelCatalogEntry,
    platform: PlatformProfile,
    site: SiteProfile | None = None,
    kvcache_floor_gib: float = DEFAULT_KVCACHE_FLOOR_GIB,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> Plan:
    """Compute a GPU layout for ``spec`` on ``platform``.

    The chosen layout has the fewest nodes, then the most GPUs per node,
    subject to total_gpus >= min_gpus. An explicit spec.tensor_parallel_size is
    honored verbatim. Resource infeasibility comes back as a Plan with
    feasible=False and the limiting constraint in ``reason``; a missing
    accelerator image raises ImageMissing.
    """
    if entry.id != spec.model:
        raise ValueError(f"catalog entry '{entry.id}' does not match spec model '{spec.model}'")
    image = resolve_image(spec, platform, site)

    def infeasible(reason: str) -> Plan:
        return Plan(
            tensor_parallel_size=0,
            pipeline_parallel_size=0,
            total_gpus=0,
            weight_shard_per_gpu_gib=0.0,
            kvcache_budget_per_gpu_gib=0.0,
            image=image,
            accelerator_kind=platform.accelerator_kind,
            feasible=False,
            reason=reason,
        )

    cap = max_nodes * platform.gpus_per_node
    try:
        need = min_gpus(entry, platform, kvcache_floor_gib, cap=cap)
    except Infeasible as exc:
        return infeasible(str(exc))

    if spec.tensor_parallel_size is not None:
        if spec.tensor_parallel_size > platform.gpus_per_node:
            return infeasible(
                f"requested tensor_parallel_size={spec.tensor_parallel_size} exceeds "
                f"gpus_per_node={platform.gpus_per_node} on '{platform.name}'"
            )
        tp_candidates = [spec.tensor_parallel_size]
    else:
        tp_candidates = _tp_candidates(platform.gpus_per_node)

    budget = per_gpu_budget_gib(platform)
    for pp in range(1, max_nodes + 1):  # fewest nodes first
        for tp in tp_candidates:  # then widest within a node
            total = tp * pp
            if total < need:
                continue
            shard = entry.weight_size_gib / total
            if shard + kvcache_floor_gib > budget:
                continue
            return Plan(
                tensor_parallel_size=tp,
                pipeline_parallel_size=pp,
                total_gpus=total,
                weight_shard_per_gpu_gib=shard,
                kvcache_budget_per_gpu_gib=budget - shard,
                image=image,
                accelerator_kind=platform.accelerator_kind,
            )

    return infeasible(
        f"model '{entry.id}' needs {need} GPUs but the search is capped at "
        f"{max_nodes} nodes x {platform.gpus_per_node} GPUs"
    )


def plan_to_dict(p: Plan) -> dict:
    return {
        "tensor_parallel_size": p.tensor_parallel_size,
        "pipeline_parallel_size": p.pipeline_parallel_size,
        "total_gpus": p.total_gpus,
        "weight_shard_per_gpu_gib": p.weight_shard_per_gpu_gib,
        "kvcache_budget_per_gpu_gib": p.kvcache_budget_per_gpu_gib,
        "image": p.image,
        "accelerator_kind": p.accelerator_kind,
        "feasible": p.feasible,
        "reason": p.reason,
    }


def describe(p: Plan, entry: ModelCatalogEntry, platform: PlatformProfile) -> str:
    """Human-readable plan summary for the CLI."""
    lines = [
        f"model                {entry.id}",
        f"platform             {platform.name} ({platform.accelerator_kind}, "
        f"{platform.gpus_per_node}x{platform.gpu_memory_gib:.6g} GiB)",
    ]
    if p.feasible:
        lines += [
            f"plan                 tp={p.tensor_parallel_size} pp={p.pipeline_parallel_size} "
            f"total_gpus={p.total_gpus}",
            f"weight shard / GPU   {p.weight_shard_per_gpu_gib:.6g} GiB",
            f"kvcache / GPU        {p.kvcache_budget_per_gpu_gib:.6g} GiB",
            f"image                {p.image}",
        ]
    else:
        lines += ["plan                 infeasible", f"reason               {p.reason}"]
    return "\n".join(lines)
