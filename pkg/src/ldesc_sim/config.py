"""Experiment configuration: JSON parsing, policy wiring, single runs.

A config names a system (or preset), a grid, data structures with their
descriptors, a scheduling policy and a placement scheme. This module turns
one into validated library objects and composes the right schedule,
placement and cache/prefetch policy set for a simulation run.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .cache import CacheConfig, InsertionClass
from .descriptor import (
    AccessPattern,
    DataStructureRef,
    LocalityDescriptor,
    LocalityType,
    SharingType,
    TileSemantics,
    validate_descriptor_set,
)
from .engine import (
    AccessEvent,
    DescriptorPolicy,
    PolicySet,
    SimMetrics,
    SystemConfig,
    Workload,
    normal_policies,
    preset,
    select_policies,
    simulate,
)
from .errors import LdescError
from .grid import CtaGrid
from .numa import (
    distributed_schedule,
    first_touch,
    place_and_partition,
    xor_hash,
)
from .prefetch import PrefetchKind
from .sched import (
    Schedule,
    assign_clusters,
    assign_clusters_by_zone,
    baseline_bcs,
    baseline_round_robin,
    form_clusters,
)

POLICY_NAMES = ("rr", "bcs", "ldesc", "ldesc-sched", "ldesc-cache", "ldesc-pref")
PLACEMENT_NAMES = ("ldesc", "xor", "first_touch")
SWEEP_AXES = ("sm_count", "zone_count", "l1_capacity", "pin_reset_period", "seed")


class ConfigError(Exception):
    """Malformed or inconsistent experiment configuration (CLI exit 2)."""


@dataclass
class ExperimentConfig:
    system: SystemConfig
    grid: CtaGrid
    descs: list[LocalityDescriptor]
    policy: str = "ldesc"
    placement: str = "ldesc"
    seed: int = 1


def _get(obj: dict, key: str, path: str, default=None, required: bool = False):
    if key not in obj:
        if required:
            raise ConfigError(f"{path}.{key}: missing required field")
        return default
    return obj[key]


def _addr(value, path: str) -> int:
    if isinstance(value, str):
        try:
            return int(value, 16)
        except ValueError:
            raise ConfigError(f"{path}: {value!r} is not a hex address") from None
    if isinstance(value, int):
        return value
    raise ConfigError(f"{path}: expected hex string or integer")


def _triple(value, path: str) -> tuple[int, int, int]:
    if (
        not isinstance(value, list)
        or len(value) != 3
        or not all(isinstance(v, int) for v in value)
    ):
        raise ConfigError(f"{path}: expected a list of three integers")
    return (value[0], value[1], value[2])


def _system(raw: dict | str | None, preset_override: str | None) -> SystemConfig:
    if isinstance(raw, str):
        raw = {"preset": raw}
    raw = dict(raw or {})
    name = raw.pop("preset", "desk")
    if preset_override:
        name = preset_override
    try:
        base = preset(name)
    except LdescError as exc:
        raise ConfigError(f"system.preset: {exc}") from None
    updates = {}
    for key in ("sm_count", "zone_count", "max_resident_ctas_per_sm"):
        if key in raw:
            updates[key] = raw.pop(key)
    if "remote_link_capacity" in raw:
        updates["remote_link_capacity"] = float(raw.pop("remote_link_capacity"))
    for level in ("l1", "l2"):
        if level in raw:
            sub = raw.pop(level)
            cur = getattr(base, level)
            try:
                updates[level] = dataclasses.replace(cur, **sub)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"system.{level}: {exc}") from None
    if "latencies" in raw:
        try:
            updates["latencies"] = dataclasses.replace(
                base.latencies, **raw.pop("latencies")
            )
        except TypeError as exc:
            raise ConfigError(f"system.latencies: {exc}") from None
    if raw:
        raise ConfigError(f"system: unknown fields {sorted(raw)}")
    cfg = dataclasses.replace(base, **updates)
    if cfg.sm_count < 1 or cfg.zone_count < 1:
        raise ConfigError("system: sm_count and zone_count must be positive")
    if cfg.sm_count % cfg.zone_count != 0:
        raise ConfigError(
            f"system: {cfg.sm_count} SMs do not divide into {cfg.zone_count} zones"
        )
    return cfg


def _pattern(raw, path: str) -> AccessPattern:
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object")
    kind = _get(raw, "kind", path, required=True)
    if kind == "REGULAR":
        stride = _get(raw, "stride_bytes", path, required=True)
        return AccessPattern.regular_stride(stride)
    if kind == "IRREGULAR":
        return AccessPattern.irregular()
    raise ConfigError(f"{path}.kind: {kind!r} is not REGULAR or IRREGULAR")


def _enum(cls, value, path: str):
    try:
        return cls(value)
    except ValueError:
        raise ConfigError(
            f"{path}: {value!r} is not one of {[m.value for m in cls]}"
        ) from None


def parse_config(raw: dict, preset_override: str | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a JSON object")
    system = _system(raw.get("system"), preset_override)

    graw = _get(raw, "grid", "top level", required=True)
    grid = CtaGrid(
        dims=_triple(_get(graw, "dims", "grid", required=True), "grid.dims"),
        warps_per_cta=_get(graw, "warps_per_cta", "grid", default=8),
        threads_per_warp=_get(graw, "threads_per_warp", "grid", default=32),
    )

    structures: dict[str, DataStructureRef] = {}
    for i, sraw in enumerate(_get(raw, "data_structures", "top level", required=True)):
        path = f"data_structures[{i}]"
        name = _get(sraw, "name", path, required=True)
        if name in structures:
            raise ConfigError(f"{path}.name: duplicate structure {name!r}")
        structures[name] = DataStructureRef(
            name=name,
            base_addr=_addr(_get(sraw, "base_addr", path, required=True), f"{path}.base_addr"),
            elem_size=_get(sraw, "elem_size", path, required=True),
            dims=_triple(_get(sraw, "dims", path, required=True), f"{path}.dims"),
        )

    descs = []
    for i, draw in enumerate(_get(raw, "descriptors", "top level", required=True)):
        path = f"descriptors[{i}]"
        ref = _get(draw, "data", path, required=True)
        if ref not in structures:
            raise ConfigError(f"{path}.data: unknown data structure {ref!r}")
        ltype = _enum(LocalityType, _get(draw, "locality_type", path, required=True), f"{path}.locality_type")
        sharing_raw = _get(draw, "sharing", path)
        sharing = _enum(SharingType, sharing_raw, f"{path}.sharing") if sharing_raw else None
        descs.append(
            LocalityDescriptor(
                data=structures[ref],
                ltype=ltype,
                tiles=TileSemantics(
                    dtile_dims=_triple(_get(draw, "dtile_dims", path, required=True), f"{path}.dtile_dims"),
                    ctile_dims=_triple(_get(draw, "ctile_dims", path, required=True), f"{path}.ctile_dims"),
                    compute_data_map=_triple(
                        _get(draw, "compute_data_map", path, default=[1, 2, 3]),
                        f"{path}.compute_data_map",
                    ),
                ),
                pattern=_pattern(_get(draw, "pattern", path, required=True), f"{path}.pattern"),
                sharing=sharing,
                priority=_get(draw, "priority", path, default=0),
            )
        )
    if not descs:
        raise ConfigError("descriptors: at least one descriptor is required")

    policy = _get(raw, "policy", "top level", default="ldesc")
    if policy not in POLICY_NAMES:
        raise ConfigError(f"policy: {policy!r} is not one of {list(POLICY_NAMES)}")
    placement = _get(raw, "placement", "top level", default="ldesc")
    if placement not in PLACEMENT_NAMES:
        raise ConfigError(
            f"placement: {placement!r} is not one of {list(PLACEMENT_NAMES)}"
        )

    try:
        ordered = validate_descriptor_set(descs, grid)
    except LdescError as exc:
        raise ConfigError(f"descriptors: {exc}") from None

    return ExperimentConfig(
        system=system,
        grid=grid,
        descs=ordered,
        policy=policy,
        placement=placement,
        seed=_get(raw, "seed", "top level", default=1),
    )


def load_config(path: str | Path, preset_override: str | None = None) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_config(raw, preset_override)


def build_policies(name: str, descs: list[LocalityDescriptor]) -> PolicySet:
    """Cache/prefetch policy set for a named configuration."""
    if name in ("rr", "bcs"):
        return normal_policies(descs)
    full = select_policies(descs)
    if name == "ldesc":
        return full
    out = {}
    for d, p in full.by_desc.items():
        if name == "ldesc-sched":
            out[d] = DescriptorPolicy(p.schedule_with_clusters, InsertionClass.NORMAL, PrefetchKind.NONE)
        elif name == "ldesc-cache":
            out[d] = DescriptorPolicy(False, p.insertion, PrefetchKind.NONE)
        elif name == "ldesc-pref":
            out[d] = DescriptorPolicy(False, InsertionClass.NORMAL, p.prefetch)
        else:
            raise ConfigError(f"unknown policy {name!r}")
    return PolicySet(out)


def _cluster_schedule(cfg: ExperimentConfig, policies: PolicySet) -> Schedule:
    if not policies.wants_clusters():
        return baseline_round_robin(cfg.grid, cfg.system.sm_count)
    cls = form_clusters(cfg.descs, cfg.grid, cfg.system.sm_count)
    return assign_clusters(cls, cfg.grid, cfg.system.sm_count)


def compose(cfg: ExperimentConfig):
    """Build (workload, policies, schedule, placement) for one experiment."""
    policies = build_policies(cfg.policy, cfg.descs)
    workload = Workload(cfg.grid, cfg.descs, cfg.seed)
    system = cfg.system
    uses_clusters = cfg.policy in ("ldesc", "ldesc-sched")

    if system.zone_count == 1:
        if cfg.policy == "bcs":
            schedule = baseline_bcs(cfg.grid, system.sm_count)
        elif uses_clusters:
            schedule = _cluster_schedule(cfg, policies)
        else:
            schedule = baseline_round_robin(cfg.grid, system.sm_count)
        return workload, policies, schedule, None

    if cfg.placement == "ldesc":
        plan = place_and_partition(cfg.descs, cfg.grid, system.zone_count)
        if uses_clusters and policies.wants_clusters():
            sm_per_zone = system.sm_count // system.zone_count
            cls = form_clusters(cfg.descs, cfg.grid, sm_per_zone)
            schedule = assign_clusters_by_zone(
                cls, cfg.grid, plan.cta_partition, system.sm_count, system.zone_count
            )
        elif cfg.policy == "bcs":
            schedule = baseline_bcs(cfg.grid, system.sm_count)
        else:
            schedule = baseline_round_robin(cfg.grid, system.sm_count)
        return workload, policies, schedule, plan

    if cfg.placement == "xor":
        placement = xor_hash(system.zone_count)
        if cfg.policy == "bcs":
            schedule = baseline_bcs(cfg.grid, system.sm_count)
        elif uses_clusters:
            schedule = _cluster_schedule(cfg, policies)
        else:
            schedule = baseline_round_robin(cfg.grid, system.sm_count)
        return workload, policies, schedule, placement

    # first_touch prescribes its own distributed contiguous schedule; pages
    # are placed in-simulation at the zone of their first toucher.
    schedule = distributed_schedule(cfg.grid, system.zone_count, system.sm_count)
    return workload, policies, schedule, first_touch(system.zone_count)


def run_experiment(
    cfg: ExperimentConfig,
    trace_sink: list[AccessEvent] | None = None,
    trace_in: list[AccessEvent] | None = None,
) -> SimMetrics:
    workload, policies, schedule, placement = compose(cfg)
    return simulate(
        workload,
        cfg.system,
        schedule,
        placement=placement,
        policies=policies,
        trace_sink=trace_sink,
        trace_in=trace_in,
    )


def apply_axis(cfg: ExperimentConfig, axis: str, value: int) -> ExperimentConfig:
    """New config with one sweep axis changed."""
    if axis == "seed":
        return dataclasses.replace(cfg, seed=value)
    system = cfg.system
    if axis == "sm_count":
        system = dataclasses.replace(system, sm_count=value)
    elif axis == "zone_count":
        system = dataclasses.replace(system, zone_count=value)
    elif axis == "l1_capacity":
        system = dataclasses.replace(
            system, l1=dataclasses.replace(system.l1, capacity=value)
        )
    elif axis == "pin_reset_period":
        system = dataclasses.replace(
            system, l1=dataclasses.replace(system.l1, pin_reset_period=value)
        )
    else:
        raise ConfigError(f"axis: {axis!r} is not one of {list(SWEEP_AXES)}")
    if system.sm_count % system.zone_count != 0:
        raise ConfigError(
            f"axis {axis}={value}: {system.sm_count} SMs do not divide into "
            f"{system.zone_count} zones"
        )
    return dataclasses.replace(cfg, system=system)
