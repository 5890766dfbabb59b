"""Reconfiguration management.

Turns a reconfiguration request into an executable plan in four stages:
classify what changed (request analysis), decide per component type whether
the change is safe (consistency rules), compute the minimal set of
components to barricade (dependency analysis), and run the ordered steps
against the engine (plan execution).

Safety is decided before anything is touched: one unsafe component rejects
the whole request.  Barriers go up on the whole affected set at once
(clients first), quiescence is awaited clients-first, swaps happen only
after every affected container is quiescent and re-verify closure at the
instant they apply, and barriers come down providers first — together with
the engine's closed-barrier re-admission rule this is what makes the
transaction-exclusivity guarantee hold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace as dc_replace
from enum import Enum
from typing import Callable, Optional

from . import engine as rt
from .depgraph import (
    ReconfigurationWindow,
    StaticDependencyGraph,
    affected_set,
    build_runtime_graph,
    build_static_graph,
)
from .errors import (
    EngineFault,
    ParseError,
    Rejection,
    SnapshotStale,
    UnknownComponent,
    ValidationError,
)
from .model import (
    Access,
    ApplicationConfiguration,
    ChangeKind,
    ComponentDescriptor,
    ComponentKind,
    CompositeComponent,
    ConsistencyFinding,
    ConsistencyReport,
    check_composition,
    diff_versions,
    dominant_change,
    parse_component,
)
from .snapshot import RuntimeSnapshot


class Verdict(str, Enum):
    SAFE = "Safe"
    SAFE_WITH_PAUSE = "SafeWithPause"
    SAFE_WITH_MIGRATION = "SafeWithMigration"
    UNSAFE = "Unsafe"


class Reason(str, Enum):
    HAS_CONVERSATIONAL_STATE = "HasConversationalState"
    UNCHANGED_REMOTE_CLIENT_REFS = "UnchangedRemoteClientRefs"
    SCHEMA_CHANGE_NEEDS_MIGRATION = "SchemaChangeNeedsMigration"
    NO_CLIENT_VISIBLE_IDENTITY = "NoClientVisibleIdentity"
    LOCAL_ONLY = "LocalOnly"
    STATELESS_INTERCHANGEABLE = "StatelessInterchangeable"


@dataclass(frozen=True)
class SafetyVerdict:
    component: str
    verdict: Verdict
    reasons: tuple[Reason, ...]

    def __post_init__(self) -> None:
        if self.verdict is Verdict.UNSAFE and not self.reasons:
            raise ValidationError("unsafe verdict requires at least one reason")

    def to_json(self) -> dict:
        return {
            "component": self.component,
            "verdict": self.verdict.value,
            "reasons": [r.value for r in self.reasons],
        }


class Granularity(str, Enum):
    SINGLE_COMPONENT = "SingleComponent"
    SUBSYSTEM = "Subsystem"
    ENTIRE_SYSTEM = "EntireSystem"


@dataclass(frozen=True)
class TargetChange:
    component: str
    descriptor: Optional[ComponentDescriptor]  # None: redeploy the same version in place


@dataclass(frozen=True)
class QosChange:
    component: str
    pool_size: int


@dataclass(frozen=True)
class EntityMigration:
    component: str
    shadow_store: str
    column_mapping: tuple[tuple[str, str], ...]

    def mapping(self) -> dict[str, str]:
        return dict(self.column_mapping)


@dataclass(frozen=True)
class ReconfigurationRequest:
    id: str
    targets: tuple[TargetChange, ...]
    qos_changes: tuple[QosChange, ...] = ()
    entity_migration: tuple[EntityMigration, ...] = ()
    requested_at: int = 0

    def __post_init__(self) -> None:
        if not self.targets and not self.qos_changes:
            raise ValidationError("request needs targets or qos_changes")

    def migration_for(self, component: str) -> Optional[EntityMigration]:
        for m in self.entity_migration:
            if m.component == component:
                return m
        return None


@dataclass(frozen=True)
class AnalysisResult:
    per_target: tuple[tuple[str, ChangeKind], ...]
    overall: ChangeKind
    granularity: Granularity

    def kind_of(self, component: str) -> ChangeKind:
        for name, kind in self.per_target:
            if name == component:
                return kind
        raise UnknownComponent(component)


# Plan steps
ACTIVATE_BARRIER = "ActivateBarrier"
AWAIT_QUIESCENCE = "AwaitQuiescence"
PAUSE_QUEUE = "PauseQueue"
SYNC_SHADOW_STORE = "SyncShadowStore"
SWAP = "Swap"
SET_POOL_SIZE = "SetPoolSize"
RESUME_QUEUE = "ResumeQueue"
RELEASE_BARRIER = "ReleaseBarrier"
POST_CHECK = "PostCheck"


@dataclass(frozen=True)
class PlanStep:
    kind: str
    component: Optional[str] = None
    queue: Optional[str] = None
    store: Optional[str] = None
    pool_size: Optional[int] = None

    def to_json(self) -> dict:
        doc = {"kind": self.kind}
        for key in ("component", "queue", "store", "pool_size"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value
        return doc


@dataclass(frozen=True)
class CostModel:
    """Per-step time costs used both to estimate the window and to run steps."""

    swap: int = 10
    sync: int = 5
    other: int = 1


@dataclass(frozen=True)
class ReconfigurationPlan:
    request: ReconfigurationRequest
    window: ReconfigurationWindow
    affected: frozenset[str]
    steps: tuple[PlanStep, ...]
    new_descriptors: tuple[tuple[str, ComponentDescriptor], ...]
    verdicts: tuple[SafetyVerdict, ...]
    analysis: AnalysisResult

    def descriptor_for(self, component: str) -> ComponentDescriptor:
        for name, descriptor in self.new_descriptors:
            if name == component:
                return descriptor
        raise UnknownComponent(component)

    def to_json(self) -> dict:
        return {
            "request": self.request.id,
            "window": {
                "start": self.window.start,
                "estimated_duration": self.window.estimated_duration,
            },
            "affected": sorted(self.affected),
            "steps": [s.to_json() for s in self.steps],
            "verdicts": [v.to_json() for v in self.verdicts],
        }


@dataclass(frozen=True)
class ReconfigurationReport:
    request_id: str
    outcome: str  # Completed | Rejected | DrainTimeout
    downtime: dict[str, int] = field(default_factory=dict)
    held_count: int = 0
    held_max_wait: int = 0
    verdicts: tuple[SafetyVerdict, ...] = ()
    findings: tuple[ConsistencyFinding, ...] = ()
    affected: frozenset[str] = frozenset()
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "request": self.request_id,
            "outcome": self.outcome,
            "downtime": dict(sorted(self.downtime.items())),
            "held_invocations": {"count": self.held_count, "max_wait": self.held_max_wait},
            "verdicts": [v.to_json() for v in self.verdicts],
            "findings": [
                {"kind": f.kind, "subject": f.subject, "detail": f.detail} for f in self.findings
            ],
            "affected": sorted(self.affected),
            "detail": self.detail,
        }


# ---------------------------------------------------------------------------
# Request analysis
# ---------------------------------------------------------------------------


def _parent_map(root: CompositeComponent) -> dict[str, str]:
    parents: dict[str, str] = {}

    def walk(node: CompositeComponent) -> None:
        for child in node.children:
            parents[child.name] = node.name
            if isinstance(child, CompositeComponent):
                walk(child)

    walk(root)
    return parents


def resolved_target_descriptor(
    config: ApplicationConfiguration, target: TargetChange
) -> ComponentDescriptor:
    """The descriptor a target will run after the swap; in-place redeploys bump the version."""
    old = config.components().get(target.component)
    if old is None:
        raise UnknownComponent(f"target {target.component!r} is not deployed")
    if target.descriptor is None:
        return dc_replace(old, version=old.version + 1)
    return target.descriptor


def analyse(request: ReconfigurationRequest, config: ApplicationConfiguration) -> AnalysisResult:
    """Per-target change kinds plus the granularity the request addresses."""
    components = config.components()
    qos_components = {q.component for q in request.qos_changes}
    per_target: list[tuple[str, ChangeKind]] = []
    for target in request.targets:
        old = components.get(target.component)
        if old is None:
            raise UnknownComponent(f"target {target.component!r} is not deployed")
        new = resolved_target_descriptor(config, target)
        per_target.append(
            (target.component, diff_versions(old, new, qos_change=target.component in qos_components))
        )
    for q in request.qos_changes:
        if q.component not in components:
            raise UnknownComponent(f"qos change names unknown component {q.component!r}")
        if q.component not in {name for name, _ in per_target}:
            per_target.append((q.component, ChangeKind.NON_FUNCTIONAL))

    names = [name for name, _ in per_target]
    if len(names) == 1:
        granularity = Granularity.SINGLE_COMPONENT
    else:
        parents = _parent_map(config.root)
        parent_set = {parents.get(name, config.root.name) for name in names}
        if len(parent_set) == 1 and parent_set != {config.root.name}:
            granularity = Granularity.SUBSYSTEM
        else:
            granularity = Granularity.ENTIRE_SYSTEM
    return AnalysisResult(
        per_target=tuple(per_target),
        overall=dominant_change(kind for _, kind in per_target),
        granularity=granularity,
    )


# ---------------------------------------------------------------------------
# Safety classification (the component-type rules)
# ---------------------------------------------------------------------------


def classify_structural_safety(
    component: ComponentDescriptor,
    change: ChangeKind,
    refs: frozenset[str] | set[str],
    migration_available: bool,
    state_shape_changed: bool = False,
) -> SafetyVerdict:
    """Decide whether a change to this component can be applied safely.

    The rule table, by component kind:

    * message-driven: always swappable behind a paused queue — no client
      holds a visible identity;
    * stateful session: structural change never safe (conversational state
      survives only a shape-identical transfer);
    * stateless session: structural change safe exactly when no unchanged
      remote client holds a reference;
    * entity: structural change safe when no unchanged remote client holds a
      reference and a shadow-store migration is available;
    * functional and QoS changes are safe for every kind (stateful
      additionally requires the state shape untouched).

    ``refs`` must already be filtered to *unchanged* remote clients: holders
    that are themselves replaced by the same request do not block.
    """
    refs = frozenset(refs)
    local_only = all(acc is Access.LOCAL for _, acc in component.access) or not component.access

    if component.kind is ComponentKind.MESSAGE_DRIVEN:
        return SafetyVerdict(
            component.name, Verdict.SAFE_WITH_PAUSE, (Reason.NO_CLIENT_VISIBLE_IDENTITY,)
        )

    if change is ChangeKind.STRUCTURAL:
        if component.kind is ComponentKind.STATEFUL_SESSION:
            return SafetyVerdict(
                component.name, Verdict.UNSAFE, (Reason.HAS_CONVERSATIONAL_STATE,)
            )
        if component.kind is ComponentKind.STATELESS_SESSION:
            if refs:
                return SafetyVerdict(
                    component.name, Verdict.UNSAFE, (Reason.UNCHANGED_REMOTE_CLIENT_REFS,)
                )
            reasons = [Reason.STATELESS_INTERCHANGEABLE]
            if local_only:
                reasons.append(Reason.LOCAL_ONLY)
            return SafetyVerdict(component.name, Verdict.SAFE, tuple(reasons))
        # entity
        if refs:
            return SafetyVerdict(
                component.name, Verdict.UNSAFE, (Reason.UNCHANGED_REMOTE_CLIENT_REFS,)
            )
        if migration_available:
            return SafetyVerdict(
                component.name,
                Verdict.SAFE_WITH_MIGRATION,
                (Reason.SCHEMA_CHANGE_NEEDS_MIGRATION,),
            )
        return SafetyVerdict(
            component.name, Verdict.UNSAFE, (Reason.SCHEMA_CHANGE_NEEDS_MIGRATION,)
        )

    # functional or non-functional change
    if component.kind is ComponentKind.STATEFUL_SESSION and state_shape_changed:
        return SafetyVerdict(component.name, Verdict.UNSAFE, (Reason.HAS_CONVERSATIONAL_STATE,))
    reasons = []
    if component.kind is ComponentKind.STATELESS_SESSION:
        reasons.append(Reason.STATELESS_INTERCHANGEABLE)
    if local_only:
        reasons.append(Reason.LOCAL_ONLY)
    return SafetyVerdict(component.name, Verdict.SAFE, tuple(reasons))


def unchanged_remote_refs(
    component: str,
    config: ApplicationConfiguration,
    snapshot: RuntimeSnapshot,
    changed: frozenset[str] | set[str] = frozenset(),
) -> frozenset[str]:
    """Reference holders that would block a structural change of ``component``.

    Unites remote client sessions holding handles (home-interface tracking)
    with components wired to it over a remote-access interface, then drops
    holders that are themselves changed by the current request.  Sessions
    are never "changed": only component clients can be excluded this way.
    """
    holders: set[str] = set(snapshot.refs_for(component))
    descriptor = config.components().get(component)
    if descriptor is None:
        raise UnknownComponent(component)
    for wire in config.wiring():
        if wire.provider != component:
            continue
        if descriptor.access_of(wire.interface) is Access.REMOTE:
            holders.add(wire.requirer)
    return frozenset(holders - set(changed))


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


def _client_first_order(static: StaticDependencyGraph, members: frozenset[str]) -> list[str]:
    """Members ordered so that users come before their providers.

    Kahn's algorithm over the uses-edges restricted to ``members``; ties and
    cycles are broken by name so plans are reproducible.
    """
    incoming: dict[str, set[str]] = {m: set() for m in members}
    outgoing: dict[str, set[str]] = {m: set() for m in members}
    for requirer, provider, _ in static.edges:
        if requirer in members and provider in members and requirer != provider:
            incoming[provider].add(requirer)
            outgoing[requirer].add(provider)
    order: list[str] = []
    remaining = set(members)
    while remaining:
        roots = sorted(m for m in remaining if not (incoming[m] & remaining))
        pick = roots[0] if roots else sorted(remaining)[0]  # cycle: fall back to name order
        order.append(pick)
        remaining.discard(pick)
    return order


def estimate_window(
    request: ReconfigurationRequest,
    config: ApplicationConfiguration,
    static: StaticDependencyGraph,
    costs: CostModel,
) -> ReconfigurationWindow:
    """Conservative completion estimate from the static ancestor closure.

    The affected set depends on the window and the window on the plan's
    steps; the circle is cut by costing the largest plan that could emerge
    (barriers on the whole client closure).  Over-estimating only admits
    more edges, never fewer, so pruning stays safe.
    """
    swap_targets = {t.component for t in request.targets}
    closure = static.ancestors_of(frozenset(swap_targets)) | swap_targets
    components = config.components()
    md_queues = {
        components[c].queue
        for c in swap_targets
        if c in components and components[c].kind is ComponentKind.MESSAGE_DRIVEN
    }
    duration = (
        3 * costs.other * len(closure)  # activate + await + release
        + 2 * costs.other * len(md_queues)  # pause + resume
        + costs.sync * len(request.entity_migration)
        + costs.swap * len(swap_targets)
        + costs.other * len(request.qos_changes)
        + costs.other  # post check
    )
    return ReconfigurationWindow(request.requested_at, max(1, duration))


def build_plan(
    request: ReconfigurationRequest,
    config: ApplicationConfiguration,
    snapshot: RuntimeSnapshot,
    blocking: str = "minimal",
    costs: CostModel = CostModel(),
) -> ReconfigurationPlan:
    """Analyse, classify, and order the steps for a request.

    Raises Rejection (carrying every verdict) when any component is unsafe
    to change, and SnapshotStale when the snapshot is not current.
    """
    if snapshot.time != request.requested_at:
        raise SnapshotStale(
            f"snapshot at {snapshot.time}, request at {request.requested_at}"
        )
    if blocking not in ("minimal", "whole-app"):
        raise ValidationError(f"unknown blocking mode {blocking!r}")
    analysis = analyse(request, config)
    components = config.components()
    swap_targets = {t.component for t in request.targets}

    new_descriptors: list[tuple[str, ComponentDescriptor]] = []
    verdicts: list[SafetyVerdict] = []
    for target in sorted(request.targets, key=lambda t: t.component):
        old = components[target.component]
        new = resolved_target_descriptor(config, target)
        new_descriptors.append((target.component, new))
        refs = unchanged_remote_refs(target.component, config, snapshot, changed=swap_targets)
        verdicts.append(
            classify_structural_safety(
                old,
                analysis.kind_of(target.component),
                refs,
                migration_available=request.migration_for(target.component) is not None,
                state_shape_changed=tuple(old.state_fields) != tuple(new.state_fields),
            )
        )
    unsafe = [v for v in verdicts if v.verdict is Verdict.UNSAFE]
    if unsafe:
        raise Rejection(
            "; ".join(
                f"{v.component}: {','.join(r.value for r in v.reasons)}" for v in unsafe
            ),
            verdicts,
        )

    static = build_static_graph(config)
    window = estimate_window(request, config, static, costs)

    steps: list[PlanStep] = []
    if swap_targets:
        if blocking == "whole-app":
            affected = frozenset(components)
        else:
            graph = build_runtime_graph(snapshot, window)
            affected = affected_set(graph, static, frozenset(swap_targets))
        order = _client_first_order(static, affected)
        # all barriers go up at once (clients first) so minimal blocking holds
        # a subset of what whole-app blocking would from the same instant;
        # quiescence is then awaited clients-first, and the closed-barrier
        # re-admission rule keeps upstream drains from wedging on a provider
        # that closed while momentarily idle
        for name in order:
            steps.append(PlanStep(ACTIVATE_BARRIER, component=name))
        for name in order:
            steps.append(PlanStep(AWAIT_QUIESCENCE, component=name))
        md_targets = [
            c for c in sorted(swap_targets) if components[c].kind is ComponentKind.MESSAGE_DRIVEN
        ]
        for name in md_targets:
            steps.append(PlanStep(PAUSE_QUEUE, component=name, queue=components[name].queue))
        for migration in sorted(request.entity_migration, key=lambda m: m.component):
            if migration.component in swap_targets:
                steps.append(
                    PlanStep(SYNC_SHADOW_STORE, component=migration.component, store=migration.shadow_store)
                )
        for name in reversed(order):  # providers first
            if name in swap_targets:
                steps.append(PlanStep(SWAP, component=name))
        for qos in sorted(request.qos_changes, key=lambda q: q.component):
            steps.append(PlanStep(SET_POOL_SIZE, component=qos.component, pool_size=qos.pool_size))
        for name in md_targets:
            steps.append(PlanStep(RESUME_QUEUE, component=name, queue=components[name].queue))
        for name in reversed(order):  # providers first
            steps.append(PlanStep(RELEASE_BARRIER, component=name))
    else:
        affected = frozenset()
        for qos in sorted(request.qos_changes, key=lambda q: q.component):
            steps.append(PlanStep(SET_POOL_SIZE, component=qos.component, pool_size=qos.pool_size))
    steps.append(PlanStep(POST_CHECK))

    plan = ReconfigurationPlan(
        request=request,
        window=window,
        affected=affected,
        steps=tuple(steps),
        new_descriptors=tuple(new_descriptors),
        verdicts=tuple(verdicts),
        analysis=analysis,
    )
    problems = plan_ordering_problems(plan)
    if problems:
        raise EngineFault(f"generated plan violates ordering: {problems[0]}")
    return plan


def plan_ordering_problems(plan: ReconfigurationPlan) -> list[str]:
    """Violations of the plan's structural ordering invariants (empty = well-formed)."""
    problems: list[str] = []
    index: dict[tuple[str, Optional[str]], int] = {}
    for i, step in enumerate(plan.steps):
        index[(step.kind, step.component)] = i

    def at(kind: str, component: Optional[str]) -> Optional[int]:
        return index.get((kind, component))

    swapped = [s.component for s in plan.steps if s.kind == SWAP]
    for c in swapped:
        positions = [at(ACTIVATE_BARRIER, c), at(AWAIT_QUIESCENCE, c), at(SWAP, c), at(RELEASE_BARRIER, c)]
        if any(p is None for p in positions):
            problems.append(f"{c}: missing barrier step around swap")
        elif not (positions[0] < positions[1] < positions[2] < positions[3]):
            problems.append(f"{c}: barrier steps out of order")
    for step in plan.steps:
        if step.kind == PAUSE_QUEUE and step.component in swapped:
            if not (index[(PAUSE_QUEUE, step.component)] < index[(SWAP, step.component)]):
                problems.append(f"{step.component}: queue paused after swap")
            resume = at(RESUME_QUEUE, step.component)
            if resume is None or resume < index[(SWAP, step.component)]:
                problems.append(f"{step.component}: queue not resumed after swap")
        if step.kind == SYNC_SHADOW_STORE:
            swap_pos = at(SWAP, step.component)
            if swap_pos is not None and index[(SYNC_SHADOW_STORE, step.component)] > swap_pos:
                problems.append(f"{step.component}: store synced after swap")
    if not plan.steps or plan.steps[-1].kind != POST_CHECK:
        problems.append("last step is not PostCheck")
    return problems


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


class PlanExecutor:
    """Drives plan steps through the engine's event timeline.

    Steps run at barrier priority.  AwaitQuiescence suspends until the
    container reports quiescence or the drain timeout fires; a timeout
    releases every activated barrier and abandons the plan with no swap
    applied (the configuration is untouched, so rollback is trivial).
    """

    def __init__(self, engine: rt.Engine, plan: ReconfigurationPlan, costs: CostModel = CostModel()):
        self.engine = engine
        self.plan = plan
        self.costs = costs
        self.idx = 0
        self.done = False
        self.outcome: Optional[str] = None
        self.activated_at: dict[str, int] = {}
        self.released_at: dict[str, int] = {}
        self.findings: list[ConsistencyFinding] = []
        self.detail = ""

    def start(self) -> None:
        self.engine._at(self.engine.clock, rt.PRIO_BARRIER, self._proceed)

    # -- step machine --------------------------------------------------

    def _proceed(self) -> None:
        engine = self.engine
        while not self.done and self.idx < len(self.plan.steps):
            step = self.plan.steps[self.idx]
            if step.kind == ACTIVATE_BARRIER:
                engine.activate_barrier(step.component)
                self.activated_at[step.component] = engine.clock
                deadline = engine.clock + engine.drain_timeout
                engine._at(deadline, rt.PRIO_BARRIER, lambda c=step.component: self._check_timeout(c))
                self.idx += 1
            elif step.kind == AWAIT_QUIESCENCE:
                container = engine.containers[step.component]
                if container.barrier_mode == rt.BARRIER_CLOSED:
                    self.idx += 1
                    continue
                container.quiescence_waiters.append(self._proceed_after_quiescence)
                return
            elif step.kind == PAUSE_QUEUE:
                engine.pause_queue(step.queue)
                self.idx += 1
            elif step.kind == SYNC_SHADOW_STORE:
                self._run_timed(self.costs.sync, lambda s=step: self._do_sync(s))
                return
            elif step.kind == SWAP:
                self._run_timed(self.costs.swap, lambda s=step: self._do_swap(s))
                return
            elif step.kind == SET_POOL_SIZE:
                engine.set_pool_size(step.component, step.pool_size)
                self.idx += 1
            elif step.kind == RESUME_QUEUE:
                engine.resume_queue(step.queue)
                self.idx += 1
            elif step.kind == RELEASE_BARRIER:
                self._collect_orphans(step.component)
                engine.release_barrier(step.component)
                self.released_at[step.component] = engine.clock
                self.idx += 1
            elif step.kind == POST_CHECK:
                report = check_composition(engine.config)
                self.findings.extend(report.findings)
                self.idx += 1
                self._finish("Completed" if not self.findings else "Rejected")
            else:
                raise EngineFault(f"unknown plan step {step.kind!r}")
        if not self.done and self.idx >= len(self.plan.steps):
            self._finish(self.outcome or "Completed")

    def _proceed_after_quiescence(self) -> None:
        if self.done:
            return
        self.idx += 1
        self._proceed()

    def _run_timed(self, cost: int, action: Callable[[], bool]) -> None:
        def resume() -> None:
            if self.done:
                return
            if action():  # False: the action arranged its own continuation
                self.idx += 1
                self._proceed()

        self.engine._at(self.engine.clock + cost, rt.PRIO_BARRIER, resume)

    def _do_sync(self, step: PlanStep) -> bool:
        migration = self.plan.request.migration_for(step.component)
        self.engine.sync_shadow_store(step.component, migration.shadow_store, migration.mapping())
        return True

    def _do_swap(self, step: PlanStep) -> bool:
        container = self.engine.containers[step.component]
        if container.barrier_mode != rt.BARRIER_CLOSED:
            # a late joining transaction re-opened the drain; swap after it ends
            def retry() -> None:
                if self.done:
                    return
                if self._do_swap(step):
                    self.idx += 1
                    self._proceed()

            container.quiescence_waiters.append(retry)
            return False
        migration = self.plan.request.migration_for(step.component)
        self.engine.swap_component(
            step.component,
            self.plan.descriptor_for(step.component),
            shadow_store=migration.shadow_store if migration else None,
            reopen=False,
        )
        return True

    def _collect_orphans(self, component: str) -> None:
        container = self.engine.containers[component]
        descriptor = container.descriptor
        for inv in container.barrier_held:
            if not descriptor.provides_operation(inv.interface, inv.operation):
                self.findings.append(
                    ConsistencyFinding(
                        "orphaned-held-call",
                        component,
                        f"held invocation {inv.id} targets removed operation {inv.operation!r}",
                    )
                )

    def _check_timeout(self, component: str) -> None:
        if self.done:
            return
        container = self.engine.containers.get(component)
        if container is None or container.barrier_mode != rt.BARRIER_DRAINING:
            return
        # abandon: release every barrier still up, in provider-first order
        self.detail = f"drain timeout waiting for {component!r}"
        for step in reversed(self.plan.steps):
            if step.kind == ACTIVATE_BARRIER and step.component in self.activated_at:
                if step.component not in self.released_at:
                    self.engine.release_barrier(step.component)
                    self.released_at[step.component] = self.engine.clock
        self._finish("DrainTimeout")

    def _finish(self, outcome: str) -> None:
        self.done = True
        self.outcome = outcome

    # -- reporting -----------------------------------------------------

    def report(self) -> ReconfigurationReport:
        if not self.done:
            raise EngineFault("plan execution has not finished")
        from .metrics import compute_metrics

        metrics = compute_metrics(self.engine.log.events)
        downtime = {}
        for component, t0 in self.activated_at.items():
            t1 = self.released_at.get(component, self.engine.clock)
            downtime[component] = t1 - t0
        return ReconfigurationReport(
            request_id=self.plan.request.id,
            outcome=self.outcome,
            downtime=downtime,
            held_count=metrics.held_count,
            held_max_wait=metrics.held_max_wait,
            verdicts=self.plan.verdicts,
            findings=tuple(self.findings),
            affected=self.plan.affected,
            detail=self.detail,
        )


def execute_plan(
    plan: ReconfigurationPlan, engine: rt.Engine, costs: CostModel = CostModel()
) -> ReconfigurationReport:
    """Run the plan to completion on an engine and report the outcome."""
    executor = PlanExecutor(engine, plan, costs)
    executor.start()
    engine.run(stop_when=lambda: executor.done)
    if not executor.done:
        raise EngineFault("plan did not finish: engine ran out of events")
    return executor.report()


def post_check(
    config: ApplicationConfiguration, orphans: tuple[ConsistencyFinding, ...] = ()
) -> ConsistencyReport:
    """Composition check after a reconfiguration, plus orphaned-held-call findings."""
    report = check_composition(config)
    return ConsistencyReport(report.findings + tuple(orphans))


@dataclass(frozen=True)
class RedeploymentRun:
    """Outcome of running a scenario with a request injected mid-flight."""

    log: rt.EventLog
    engine: rt.Engine
    report: Optional[ReconfigurationReport]
    rejection: Optional[Rejection]


def run_scenario_with_request(
    config: ApplicationConfiguration,
    scenario,
    request: ReconfigurationRequest,
    until: int,
    blocking: str = "minimal",
    costs: CostModel = CostModel(),
    drain_timeout: int = 1000,
) -> RedeploymentRun:
    """Run the workload and inject the reconfiguration at its requested time.

    The plan is built from a snapshot taken exactly at ``requested_at`` and
    executed on the live engine; the run then continues to the horizon (or
    past it if plan steps are still pending, so reports are always final).
    """
    engine = rt.Engine(config, seed=scenario.seed, drain_timeout=drain_timeout)
    engine.load_scenario(scenario)
    state: dict = {"executor": None, "rejection": None}

    def inject() -> None:
        snapshot = engine.snapshot()
        try:
            plan = build_plan(request, engine.config, snapshot, blocking=blocking, costs=costs)
        except Rejection as exc:
            state["rejection"] = exc
            return
        executor = PlanExecutor(engine, plan, costs)
        state["executor"] = executor
        executor.start()

    engine._at(request.requested_at, rt.PRIO_BARRIER, inject)
    engine.run(until=until)
    executor = state["executor"]
    if executor is not None and not executor.done:
        engine.run(stop_when=lambda: executor.done)  # let pending steps settle
        if not executor.done:
            raise EngineFault("plan did not finish: engine ran out of events")
    report = executor.report() if executor is not None else None
    return RedeploymentRun(engine.log, engine, report, state["rejection"])


# ---------------------------------------------------------------------------
# Request documents
# ---------------------------------------------------------------------------


def parse_request(text: str, file_loader: Optional[Callable[[str], str]] = None) -> ReconfigurationRequest:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid request JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("request document must be a JSON object")
    unknown = set(doc) - {"id", "targets", "qos_changes", "entity_migration", "requested_at"}
    if unknown:
        raise ParseError(f"unknown keys in request document: {sorted(unknown)}")
    targets = []
    for tdoc in doc.get("targets", []):
        t_unknown = set(tdoc) - {"component", "descriptor", "descriptor_file"}
        if t_unknown:
            raise ParseError(f"unknown keys in target document: {sorted(t_unknown)}")
        descriptor = None
        if tdoc.get("descriptor") is not None:
            descriptor = parse_component(tdoc["descriptor"])
        elif tdoc.get("descriptor_file"):
            if file_loader is None:
                raise ParseError("descriptor_file given but no file loader available")
            descriptor = parse_component(json.loads(file_loader(tdoc["descriptor_file"])))
        targets.append(TargetChange(tdoc["component"], descriptor))
    qos = []
    for qdoc in doc.get("qos_changes", []):
        q_unknown = set(qdoc) - {"component", "pool_size"}
        if q_unknown:
            raise ParseError(f"unknown keys in qos document: {sorted(q_unknown)}")
        qos.append(QosChange(qdoc["component"], int(qdoc["pool_size"])))
    migrations = []
    for mdoc in doc.get("entity_migration", []):
        m_unknown = set(mdoc) - {"component", "shadow_store", "column_mapping"}
        if m_unknown:
            raise ParseError(f"unknown keys in migration document: {sorted(m_unknown)}")
        migrations.append(
            EntityMigration(
                mdoc["component"],
                mdoc["shadow_store"],
                tuple(sorted(mdoc.get("column_mapping", {}).items())),
            )
        )
    return ReconfigurationRequest(
        id=doc.get("id", "request"),
        targets=tuple(targets),
        qos_changes=tuple(qos),
        entity_migration=tuple(migrations),
        requested_at=int(doc.get("requested_at", 0)),
    )
