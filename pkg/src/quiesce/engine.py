"""Deterministic discrete-event runtime for container-managed components.

The engine simulates the system that gets redeployed: containers with
interceptor chains, pooled instances, transactional invocations, message
queues, simulated key-value stores, and scripted client sessions.

Determinism rules
-----------------
Time is a non-negative integer.  Events scheduled for the same instant run
in (priority class, sequence number) order; the classes are completions
first, then barrier transitions, then new dispatches.  Where a component's
effect automaton offers a choice of behaviour, the branch is drawn from a
generator seeded by the scenario seed and the invocation's *structural*
identity (client id and script position, or message index), never by
arrival order — so the behaviour of one session cannot depend on how
unrelated sessions were interleaved.

Execution model
---------------
An invocation occupies one instance for its whole duration.  Its automaton
path is walked transition by transition: taking a transition emits the call
at once (synchronously), and the transition's ``min_delay`` is local
computation after the call returns, before the next step.  The earliest
possible occurrence of a call is therefore the sum of the delays strictly
before its transition, which is exactly what the dependency pruning
assumes.  After the walk ends a final local segment tops the busy time up
to the operation's declared ``duration`` (if the gaps have not consumed it
already); an operation with no automaton simply runs for ``duration``.

Barrier semantics
-----------------
While a redeploy barrier is draining, invocations that would start a new
transaction are held in FIFO order; invocations joining a transaction that
is already active pass through, because holding them could never let the
drain finish.  A barrier that has already closed re-admits a joining call
only when its transaction already runs inside some barricaded container —
those are the transactions other drains are waiting on, and holding them
would wedge the drain behind a provider that closed while momentarily
idle.  The container falls back to draining and closes again once the
transaction completes; swaps re-verify closure at the instant they apply.
Joining calls of transactions running wholly outside the barricade are new
outside work and park at the closed barrier until release.  The clean
shutdown used by ``stop`` is different on all counts: it waits only for
running invocations (transaction attributes are ignored) and *denies* new
work instead of holding it.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .automata import AutomatonCursor, CallLabel, advance
from .errors import (
    AlreadyBarricaded,
    EngineFault,
    NotQuiescent,
    ProtocolViolation,
    ScenarioError,
    StateShapeMismatch,
    UnknownQueue,
    ValidationError,
)
from .model import (
    Access,
    ApplicationConfiguration,
    ComponentDescriptor,
    ComponentKind,
    ContainerSpec,
    InterceptorKind,
    OperationSpec,
    TxAttribute,
    Wire,
)
from .snapshot import InstanceSnapshot, RuntimeSnapshot
from .workload import (
    ClientSession,
    HomeAction,
    ScriptCall,
    WorkloadScenario,
    validate_scenario,
)

# Event kinds
INVOCATION_START = "InvocationStart"
INVOCATION_END = "InvocationEnd"
INVOCATION_HELD = "InvocationHeld"
INVOCATION_DENIED = "InvocationDenied"
TX_BEGIN = "TxBegin"
TX_COMMIT = "TxCommit"
TX_ABORT = "TxAbort"
BARRIER_ACTIVATED = "BarrierActivated"
QUIESCENCE_REACHED = "QuiescenceReached"
SWAP_APPLIED = "SwapApplied"
BARRIER_RELEASED = "BarrierReleased"
MESSAGE_ENQUEUED = "MessageEnqueued"
MESSAGE_DELIVERED = "MessageDelivered"
SESSION_INVALIDATED = "SessionInvalidated"
QUEUE_PAUSED = "QueuePaused"
QUEUE_RESUMED = "QueueResumed"
STORE_SYNCED = "StoreSynced"
POOL_SIZE_CHANGED = "PoolSizeChanged"
CLEAN_SHUTDOWN_ACTIVATED = "CleanShutdownActivated"

# Same-instant scheduling priority classes.
PRIO_COMPLETION = 0
PRIO_BARRIER = 1
PRIO_DISPATCH = 2

# After this many nested calls one execution stops exploring and takes the
# fewest-hops route to a final state; keeps cyclic automata finite.
_WALK_CAP = 64


def _toward_final(automaton, state):
    """First transition on a fewest-hops path from ``state`` to a final, or None."""
    if state in automaton.finals:
        return None
    from collections import deque

    queue = deque([(state, None)])
    seen = {state}
    while queue:
        current, first = queue.popleft()
        for t in automaton.outgoing(current):
            step = first if first is not None else t
            if t.target in automaton.finals:
                return step
            if t.target not in seen:
                seen.add(t.target)
                queue.append((t.target, step))
    return None


@dataclass(frozen=True)
class Event:
    t: int
    kind: str
    payload: dict


class EventLog:
    """Append-only, totally ordered record of everything the engine did."""

    def __init__(self) -> None:
        self.events: list[Event] = []

    def append(self, t: int, kind: str, payload: dict) -> None:
        if self.events and t < self.events[-1].t:
            raise EngineFault("event log time went backwards")
        self.events.append(Event(t, kind, dict(payload)))

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"t": e.t, "kind": e.kind, "payload": e.payload}, sort_keys=True)
            for e in self.events
        ]
        return "\n".join(lines) + ("\n" if lines else "")


class _Invocation:
    """Runtime record of one call; re-dispatched as-is when replayed from a barrier."""

    __slots__ = (
        "id",
        "caller",
        "session",
        "component",
        "interface",
        "operation",
        "ambient_tx",
        "tx",
        "started_tx",
        "submitted_at",
        "parent",
        "held_at",
    )

    def __init__(
        self,
        id: str,
        caller: str,
        session: Optional[str],
        component: str,
        interface: str,
        operation: str,
        ambient_tx: Optional[str],
        submitted_at: int,
        parent: Optional["_Execution"],
    ) -> None:
        self.id = id
        self.caller = caller
        self.session = session
        self.component = component
        self.interface = interface
        self.operation = operation
        self.ambient_tx = ambient_tx
        self.tx: Optional[str] = None
        self.started_tx = False
        self.submitted_at = submitted_at
        self.parent = parent
        self.held_at: Optional[int] = None


class _Execution:
    """An invocation bound to an instance, walking its effect automaton."""

    __slots__ = (
        "invocation",
        "instance",
        "spec",
        "cursor",
        "rng",
        "emitted",
        "delays_spent",
        "pending_gap",
        "in_flight_child",
        "started_at",
    )

    def __init__(
        self,
        invocation: _Invocation,
        instance: "_Instance",
        spec: OperationSpec,
        rng: random.Random,
        started_at: int,
    ) -> None:
        self.invocation = invocation
        self.instance = instance
        self.spec = spec
        self.cursor: Optional[AutomatonCursor] = (
            spec.effect_automaton.cursor() if spec.effect_automaton else None
        )
        self.rng = rng
        self.emitted = 0
        self.delays_spent = 0
        self.pending_gap = 0
        self.in_flight_child: Optional[_Invocation] = None
        self.started_at = started_at


class _Instance:
    __slots__ = ("key", "component", "state", "session", "current", "invocations_served")

    def __init__(self, key: str, component: str) -> None:
        self.key = key
        self.component = component
        self.state: dict[str, object] = {}
        self.session: Optional[str] = None
        self.current: Optional[_Execution] = None
        self.invocations_served = 0


BARRIER_OPEN = "Open"
BARRIER_DRAINING = "Draining"
BARRIER_CLOSED = "Closed"


class _Container:
    def __init__(self, spec: ContainerSpec, descriptor: ComponentDescriptor) -> None:
        self.spec = spec
        self.descriptor = descriptor
        self.started = False
        self.instances: list[_Instance] = []
        self.free: list[_Instance] = []
        self.pool_wait: list[_Invocation] = []
        self.created = 0
        self.pool_size = spec.pool_size
        self.barrier_mode = BARRIER_OPEN
        self.barrier_held: list[_Invocation] = []
        self.barrier_activated_at: Optional[int] = None
        self.barrier_closed_at: Optional[int] = None
        self.clean_shutdown = False
        self.executing = 0
        self.touching_txs: set[str] = set()
        self.quiescence_waiters: list[Callable[[], None]] = []
        self.drain_waiters: list[Callable[[], None]] = []
        self.bound_store: Optional[str] = descriptor.data_store
        self.bound_queue: Optional[str] = descriptor.queue

    @property
    def name(self) -> str:
        return self.descriptor.name

    def has_interceptor(self, kind: InterceptorKind) -> bool:
        return kind in self.spec.interceptor_chain


class _Queue:
    def __init__(self, name: str) -> None:
        self.name = name
        self.items: list[tuple[int, str]] = []  # (enqueue seq, payload)
        self.paused = False
        self.enqueued = 0
        self.delivered = 0


@dataclass
class _Transaction:
    id: str
    root_invocation: str
    state: str = "Active"  # Active | Committed | Aborted
    writes: list = field(default_factory=list)  # (store, key, column, value)
    touched: set = field(default_factory=set)


class Engine:
    """One deterministic simulated runtime; drive it from a single control flow."""

    def __init__(
        self,
        config: ApplicationConfiguration,
        seed: int = 0,
        drain_timeout: int = 1000,
    ) -> None:
        self.config = config
        self.seed = seed
        self.drain_timeout = drain_timeout
        self.clock = 0
        self.log = EventLog()
        self._heap: list[tuple[int, int, int, Callable[[], None]]] = []
        self._seq = 0
        self.containers: dict[str, _Container] = {}
        self.stores: dict[str, dict[str, dict[str, str]]] = {
            name: {} for name, _ in config.data_stores
        }
        self.queues: dict[str, _Queue] = {name: _Queue(name) for name in config.queues}
        self.transactions: dict[str, _Transaction] = {}
        self.remote_refs: dict[str, set[str]] = {}
        self._invalidated_sessions: set[str] = set()
        self._client_access: dict[str, Access] = {}
        self._violation: Optional[ProtocolViolation] = None
        for spec in config.containers:
            descriptor = config.components()[spec.hosted_component]
            self.containers[spec.hosted_component] = _Container(spec, descriptor)
        self.start_all()

    # ------------------------------------------------------------------
    # Scheduling core
    # ------------------------------------------------------------------

    def _at(self, time: int, prio: int, fn: Callable[[], None]) -> None:
        if time < self.clock:
            raise EngineFault(f"cannot schedule into the past ({time} < {self.clock})")
        self._seq += 1
        heapq.heappush(self._heap, (time, prio, self._seq, fn))

    def run(
        self, until: Optional[int] = None, stop_when: Optional[Callable[[], bool]] = None
    ) -> tuple[EventLog, "Engine"]:
        """Process events in order until the horizon, a condition, or exhaustion.

        Raises the pending ProtocolViolation, if one was detected, after the
        offending event has been logged.
        """
        stopped = stop_when() if stop_when is not None else False
        while self._heap and not stopped:
            time, prio, seq, fn = self._heap[0]
            if until is not None and time > until:
                break
            heapq.heappop(self._heap)
            self.clock = time
            fn()
            if self._violation is not None:
                raise self._violation
            stopped = stop_when() if stop_when is not None else False
        if until is not None and until > self.clock and not stopped:
            self.clock = until
        return self.log, self

    def _emit(self, kind: str, **payload) -> None:
        self.log.append(self.clock, kind, payload)

    # ------------------------------------------------------------------
    # Scenario loading
    # ------------------------------------------------------------------

    def load_scenario(self, scenario: WorkloadScenario) -> None:
        validate_scenario(scenario, self.config)
        self.seed = scenario.seed
        for client in scenario.clients:
            self._client_access[client.id] = client.access
            for idx, entry in enumerate(client.script):
                if isinstance(entry, ScriptCall):
                    inv = _Invocation(
                        id=f"{client.id}:{idx}",
                        caller=f"session:{client.id}",
                        session=client.id,
                        component=entry.component,
                        interface=entry.interface,
                        operation=entry.operation,
                        ambient_tx=None,
                        submitted_at=entry.at,
                        parent=None,
                    )
                    self._at(entry.at, PRIO_DISPATCH, lambda inv=inv: self._dispatch(inv))
                else:
                    self._at(
                        entry.at,
                        PRIO_DISPATCH,
                        lambda c=client, e=entry: self._home_action(c, e),
                    )
        for idx, message in enumerate(scenario.messages):
            self._at(
                message.at,
                PRIO_DISPATCH,
                lambda m=message: self.enqueue_message(m.queue, m.payload),
            )

    def _home_action(self, client: ClientSession, action: HomeAction) -> None:
        container = self.containers.get(action.component)
        if container is None or not container.has_interceptor(InterceptorKind.HOME_TRACKING):
            return
        if client.access is not Access.REMOTE:
            return  # local handles never constrain redeployment
        refs = self.remote_refs.setdefault(action.component, set())
        if action.action in ("create", "find"):
            refs.add(client.id)
        else:
            refs.discard(client.id)

    # ------------------------------------------------------------------
    # Dispatch pipeline (the interceptor chain)
    # ------------------------------------------------------------------

    def _dispatch(self, inv: _Invocation) -> None:
        container = self.containers.get(inv.component)
        if container is None or not container.started:
            self._deny(inv, "container-not-started")
            return
        descriptor = container.descriptor
        spec = descriptor.operation_spec(inv.operation)
        if spec is None or not descriptor.provides_operation(inv.interface, inv.operation):
            self._missing_operation(inv)
            return
        for kind in container.spec.interceptor_chain:
            if kind is InterceptorKind.CLEAN_SHUTDOWN:
                if container.clean_shutdown:
                    self._deny(inv, "clean-shutdown")
                    return
            elif kind is InterceptorKind.REDEPLOY_BARRIER:
                if container.barrier_mode != BARRIER_OPEN:
                    if not self._joins_active_tx(inv, spec):
                        self._hold(container, inv)
                        return
                    if container.barrier_mode == BARRIER_CLOSED:
                        if self._tx_inside_barricade(inv.ambient_tx):
                            # some drain is waiting on this transaction:
                            # fall back to draining until it completes
                            container.barrier_mode = BARRIER_DRAINING
                            container.barrier_closed_at = None
                        else:
                            # new outside work: park it until release
                            self._hold(container, inv)
                            return
            elif kind is InterceptorKind.TX_DEMARCATION:
                pass  # transaction begins when the instance starts executing
            elif kind is InterceptorKind.POOLING:
                instance = self._acquire_instance(container, inv)
                if instance is None:
                    container.pool_wait.append(inv)
                    return
                self._begin(container, inv, spec, instance)
                return
        raise EngineFault(f"container {container.name!r} chain has no Pooling stage")

    def _joins_active_tx(self, inv: _Invocation, spec: OperationSpec) -> bool:
        if spec.tx_attribute is not TxAttribute.JOINS or inv.ambient_tx is None:
            return False
        tx = self.transactions.get(inv.ambient_tx)
        return tx is not None and tx.state == "Active"

    def _tx_inside_barricade(self, tx_id: Optional[str]) -> bool:
        """Whether some barricaded container's drain depends on this transaction."""
        tx = self.transactions.get(tx_id) if tx_id else None
        if tx is None:
            return False
        for name in tx.touched:
            container = self.containers.get(name)
            if container is not None and container.barrier_mode != BARRIER_OPEN:
                return True
        return False

    def _hold(self, container: _Container, inv: _Invocation) -> None:
        inv.held_at = self.clock
        container.barrier_held.append(inv)
        self._emit(
            INVOCATION_HELD,
            id=inv.id,
            component=inv.component,
            operation=inv.operation,
            session=inv.session,
            submitted_at=inv.submitted_at,
        )

    def _deny(self, inv: _Invocation, reason: str) -> None:
        self._emit(
            INVOCATION_DENIED, id=inv.id, component=inv.component, session=inv.session, reason=reason
        )
        if inv.parent is not None:
            # the caller absorbs the failure and carries on; no abort
            self._child_returned(inv.parent)

    def _missing_operation(self, inv: _Invocation) -> None:
        if inv.parent is None:
            # stale client stub after a structural change: the session is broken
            if inv.session is not None and inv.session not in self._invalidated_sessions:
                self._invalidated_sessions.add(inv.session)
                self._emit(
                    SESSION_INVALIDATED,
                    session=inv.session,
                    reason=f"operation {inv.component}.{inv.operation} no longer provided",
                )
            self._emit(
                INVOCATION_DENIED,
                id=inv.id,
                component=inv.component,
                session=inv.session,
                reason="missing-operation",
            )
            return
        # a component promised this call in its automaton: broken protocol wiring
        self._violation = ProtocolViolation(
            f"{inv.caller} called {inv.component}.{inv.operation} which is not provided"
        )
        self._emit(
            INVOCATION_DENIED,
            id=inv.id,
            component=inv.component,
            session=inv.session,
            reason="protocol-violation",
        )

    # ------------------------------------------------------------------
    # Pooling
    # ------------------------------------------------------------------

    def _acquire_instance(self, container: _Container, inv: _Invocation) -> Optional[_Instance]:
        if container.descriptor.kind is ComponentKind.STATEFUL_SESSION:
            binding = inv.session or inv.caller
            for instance in container.instances:
                if instance.session == binding:
                    return instance if instance.current is None else None
            for instance in container.free:  # claim a never-bound warm instance
                if instance.session is None:
                    container.free.remove(instance)
                    instance.session = binding
                    return instance
            if len(container.instances) < container.pool_size:
                instance = self._create_instance(container)
                instance.session = binding
                return instance
            return None
        if container.free:
            return container.free.pop(0)
        if len(container.instances) < container.pool_size:
            return self._create_instance(container, warm=False)
        return None

    def _create_instance(self, container: _Container, warm: bool = False) -> _Instance:
        key = f"{container.name}#{container.created}"
        container.created += 1
        instance = _Instance(key, container.name)
        container.instances.append(instance)
        if warm:
            container.free.append(instance)
        return instance

    def _service_pool_queue(self, container: _Container) -> None:
        if not container.pool_wait:
            return
        remaining: list[_Invocation] = []
        for inv in container.pool_wait:
            spec = container.descriptor.operation_spec(inv.operation)
            if spec is None:
                remaining.append(inv)
                continue
            instance = self._acquire_instance(container, inv)
            if instance is None:
                remaining.append(inv)
            else:
                self._begin(container, inv, spec, instance)
        container.pool_wait = remaining

    # ------------------------------------------------------------------
    # Execution
    # ------------------------------------------------------------------

    def _resolve_transaction(self, container: _Container, inv: _Invocation, spec: OperationSpec) -> None:
        attr = spec.tx_attribute
        if attr is TxAttribute.NONE and container.descriptor.kind is ComponentKind.ENTITY:
            attr = TxAttribute.STARTS_NEW  # entity work is always transacted
        if attr is TxAttribute.JOINS and self._joins_active_tx(inv, spec):
            inv.tx = inv.ambient_tx
            return
        if attr in (TxAttribute.STARTS_NEW, TxAttribute.JOINS):
            # Joins with no active ambient transaction starts its own
            tx = _Transaction(id=f"tx:{inv.id}", root_invocation=inv.id)
            self.transactions[tx.id] = tx
            inv.tx = tx.id
            inv.started_tx = True
            self._emit(TX_BEGIN, tx=tx.id, root=inv.id)

    def _begin(self, container: _Container, inv: _Invocation, spec: OperationSpec, instance: _Instance) -> None:
        self._resolve_transaction(container, inv, spec)
        if inv.tx is not None:
            tx = self.transactions[inv.tx]
            tx.touched.add(container.name)
            container.touching_txs.add(tx.id)
        container.executing += 1
        instance.invocations_served += 1
        rng = random.Random(f"{self.seed}|{inv.id}")
        execution = _Execution(inv, instance, spec, rng, self.clock)
        instance.current = execution
        self._emit(
            INVOCATION_START,
            id=inv.id,
            component=inv.component,
            interface=inv.interface,
            operation=inv.operation,
            caller=inv.caller,
            session=inv.session,
            instance=instance.key,
            tx=inv.tx,
            submitted_at=inv.submitted_at,
        )
        self._continue_execution(execution)

    def _continue_execution(self, execution: _Execution) -> None:
        spec = execution.spec
        if execution.cursor is None:
            self._at(
                execution.started_at + spec.duration,
                PRIO_COMPLETION,
                lambda: self._complete(execution),
            )
            return
        automaton = execution.cursor.automaton
        options = list(automaton.outgoing(execution.cursor.current))
        choices: list = list(options)
        if execution.cursor.current in automaton.finals:
            choices.append(None)
        if not choices:
            choices = [None]
        if execution.emitted >= _WALK_CAP:
            pick = _toward_final(automaton, execution.cursor.current)
        else:
            pick = execution.rng.choice(choices) if len(choices) > 1 else choices[0]
        if pick is None:
            tail = max(0, spec.duration - execution.delays_spent)
            self._at(self.clock + tail, PRIO_COMPLETION, lambda: self._complete(execution))
            return
        # the call fires now; the transition's min_delay elapses after it returns
        execution.delays_spent += pick.min_delay
        execution.pending_gap = pick.min_delay
        self._emit_call(execution, pick)

    def _emit_call(self, execution: _Execution, transition) -> None:
        inv = execution.invocation
        try:
            execution.cursor = advance(execution.cursor, transition.label)
        except ProtocolViolation as exc:
            self._violation = exc
            return
        label: CallLabel = transition.label
        provider = self.config.provider_of(inv.component, label.interface)
        if provider is None:
            if self.config.is_declared_external(inv.component, label.interface):
                # external call: outside the simulated system, takes no time
                self._child_returned(execution)
                return
            self._violation = ProtocolViolation(
                f"{inv.component} calls unwired interface {label.interface!r}"
            )
            return
        child = _Invocation(
            id=f"{inv.id}.{execution.emitted}",
            caller=execution.instance.key,
            session=inv.session,
            component=provider,
            interface=label.interface,
            operation=label.operation,
            ambient_tx=inv.tx,
            submitted_at=self.clock,
            parent=execution,
        )
        execution.emitted += 1
        execution.in_flight_child = child
        self._dispatch(child)

    def _child_returned(self, execution: _Execution) -> None:
        execution.in_flight_child = None
        gap, execution.pending_gap = execution.pending_gap, 0
        if gap:
            self._at(self.clock + gap, PRIO_DISPATCH, lambda: self._continue_execution(execution))
        else:
            self._continue_execution(execution)

    def _complete(self, execution: _Execution) -> None:
        inv = execution.invocation
        container = self.containers[inv.component]
        instance = execution.instance
        if container.descriptor.kind is ComponentKind.ENTITY and inv.tx is not None:
            self._record_entity_write(container, inv)
        self._emit(
            INVOCATION_END,
            id=inv.id,
            component=inv.component,
            operation=inv.operation,
            session=inv.session,
            instance=instance.key,
            tx=inv.tx,
            submitted_at=inv.submitted_at,
        )
        instance.current = None
        container.executing -= 1
        if container.descriptor.kind is not ComponentKind.STATEFUL_SESSION:
            container.free.append(instance)
        if container.descriptor.kind is ComponentKind.STATEFUL_SESSION:
            # deterministic conversational state: remember the last call per field
            for field_name in container.descriptor.state_fields:
                instance.state[field_name] = f"{inv.operation}#{instance.invocations_served}"
        if inv.started_tx and inv.tx is not None:
            tx = self.transactions[inv.tx]
            if tx.state == "Active":  # a fault-injected abort wins over commit
                self._commit_transaction(tx)
        self._service_pool_queue(container)
        self._maybe_check_quiescence(container)
        self._check_drained(container)
        if inv.parent is not None:
            self._child_returned(inv.parent)

    def _record_entity_write(self, container: _Container, inv: _Invocation) -> None:
        store = container.bound_store
        if store is None or store not in self.stores:
            raise EngineFault(f"entity container {container.name!r} has no bound store")
        key = inv.session or inv.id.split(".")[0]
        tx = self.transactions[inv.tx]
        for column in container.descriptor.entity_schema:
            tx.writes.append((store, key, column, f"{inv.operation}:{inv.id}"))

    def _commit_transaction(self, tx: _Transaction) -> None:
        tx.state = "Committed"
        for store, key, column, value in tx.writes:
            self.stores[store].setdefault(key, {})[column] = value
        self._emit(
            TX_COMMIT,
            tx=tx.id,
            root=tx.root_invocation,
            writes=[list(w) for w in tx.writes],
        )
        for name in sorted(tx.touched):
            container = self.containers.get(name)
            if container is not None:
                container.touching_txs.discard(tx.id)
                self._maybe_check_quiescence(container)

    def abort_transaction(self, tx_id: str) -> None:
        """Fault injection hook: discard a transaction's writes. Never called by the engine."""
        tx = self.transactions[tx_id]
        tx.state = "Aborted"
        self._emit(TX_ABORT, tx=tx.id, root=tx.root_invocation)
        for name in sorted(tx.touched):
            container = self.containers.get(name)
            if container is not None:
                container.touching_txs.discard(tx.id)
                self._maybe_check_quiescence(container)

    # ------------------------------------------------------------------
    # Barrier
    # ------------------------------------------------------------------

    def activate_barrier(self, component: str) -> None:
        container = self._container(component)
        if container.barrier_mode != BARRIER_OPEN:
            raise AlreadyBarricaded(f"barrier on {component!r} is {container.barrier_mode}")
        container.barrier_mode = BARRIER_DRAINING
        container.barrier_activated_at = self.clock
        container.barrier_closed_at = None
        self._emit(BARRIER_ACTIVATED, component=component)
        # pool waiters that would start new work are held like new arrivals;
        # waiters joining active transactions must run or the drain never ends
        still_waiting: list[_Invocation] = []
        for inv in container.pool_wait:
            spec = container.descriptor.operation_spec(inv.operation)
            if spec is not None and self._joins_active_tx(inv, spec):
                still_waiting.append(inv)
            else:
                self._hold(container, inv)
        container.pool_wait = still_waiting
        self._maybe_check_quiescence(container)

    def _maybe_check_quiescence(self, container: _Container) -> None:
        if container.barrier_mode != BARRIER_DRAINING:
            return
        if container.touching_txs or container.executing > 0 or container.pool_wait:
            return
        container.barrier_mode = BARRIER_CLOSED
        container.barrier_closed_at = self.clock
        self._emit(QUIESCENCE_REACHED, component=container.name)
        waiters, container.quiescence_waiters = container.quiescence_waiters, []
        for waiter in waiters:
            waiter()

    def quiesce(self, component: str, timeout: Optional[int] = None) -> int:
        """Activate the barrier and run until quiescence; returns the instant reached.

        Raises DrainTimeout (and releases the barrier) if the drain does not
        finish within ``timeout`` (default: the engine drain timeout).
        """
        from .errors import DrainTimeout

        self.activate_barrier(component)
        container = self._container(component)
        limit = self.clock + (timeout if timeout is not None else self.drain_timeout)
        self.run(until=limit, stop_when=lambda: container.barrier_mode == BARRIER_CLOSED)
        if container.barrier_mode != BARRIER_CLOSED:
            self.release_barrier(component)
            raise DrainTimeout(f"container {component!r} did not quiesce by {limit}")
        return container.barrier_closed_at

    def release_barrier(self, component: str) -> None:
        container = self._container(component)
        if container.barrier_mode == BARRIER_OPEN:
            return  # idempotent: releasing an open barrier acknowledges
        container.barrier_mode = BARRIER_OPEN
        container.barrier_activated_at = None
        container.barrier_closed_at = None
        self._emit(BARRIER_RELEASED, component=component)
        held, container.barrier_held = container.barrier_held, []
        held.sort(key=lambda inv: (inv.submitted_at, inv.id))  # FIFO, ties by id
        for inv in held:
            self._at(self.clock, PRIO_DISPATCH, lambda inv=inv: self._dispatch(inv))
        if container.bound_queue:
            self._at(self.clock, PRIO_DISPATCH, lambda q=container.bound_queue: self._pump_queue(q))

    # ------------------------------------------------------------------
    # Clean shutdown (lifecycle stop)
    # ------------------------------------------------------------------

    def begin_clean_shutdown(self, component: str) -> None:
        container = self._container(component)
        if not container.has_interceptor(InterceptorKind.CLEAN_SHUTDOWN):
            raise EngineFault(f"container {component!r} has no CleanShutdown interceptor")
        container.clean_shutdown = True
        self._emit(CLEAN_SHUTDOWN_ACTIVATED, component=component)
        self._check_drained(container)

    def _check_drained(self, container: _Container) -> None:
        if not container.clean_shutdown or container.executing > 0:
            return
        waiters, container.drain_waiters = container.drain_waiters, []
        for waiter in waiters:
            waiter()

    def is_drained(self, component: str) -> bool:
        container = self._container(component)
        return container.clean_shutdown and container.executing == 0

    def end_clean_shutdown(self, component: str) -> None:
        self._container(component).clean_shutdown = False

    # ------------------------------------------------------------------
    # Queues and message-driven delivery
    # ------------------------------------------------------------------

    def enqueue_message(self, queue: str, payload: str) -> None:
        q = self._queue(queue)
        q.items.append((q.enqueued, payload))
        self._emit(MESSAGE_ENQUEUED, queue=queue, payload=payload, seq=q.enqueued)
        q.enqueued += 1
        self._pump_queue(queue)

    def pause_queue(self, queue: str) -> None:
        q = self._queue(queue)
        if not q.paused:
            q.paused = True
            self._emit(QUEUE_PAUSED, queue=queue)

    def resume_queue(self, queue: str) -> None:
        q = self._queue(queue)
        if q.paused:
            q.paused = False
            self._emit(QUEUE_RESUMED, queue=queue)
        self._pump_queue(queue)

    def _receiver_for(self, queue: str) -> Optional[_Container]:
        for container in self.containers.values():
            if container.bound_queue == queue:
                return container
        return None

    def _pump_queue(self, queue: str) -> None:
        q = self._queue(queue)
        if q.paused:
            return
        container = self._receiver_for(queue)
        if container is None or not container.started or container.clean_shutdown:
            return
        if container.barrier_mode != BARRIER_OPEN:
            return  # barrier doubles as delivery pause for the hosted receiver
        receiver = container.descriptor.provided[0]
        if not receiver.operations:
            raise EngineFault(f"receiver interface of {container.name!r} has no operations")
        operation = receiver.operations[0].name
        while q.items and not q.paused and container.barrier_mode == BARRIER_OPEN:
            seq, payload = q.items.pop(0)
            self._emit(MESSAGE_DELIVERED, queue=queue, payload=payload, seq=seq)
            q.delivered += 1
            inv = _Invocation(
                id=f"msg:{queue}:{seq}",
                caller=f"queue:{queue}",
                session=None,
                component=container.name,
                interface=receiver.name,
                operation=operation,
                ambient_tx=None,
                submitted_at=self.clock,
                parent=None,
            )
            self._dispatch(inv)

    # ------------------------------------------------------------------
    # Swap, sync, pool size
    # ------------------------------------------------------------------

    def swap_component(
        self,
        component: str,
        new: ComponentDescriptor,
        shadow_store: Optional[str] = None,
        reopen: bool = True,
    ) -> dict:
        """Replace the hosted descriptor under a closed barrier.

        Stateful instances have their conversational state passivated into a
        field map and activated into the new version; pooled instances of
        the interchangeable kinds are discarded and recreated.  With
        ``reopen`` the barrier is released immediately and held invocations
        replay FIFO against the new version (the plan executor passes False
        and releases barriers in its own order).
        """
        container = self._container(component)
        if container.barrier_mode != BARRIER_CLOSED:
            raise NotQuiescent(f"container {component!r} barrier is {container.barrier_mode}")
        old = container.descriptor
        if new.name != old.name:
            raise ValidationError(f"swap must keep the component name ({old.name!r} != {new.name!r})")
        if old.kind is ComponentKind.STATEFUL_SESSION:
            if tuple(old.state_fields) != tuple(new.state_fields):
                raise StateShapeMismatch(
                    f"{component!r}: state fields {list(old.state_fields)} -> "
                    f"{list(new.state_fields)}"
                )
            survivors: list[_Instance] = []
            for instance in container.instances:
                passivated = dict(instance.state)  # field-name -> value map
                fresh = _Instance(instance.key, component)
                fresh.session = instance.session
                fresh.state = passivated
                fresh.invocations_served = instance.invocations_served
                survivors.append(fresh)
            container.instances = survivors
            container.free = [i for i in survivors if i.session is None]
        else:
            container.instances = []
            container.free = []
            container.created = 0
            self._create_instance(container, warm=True)
        if shadow_store is not None:
            if shadow_store not in self.stores:
                raise EngineFault(f"shadow store {shadow_store!r} does not exist")
            container.bound_store = shadow_store
        elif new.data_store is not None:
            if new.data_store not in self.stores:
                raise EngineFault(f"data store {new.data_store!r} does not exist")
            container.bound_store = new.data_store
        if new.queue is not None:
            container.bound_queue = new.queue
        container.descriptor = new
        self.config = self.config.with_component(new)
        self._emit(
            SWAP_APPLIED, component=component, from_version=old.version, to_version=new.version
        )
        report = {"component": component, "from_version": old.version, "to_version": new.version}
        if reopen:
            self.release_barrier(component)
        return report

    def sync_shadow_store(
        self, component: str, shadow_store: str, column_mapping: dict[str, str]
    ) -> int:
        """Copy committed rows through the column mapping; returns the row count."""
        container = self._container(component)
        source = container.bound_store
        if source is None or source not in self.stores:
            raise EngineFault(f"container {component!r} has no bound store to sync from")
        if shadow_store not in self.stores:
            raise EngineFault(f"shadow store {shadow_store!r} does not exist")
        target = self.stores[shadow_store]
        for key in sorted(self.stores[source]):
            row = self.stores[source][key]
            target[key] = {
                column_mapping[col]: value for col, value in row.items() if col in column_mapping
            }
        if len(target) != len(self.stores[source]):
            raise EngineFault(
                f"row count mismatch after sync: {len(self.stores[source])} -> {len(target)}"
            )
        self._emit(
            STORE_SYNCED,
            component=component,
            source=source,
            target=shadow_store,
            rows=len(target),
        )
        return len(target)

    def set_pool_size(self, component: str, pool_size: int) -> None:
        if pool_size < 1:
            raise ValidationError("pool_size must be >= 1")
        container = self._container(component)
        container.pool_size = pool_size
        self._emit(POOL_SIZE_CHANGED, component=component, pool_size=pool_size)
        self._service_pool_queue(container)

    # ------------------------------------------------------------------
    # Lifecycle support
    # ------------------------------------------------------------------

    def start_all(self) -> None:
        for container in self.containers.values():
            self.start_container(container.name)

    def start_container(self, component: str) -> None:
        container = self._container(component)
        if container.started:
            return
        container.started = True
        container.clean_shutdown = False
        if not container.instances:
            self._create_instance(container, warm=True)
        if container.bound_queue:
            self._pump_queue(container.bound_queue)

    def stop_container(self, component: str) -> None:
        container = self._container(component)
        container.started = False
        container.clean_shutdown = False

    def add_component(
        self,
        descriptor: ComponentDescriptor,
        container_spec: Optional[ContainerSpec] = None,
        wiring: tuple[Wire, ...] = (),
        started: bool = False,
    ) -> None:
        if descriptor.name in self.containers:
            raise ValidationError(f"component {descriptor.name!r} already deployed")
        spec = container_spec or ContainerSpec(hosted_component=descriptor.name)
        root = self.config.root
        new_root = type(root)(
            root.name, root.children + (descriptor,), root.internal_wiring + tuple(wiring)
        )
        self.config = ApplicationConfiguration(
            root=new_root,
            containers=self.config.containers + (spec,),
            data_stores=self.config.data_stores,
            queues=self.config.queues,
            version=self.config.version,
        )
        container = _Container(spec, descriptor)
        self.containers[descriptor.name] = container
        if started:
            self.start_container(descriptor.name)

    def remove_component(self, component: str) -> None:
        container = self._container(component)
        if container.executing:
            raise EngineFault(f"cannot remove {component!r} while invocations run")
        del self.containers[component]
        root = self.config.root
        children = tuple(
            c for c in root.children if getattr(c, "name", None) != component
        )
        wiring = tuple(
            w for w in root.internal_wiring if w.requirer != component and w.provider != component
        )
        self.config = ApplicationConfiguration(
            root=type(root)(root.name, children, wiring),
            containers=tuple(c for c in self.config.containers if c.hosted_component != component),
            data_stores=self.config.data_stores,
            queues=self.config.queues,
            version=self.config.version,
        )

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    def _container(self, component: str) -> _Container:
        container = self.containers.get(component)
        if container is None:
            raise ScenarioError(f"unknown component {component!r}")
        return container

    def _queue(self, name: str) -> _Queue:
        queue = self.queues.get(name)
        if queue is None:
            raise UnknownQueue(f"unknown queue {name!r}")
        return queue

    def store_contents(self, name: str) -> dict[str, dict[str, str]]:
        return {k: dict(v) for k, v in self.stores[name].items()}

    def snapshot(self) -> RuntimeSnapshot:
        """Capture the current state as an immutable value."""
        instances: list[InstanceSnapshot] = []
        for name in sorted(self.containers):
            container = self.containers[name]
            for instance in container.instances:
                execution = instance.current
                if execution is None:
                    instances.append(
                        InstanceSnapshot(key=instance.key, component=name, idle=True)
                    )
                else:
                    child = execution.in_flight_child
                    instances.append(
                        InstanceSnapshot(
                            key=instance.key,
                            component=name,
                            idle=False,
                            operation=execution.invocation.operation,
                            cursor=execution.cursor,
                            in_flight=(child.component, child.interface) if child else None,
                        )
                    )
        active = tuple(
            (name, tuple(sorted(self.containers[name].touching_txs)))
            for name in sorted(self.containers)
            if self.containers[name].touching_txs
        )
        refs = tuple(
            (component, tuple(sorted(clients)))
            for component, clients in sorted(self.remote_refs.items())
            if clients
        )
        depths = tuple((name, len(q.items)) for name, q in sorted(self.queues.items()))
        return RuntimeSnapshot(
            time=self.clock,
            instances=tuple(instances),
            active_transactions=active,
            remote_refs=refs,
            queue_depths=depths,
            config=self.config,
        )


def run(
    config: ApplicationConfiguration,
    scenario: WorkloadScenario,
    until: int,
    drain_timeout: int = 1000,
) -> tuple[EventLog, Engine]:
    """Build an engine, load the scenario, and run to the horizon."""
    engine = Engine(config, seed=scenario.seed, drain_timeout=drain_timeout)
    engine.load_scenario(scenario)
    return engine.run(until=until)
