"""Deterministic synchronous message-passing engine.

Execution model: time advances in lockstep rounds.  In round t every node
first receives the messages addressed to it in round t-1, then computes, then
sends.  A message sent in round t is therefore readable at the start of round
t+1, never earlier.  Message size is unbounded; complexity is measured in
message COUNT (by category) and in rounds.

Nodes are stepped in ascending id order and inboxes are sorted by sender id,
so a run is a pure function of (graph, protocol, config).  Rounds in which no
node has mail and no node asked to be woken are skipped in O(1) while still
counting toward the round total: skipping idle time is measurement-side
bookkeeping, not something the protocol can observe.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from .netgraph import Graph

# Message categories (ints in the hot path, names in emitted records).
CAT_EXPLORATION = 0
CAT_CLUSTER_TREE = 1
CAT_GOSSIP = 2
CAT_CONTROL = 3
CATEGORY_NAMES = ("exploration", "cluster_tree", "gossip", "control")

# Payload tag used by gossip-mode protocols to mark a link activation; the
# engine relies on it to police the one-activation-per-node-per-round rule.
GOSSIP_ACT = "act"
GOSSIP_RSP = "rsp"

_RNG_MIX = 0x9E3779B97F4A7C15
_RNG_MASK = (1 << 64) - 1


class SimError(Exception):
    """Base class for engine faults."""


class ModelViolation(SimError):
    """A protocol tried to send over a non-edge of the host graph."""


class SimTimeout(SimError):
    """max_rounds elapsed with nodes still active; distinguishable from a
    protocol that wedges (ProtocolStuck) or one that finishes."""


class ProtocolStuck(SimError):
    """No pending mail, no wake-ups, yet nodes never declared halt."""


class GossipViolation(SimError):
    """A node initiated more than one link activation in a single round."""

    def __init__(self, round_no: int, node: int, links: List[Tuple[int, int]]):
        super().__init__(
            f"node {node} initiated {len(links)} activations in round {round_no}: {links}"
        )
        self.round_no = round_no
        self.node = node
        self.links = links


@dataclass
class ModeConfig:
    """Per-run switches.  gossip_mode enables the activation discipline;
    max_rounds is a hard safety cap; rng_seed feeds every node's private
    stream; allow_quiescence lets a run end with un-halted but permanently
    idle nodes (used by protocols whose natural end is silence)."""

    gossip_mode: bool = False
    max_rounds: int = 50_000_000
    rng_seed: int = 0
    allow_quiescence: bool = False
    record_trace: bool = False
    trace_digest: bool = False

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


@dataclass(slots=True)
class Envelope:
    """One recorded message (trace entries only; the hot path uses tuples)."""

    round_no: int
    src: int
    dst: int
    payload: Any
    category: str


@dataclass
class RunMetrics:
    rounds: int = 0
    messages_total: int = 0
    messages_by_category: Dict[str, int] = field(default_factory=dict)

    def merged_with(self, other: "RunMetrics", parallel: bool = False) -> "RunMetrics":
        """Combine two runs: message counts add; rounds add for sequential
        composition and take the max for notionally parallel executions."""
        cats: Dict[str, int] = dict(self.messages_by_category)
        for k, v in other.messages_by_category.items():
            cats[k] = cats.get(k, 0) + v
        rounds = max(self.rounds, other.rounds) if parallel else self.rounds + other.rounds
        return RunMetrics(rounds, self.messages_total + other.messages_total, cats)


class NodeContext:
    """What one node is allowed to know: its id, its neighbors' ids, its own
    mutable state bag, this round's inbox, and a private seeded rng."""

    __slots__ = ("self_id", "neighbor_ids", "state", "inbox", "output", "_rng", "_seed")

    def __init__(self, self_id: int, neighbor_ids: Tuple[int, ...], seed: int):
        self.self_id = self_id
        self.neighbor_ids = neighbor_ids
        self.state: Dict[str, Any] = {}
        self.inbox: List[Tuple[int, Any]] = []
        self.output: Any = None
        self._rng: Optional[random.Random] = None
        self._seed = seed

    @property
    def rng(self) -> random.Random:
        if self._rng is None:
            self._rng = random.Random((self._seed * _RNG_MIX + self.self_id) & _RNG_MASK)
        return self._rng


# A step returns (sends, halt, wake): sends is a list of
# (dst, payload, category:int); wake is an absolute round number or None.
StepResult = Tuple[List[Tuple[int, Any, int]], bool, Optional[int]]

NO_SENDS: List[Tuple[int, Any, int]] = []


class Protocol:
    """Per-node behavior plugged into run().  Subclasses override setup() to
    seed node state and step() to react each round.  Every node is stepped
    once in round 1; afterwards a node runs only when it has mail or when a
    previously returned wake round comes due."""

    name = "protocol"

    def setup(self, node: NodeContext) -> None:
        pass

    def step(self, node: NodeContext, rnd: int) -> StepResult:
        raise NotImplementedError


@dataclass
class RunResult:
    outputs: Dict[int, Any]
    metrics: RunMetrics
    end_reason: str  # "halted" | "quiescent"
    trace: Optional[List[Envelope]] = None
    digest: Optional[str] = None
    contexts: Optional[Dict[int, NodeContext]] = None


def _canon(obj: Any) -> bytes:
    """Canonical byte form for trace digests; container order is forced so
    equal payloads hash equally regardless of construction order."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return repr(obj).encode()
    if isinstance(obj, (tuple, list)):
        return b"(" + b",".join(_canon(x) for x in obj) + b")"
    if isinstance(obj, (set, frozenset)):
        return b"{" + b",".join(sorted(_canon(x) for x in obj)) + b"}"
    if isinstance(obj, dict):
        items = sorted((_canon(k), _canon(v)) for k, v in obj.items())
        return b"d{" + b",".join(k + b":" + v for k, v in items) + b"}"
    raise TypeError(f"unhashable payload element of type {type(obj).__name__}")


def run(graph: Graph, protocol: Protocol, config: Optional[ModeConfig] = None) -> RunResult:
    """Execute protocol on graph until every node halts (or, with
    allow_quiescence, until the system can provably never act again).

    Raises SimTimeout past config.max_rounds, ProtocolStuck on silent
    deadlock, ModelViolation on a non-edge send, GossipViolation in gossip
    mode on a double activation.
    """
    config = config or ModeConfig()
    nodes: Dict[int, NodeContext] = {}
    nbr_sets: Dict[int, frozenset] = {}
    for v in graph.nodes:
        nodes[v] = NodeContext(v, graph.adjacency[v], config.rng_seed)
        nbr_sets[v] = frozenset(graph.adjacency[v])
    for v in graph.nodes:
        protocol.setup(nodes[v])

    halted: set = set()
    n_total = graph.n
    counts = [0, 0, 0, 0]
    trace: Optional[List[Envelope]] = [] if config.record_trace else None
    hasher = hashlib.blake2b(digest_size=16) if config.trace_digest else None

    # In-flight mail sent last processed round: (src, dst, payload, cat).
    pending: List[Tuple[int, int, Any, int]] = []
    # Wake-up heap with lazy deletion; wake_at holds each node's live entry.
    wake_heap: List[Tuple[int, int]] = [(1, v) for v in graph.nodes]
    heapq.heapify(wake_heap)
    wake_at: Dict[int, int] = {v: 1 for v in graph.nodes}

    rnd = 0
    last_active = 0
    gossip_mode = config.gossip_mode

    while True:
        # Next round with anything to do; idle gaps are skipped but counted.
        next_rnd: Optional[int] = rnd + 1 if pending else None
        while wake_heap and (wake_heap[0][1] in halted or wake_at.get(wake_heap[0][1]) != wake_heap[0][0]):
            heapq.heappop(wake_heap)
        if wake_heap and (next_rnd is None or wake_heap[0][0] < next_rnd):
            next_rnd = wake_heap[0][0]
        if next_rnd is None:
            if len(halted) == n_total:
                reason = "halted"
            elif config.allow_quiescence:
                reason = "quiescent"
            else:
                raise ProtocolStuck(
                    f"{n_total - len(halted)} nodes idle but not halted after round {rnd}"
                )
            break
        if next_rnd > config.max_rounds:
            raise SimTimeout(f"exceeded max_rounds={config.max_rounds}")
        rnd = next_rnd

        # Deliver.
        inboxes: Dict[int, List[Tuple[int, Any]]] = {}
        for src, dst, payload, cat in pending:
            inboxes.setdefault(dst, []).append((src, payload))
        pending = []

        # Collect due wake-ups.
        due: List[int] = []
        while wake_heap and wake_heap[0][0] == rnd:
            _, v = heapq.heappop(wake_heap)
            if v not in halted and wake_at.get(v) == rnd:
                due.append(v)
                del wake_at[v]

        active = set(inboxes)
        active.update(due)
        active.difference_update(halted)
        if not active:
            continue  # all addressees already halted; mail is dropped
        last_active = rnd

        gossip_acts: Dict[int, List[Tuple[int, int]]] = {} if gossip_mode else {}

        for v in sorted(active):
            node = nodes[v]
            mail = inboxes.get(v)
            if mail is not None and len(mail) > 1:
                mail.sort(key=_sender_key)
            node.inbox = mail if mail is not None else []
            sends, halt, wake = protocol.step(node, rnd)
            if sends:
                allowed = nbr_sets[v]
                for dst, payload, cat in sends:
                    if dst not in allowed:
                        raise ModelViolation(
                            f"round {rnd}: node {v} sent to non-neighbor {dst}"
                        )
                    counts[cat] += 1
                    pending.append((v, dst, payload, cat))
                    if gossip_mode and cat == CAT_GOSSIP and isinstance(payload, tuple) \
                            and payload and payload[0] == GOSSIP_ACT:
                        gossip_acts.setdefault(v, []).append((v, dst))
                    if trace is not None:
                        trace.append(Envelope(rnd, v, dst, payload, CATEGORY_NAMES[cat]))
                    if hasher is not None:
                        hasher.update(b"%d|%d|%d|%d|" % (rnd, v, dst, cat))
                        hasher.update(_canon(payload))
            if halt:
                halted.add(v)
                wake_at.pop(v, None)
            elif wake is not None:
                if wake <= rnd:
                    raise SimError(f"node {v} asked for a wake in the past ({wake} <= {rnd})")
                prev = wake_at.get(v)
                if prev is None or wake < prev:
                    wake_at[v] = wake
                    heapq.heappush(wake_heap, (wake, v))
                # A later wake than one already scheduled keeps the earlier one.

        if gossip_mode:
            for v, links in gossip_acts.items():
                if len(links) > 1:
                    raise GossipViolation(rnd, v, links)

    metrics = RunMetrics(
        rounds=last_active,
        messages_total=sum(counts),
        messages_by_category={CATEGORY_NAMES[i]: counts[i] for i in range(4)},
    )
    return RunResult(
        outputs={v: nodes[v].output for v in graph.nodes},
        metrics=metrics,
        end_reason=reason,
        trace=trace,
        digest=hasher.hexdigest() if hasher is not None else None,
        contexts=nodes,
    )


def _sender_key(item: Tuple[int, Any]) -> int:
    return item[0]


@dataclass
class GossipCheckResult:
    ok: bool
    violations: List[Tuple[int, int, List[Tuple[int, int]]]] = field(default_factory=list)


def gossip_check(trace: List[Envelope]) -> GossipCheckResult:
    """Offline audit of a recorded gossip-mode trace: every node initiates at
    most one activation per round, and every response answers an activation
    that arrived over that very link in the previous round."""
    acts_by_round: Dict[int, Dict[int, List[Tuple[int, int]]]] = {}
    for env in trace:
        if env.category != CATEGORY_NAMES[CAT_GOSSIP]:
            continue
        if isinstance(env.payload, tuple) and env.payload and env.payload[0] == GOSSIP_ACT:
            acts_by_round.setdefault(env.round_no, {}).setdefault(env.src, []).append(
                (env.src, env.dst)
            )
    violations = []
    for rnd in sorted(acts_by_round):
        for v, links in acts_by_round[rnd].items():
            if len(links) > 1:
                violations.append((rnd, v, links))
    for env in trace:
        if env.category != CATEGORY_NAMES[CAT_GOSSIP]:
            continue
        if isinstance(env.payload, tuple) and env.payload and env.payload[0] == GOSSIP_RSP:
            prev = acts_by_round.get(env.round_no - 1, {})
            if (env.dst, env.src) not in prev.get(env.dst, []):
                violations.append((env.round_no, env.src, [(env.src, env.dst)]))
    return GossipCheckResult(ok=not violations, violations=violations)


def run_digest(graph: Graph, protocol_factory: Callable[[], Protocol],
               config: Optional[ModeConfig] = None) -> str:
    """Convenience: run with digesting enabled and return the trace hash."""
    cfg = config or ModeConfig()
    cfg = ModeConfig(
        gossip_mode=cfg.gossip_mode,
        max_rounds=cfg.max_rounds,
        rng_seed=cfg.rng_seed,
        allow_quiescence=cfg.allow_quiescence,
        record_trace=False,
        trace_digest=True,
    )
    return run(graph, protocol_factory(), cfg).digest or ""
