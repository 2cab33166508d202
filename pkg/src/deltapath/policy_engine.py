"""Waypoint, NOT-constraint, and backup-path policies.

Waypoint policies decompose into segment retrievals over the base rules.
NOT constraints are evaluated as simulated node failures on a private fork
of the graph and rule store; forks are shared between policies with the
same exclusion set and keep themselves current by ingesting every epoch's
events (minus those touching their excluded nodes).  Backup-style policies
remove the primary path's links from a throwaway fork and re-route.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from .errors import (
    NoBackupError,
    PolicySyntaxError,
    UnknownNodeError,
    UnreachableError,
)
from .graph_model import (
    AddLink,
    AddNode,
    GraphStore,
    NodeId,
    RemoveLink,
    RemoveNode,
    TopologyEvent,
    UpdateWeight,
)
from .path_retrieval import Path, retrieve
from .routing_core import RuleStore, step_epoch
from .strategy import Strategy


@dataclass(frozen=True)
class Waypoints:
    nodes: tuple[NodeId, ...]


@dataclass(frozen=True)
class NotNodes:
    nodes: frozenset[NodeId]


class PathRule(str, Enum):
    BACKUP = "backup"
    TWO_WAY = "2way"
    REDUNDANT = "redundant"


PolicyBody = Union[Waypoints, NotNodes, PathRule]


@dataclass(frozen=True)
class Policy:
    id: int
    src: NodeId
    dst: NodeId
    body: PolicyBody


@dataclass
class PolicyResult:
    policy: Policy
    paths: tuple[Path, ...]
    kind: str
    revisits: bool = False


def parse_policy(policy_id: int, text: str) -> Policy:
    """Parse `S : constraints : T`.

    Constraints are waypoint node ids in visit order, `!`-prefixed ids to
    avoid, or one of the path keywords backup / 2way / redundant.  An empty
    constraint section degenerates to a plain path request.
    """
    parts = [p.strip() for p in text.split(":")]
    if len(parts) < 2:
        raise PolicySyntaxError(f"expected `S : constraints : T`, got {text!r}")
    try:
        src = int(parts[0])
        dst = int(parts[-1])
    except ValueError:
        raise PolicySyntaxError(f"origin/target must be node ids in {text!r}") from None
    tokens = [tok for part in parts[1:-1] for tok in part.split()]
    if not tokens:
        return Policy(policy_id, src, dst, Waypoints(()))
    if len(tokens) == 1 and tokens[0] in PathRule._value2member_map_:
        return Policy(policy_id, src, dst, PathRule(tokens[0]))
    negated = [tok.startswith("!") for tok in tokens]
    if all(negated):
        try:
            nodes = frozenset(int(tok[1:]) for tok in tokens)
        except ValueError:
            raise PolicySyntaxError(f"bad NOT constraint in {text!r}") from None
        if src in nodes or dst in nodes:
            raise PolicySyntaxError("cannot exclude the policy's own endpoints")
        return Policy(policy_id, src, dst, NotNodes(nodes))
    if any(negated):
        raise PolicySyntaxError(f"cannot mix waypoints and NOT constraints in {text!r}")
    try:
        nodes = tuple(int(tok) for tok in tokens)
    except ValueError:
        raise PolicySyntaxError(f"bad waypoint in {text!r}") from None
    return Policy(policy_id, src, dst, Waypoints(nodes))


@dataclass
class PolicyFork:
    """A private graph + rule store pair with some nodes excluded, kept at
    fixpoint against the live event stream."""

    exclusions: frozenset[NodeId]
    graph: GraphStore
    rules: RuleStore
    policy_ids: set[int] = field(default_factory=set)


def _event_touches(ev: TopologyEvent, excluded: frozenset[NodeId]) -> bool:
    match ev:
        case AddLink(a=a, b=b) | RemoveLink(a=a, b=b) | UpdateWeight(a=a, b=b):
            return a in excluded or b in excluded
        case AddNode(id=n) | RemoveNode(id=n):
            return n in excluded
    return False


class PolicyEngine:
    """Evaluates policies against a base engine's graph and rule store."""

    def __init__(self, graph: GraphStore, rules: RuleStore, strategy: Strategy):
        self.graph = graph
        self.rules = rules
        self.strategy = strategy
        self.policies: dict[int, Policy] = {}
        self._forks: dict[frozenset[NodeId], PolicyFork] = {}

    # --- lifecycle

    def add(self, policy: Policy) -> None:
        nodes = {policy.src, policy.dst}
        if isinstance(policy.body, Waypoints):
            nodes.update(policy.body.nodes)
        elif isinstance(policy.body, NotNodes):
            nodes.update(policy.body.nodes)
        for n in nodes:
            if n not in self.graph.nodes:
                raise UnknownNodeError(f"policy {policy.id} references unknown node {n}")
        self.policies[policy.id] = policy

    def remove(self, policy_id: int) -> None:
        self.policies.pop(policy_id, None)
        for exclusions in list(self._forks):
            fork = self._forks[exclusions]
            fork.policy_ids.discard(policy_id)
            if not fork.policy_ids:
                del self._forks[exclusions]

    def on_epoch(self, events: list[TopologyEvent]) -> None:
        """Bring every live fork to the fixpoint of the new epoch; events
        touching a fork's excluded nodes do not apply to it."""
        for fork in self._forks.values():
            kept = [ev for ev in events if not _event_touches(ev, fork.exclusions)]
            step_epoch(fork.rules, fork.graph, kept)

    def fork_count(self) -> int:
        return len(self._forks)

    # --- evaluation

    def evaluate(self, policy: Policy | int) -> PolicyResult:
        if isinstance(policy, int):
            policy = self.policies[policy]
        body = policy.body
        if isinstance(body, Waypoints):
            return self.eval_waypoints(policy)
        if isinstance(body, NotNodes):
            return self.eval_not(policy)
        return self.eval_backup(policy)

    def eval_waypoints(self, policy: Policy) -> PolicyResult:
        """One retrieval per segment over the base rules, concatenated;
        revisited nodes are flagged, not rejected."""
        stops = (policy.src, *policy.body.nodes, policy.dst)
        view = self.rules.established_rules()
        segments = [retrieve(view, a, b) for a, b in zip(stops, stops[1:])]
        hops = list(segments[0].hops)
        for seg in segments[1:]:
            hops.extend(seg.hops[1:])
        costs = [seg.cost for seg in segments]
        cost = min(costs) if self.strategy.maximize else sum(costs)
        path = Path(tuple(hops), cost, len(hops) - 1)
        return PolicyResult(
            policy, (path,), "waypoint", revisits=len(set(hops)) != len(hops)
        )

    def eval_not(self, policy: Policy) -> PolicyResult:
        """Retrieval on the shared fork that excludes the policy's nodes."""
        fork = self._fork_for(policy.body.nodes)
        fork.policy_ids.add(policy.id)
        path = retrieve(fork.rules.established_rules(), policy.src, policy.dst)
        return PolicyResult(policy, (path,), "not")

    def eval_backup(self, policy: Policy) -> PolicyResult:
        """Primary from the base rules, backup from a throwaway fork with
        the primary's links removed; the pair is link-disjoint."""
        view = self.rules.established_rules()
        primary = retrieve(view, policy.src, policy.dst)
        graph = self.graph.fork()
        rules = self.rules.fork()
        removals = []
        for a, b in zip(primary.hops, primary.hops[1:]):
            for (dst, w), mult in list(graph.out_edges(a).items()):
                if dst == b:
                    removals.extend([RemoveLink(a, b, w)] * mult)
        step_epoch(rules, graph, removals)
        try:
            backup = retrieve(rules.established_rules(), policy.src, policy.dst)
        except UnreachableError:
            raise NoBackupError(
                f"no link-disjoint backup for ({policy.src}, {policy.dst})"
            ) from None
        kind = {
            PathRule.BACKUP: "failover",
            PathRule.TWO_WAY: "split",
            PathRule.REDUNDANT: "duplicate",
        }[policy.body]
        return PolicyResult(policy, (primary, backup), kind)

    # --- forks

    def _fork_for(self, exclusions: frozenset[NodeId]) -> PolicyFork:
        fork = self._forks.get(exclusions)
        if fork is None:
            graph = self.graph.fork()
            rules = self.rules.fork()
            # nodes already gone from the base graph need no removal here
            removals = [RemoveNode(n) for n in sorted(exclusions) if n in graph.nodes]
            step_epoch(rules, graph, removals)
            fork = PolicyFork(exclusions, graph, rules)
            self._forks[exclusions] = fork
        return fork
