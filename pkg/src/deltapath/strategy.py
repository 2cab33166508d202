"""QoS routing strategies: the (link cost, path cost, path selection) triple.

A strategy fixes how link attributes become edge weights, how a path's
cost grows when extended by one edge, and which candidate rule wins for a
(src, dst) pair.  Selection is a strict total order: the strategy's
primary key (min path cost, or max for widest-path routing), then fewer
hops, then the smallest next-hop id.  The deterministic tail keeps results
identical across worker counts and input orderings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .errors import InvalidWeightError, UnknownStrategyError
from .graph_model import LinkProperties

# Weight assigned to a fully utilized link under inverse-free-bandwidth
# costing, where the formula itself diverges.
SATURATED_WEIGHT = 1e9


class WeightDomain(NamedTuple):
    lo: float
    hi: float
    lo_open: bool = False

    def contains(self, w: float) -> bool:
        if self.lo_open:
            return self.lo < w <= self.hi
        return self.lo <= w <= self.hi


@dataclass(frozen=True)
class Strategy:
    """Immutable description of one QoS routing algorithm.

    `maximize` gives the direction of the selection primary key;
    `tautology_cost` is the path cost of the self rule seeding propagation.
    """

    name: str
    link_cost: Callable[[LinkProperties], float]
    path_cost: Callable[[float, float], float]
    tautology_cost: float
    maximize: bool
    weight_domain: WeightDomain

    def validate_weight(self, w: float) -> float:
        if not self.weight_domain.contains(w):
            raise InvalidWeightError(
                f"weight {w} outside domain of strategy {self.name!r}"
            )
        return w

    def sort_key(self, rule) -> tuple:
        """Selection key for a rule or (next, p_cost, p_length) candidate;
        smaller keys win."""
        if hasattr(rule, "p_cost"):
            nxt, cost, length = rule.next, rule.p_cost, rule.p_length
        else:
            nxt, cost, length = rule
        return (-cost if self.maximize else cost, length, nxt)


def compare(strategy: Strategy, rule_a, rule_b) -> int:
    """Total order over candidate rules of one (src, dst) group: negative
    when rule_a wins, positive when rule_b wins, zero only for identical
    (next, p_cost, p_length)."""
    ka = strategy.sort_key(rule_a)
    kb = strategy.sort_key(rule_b)
    return (ka > kb) - (ka < kb)


def _hop_link_cost(props: LinkProperties) -> float:
    return 1

def _hop_path_cost(w, p_cost):
    return 1 + p_cost

def _free_bw_link_cost(props: LinkProperties) -> float:
    free = props.free_bandwidth()
    return 1.0 / free if free > 0 else SATURATED_WEIGHT

def _utilization_link_cost(props: LinkProperties) -> float:
    return props.utilization

def _additive_path_cost(w, p_cost):
    return w + p_cost

def _width_link_cost(props: LinkProperties) -> float:
    return props.free_bandwidth()

def _width_path_cost(w, p_cost):
    return w if w < p_cost else p_cost


_ADDITIVE_DOMAIN = WeightDomain(0.0, math.inf, lo_open=True)

_BUILTINS = {
    "hop_count": lambda: Strategy(
        "hop_count", _hop_link_cost, _hop_path_cost, 0, False, _ADDITIVE_DOMAIN
    ),
    "sd_free_bw": lambda: Strategy(
        "sd_free_bw", _free_bw_link_cost, _additive_path_cost, 0.0, False,
        _ADDITIVE_DOMAIN,
    ),
    "sd_utilization": lambda: Strategy(
        "sd_utilization", _utilization_link_cost, _additive_path_cost, 0.0, False,
        _ADDITIVE_DOMAIN,
    ),
    "shortest_widest": lambda: Strategy(
        "shortest_widest", _width_link_cost, _width_path_cost, math.inf, True,
        WeightDomain(0.0, math.inf),
    ),
}

# CLI spellings
_ALIASES = {
    "hopcount": "hop_count",
    "sd-freebw": "sd_free_bw",
    "sd-util": "sd_utilization",
    "widest": "shortest_widest",
}


def path_cost_kind(strategy: Strategy) -> str | None:
    """Identify a built-in path cost function so hot loops can inline it;
    None means the strategy carries a custom f_p that must be called."""
    if strategy.path_cost is _additive_path_cost:
        return "sum"
    if strategy.path_cost is _hop_path_cost:
        return "hop"
    if strategy.path_cost is _width_path_cost:
        return "min"
    return None


def builtin(name: str) -> Strategy:
    """One of the four built-in strategies: hop_count, sd_free_bw,
    sd_utilization, shortest_widest (CLI aliases accepted)."""
    canonical = _ALIASES.get(name, name)
    try:
        return _BUILTINS[canonical]()
    except KeyError:
        raise UnknownStrategyError(
            f"unknown strategy {name!r}; expected one of {sorted(_BUILTINS)}"
        ) from None


def builtin_names() -> list[str]:
    return sorted(_BUILTINS)
