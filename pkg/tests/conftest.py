"""Shared fixtures and graph builders for the test suite."""

from __future__ import annotations

import random

import pytest

from deltapath.graph_model import (
    AddLink,
    GraphStore,
    LinkProperties,
    NodeRecord,
    RemoveLink,
    Topology,
    UpdateWeight,
    build_graph,
)
from deltapath.strategy import builtin


def props(capacity=10.0, utilization=0.0, delay=1.0) -> LinkProperties:
    return LinkProperties(capacity=capacity, utilization=utilization, delay=delay)


def topology(n_nodes, links) -> Topology:
    """links: iterable of (a, b) or (a, b, LinkProperties)."""
    topo = Topology(nodes=[NodeRecord(i) for i in range(n_nodes)])
    for link in links:
        if len(link) == 2:
            topo.links.append((link[0], link[1], props()))
        else:
            topo.links.append(tuple(link))
    return topo


def utilization_topology(n_nodes, weighted_links) -> Topology:
    """weighted_links: (a, b, w) with w used as the utilization, so the
    sd_utilization strategy sees exactly these integer weights."""
    return topology(
        n_nodes,
        [(a, b, props(utilization=float(w))) for a, b, w in weighted_links],
    )


def triangle() -> Topology:
    """The recurring example: A-B (w=1), B-C (w=1), A-C (w=3) as nodes 0-2."""
    return utilization_topology(3, [(0, 1, 1), (1, 2, 1), (0, 2, 3)])


def random_connected_topology(rng: random.Random, n: int, avg_degree: float = None) -> Topology:
    """Random connected graph: a random spanning tree plus extra edges up to
    the target average degree, integer utilizations in [1, 100]."""
    if avg_degree is None:
        avg_degree = rng.uniform(2.0, 6.0)
    topo = Topology(nodes=[NodeRecord(i) for i in range(n)])
    pairs = set()

    def add_edge(a, b):
        pairs.add((min(a, b), max(a, b)))
        topo.links.append((a, b, props(utilization=float(rng.randint(1, 100)))))

    order = list(range(n))
    rng.shuffle(order)
    for i in range(1, n):
        add_edge(order[i], order[rng.randrange(i)])
    target = max(n - 1, int(n * avg_degree / 2))
    attempts = 0
    while len(pairs) < target and attempts < 20 * target:
        attempts += 1
        a, b = rng.randrange(n), rng.randrange(n)
        if a != b and (min(a, b), max(a, b)) not in pairs:
            add_edge(a, b)
    return topo


def random_events(rng: random.Random, graph: GraphStore, count: int) -> list:
    """A stream of add/remove/update link events valid against the evolving
    graph (the caller applies each event before the next is drawn)."""
    events = []
    nodes = sorted(graph.nodes)
    live = {}
    for (a, b, w), _m in graph.edge_items():
        if a < b:
            live[(a, b)] = w
    for _ in range(count):
        roll = rng.random()
        if roll < 0.4 and len(live) > 1:
            a, b = rng.choice(sorted(live))
            del live[(a, b)]
            events.append(RemoveLink(a, b))
        elif roll < 0.6 and live:
            a, b = rng.choice(sorted(live))
            events.append(UpdateWeight(a, b, float(rng.randint(1, 100))))
        else:
            for _ in range(50):
                a, b = rng.randrange(len(nodes)), rng.randrange(len(nodes))
                a, b = nodes[a], nodes[b]
                if a != b and (min(a, b), max(a, b)) not in live:
                    break
            else:
                continue
            ev = AddLink(min(a, b), max(a, b),
                         props(utilization=float(rng.randint(1, 100))))
            live[(ev.a, ev.b)] = None
            events.append(ev)
    return events


@pytest.fixture
def sd_strategy():
    return builtin("sd_utilization")


@pytest.fixture
def hop_strategy():
    return builtin("hop_count")


@pytest.fixture
def triangle_graph(sd_strategy):
    return build_graph(triangle(), sd_strategy.link_cost)
