import random

import pytest

from deltapath import oracle, policy_engine as pe
from deltapath.errors import (
    NoBackupError,
    PolicySyntaxError,
    UnknownNodeError,
    UnreachableError,
)
from deltapath.graph_model import RemoveLink, build_graph
from deltapath.path_retrieval import path_links, retrieve
from deltapath.routing_core import initialize, step_epoch
from deltapath.strategy import builtin

from conftest import (
    random_connected_topology,
    random_events,
    triangle,
    utilization_topology,
)

SD = builtin("sd_utilization")


def engine_for(topo):
    g = build_graph(topo, SD.link_cost)
    rules = initialize(g, SD)
    return g, rules, pe.PolicyEngine(g, rules, SD)


class TestParse:
    def test_waypoint_form(self):
        p = pe.parse_policy(1, "10 : 42 : 77")
        assert p == pe.Policy(1, 10, 77, pe.Waypoints((42,)))

    def test_not_form(self):
        p = pe.parse_policy(2, "10 : !42 : 77")
        assert p == pe.Policy(2, 10, 77, pe.NotNodes(frozenset({42})))

    def test_backup_form(self):
        p = pe.parse_policy(3, "10 : backup : 77")
        assert p == pe.Policy(3, 10, 77, pe.PathRule.BACKUP)
        assert pe.parse_policy(4, "10:2way:77").body is pe.PathRule.TWO_WAY
        assert pe.parse_policy(5, "10:redundant:77").body is pe.PathRule.REDUNDANT

    def test_multiple_constraints_in_either_spelling(self):
        assert pe.parse_policy(6, "1 : 2 : 3 : 4").body == pe.Waypoints((2, 3))
        assert pe.parse_policy(7, "1 : 2 3 : 4").body == pe.Waypoints((2, 3))
        assert pe.parse_policy(8, "1 : !2 !3 : 4").body == pe.NotNodes(
            frozenset({2, 3})
        )

    def test_degenerate_empty_constraints(self):
        assert pe.parse_policy(9, "1 :: 4").body == pe.Waypoints(())

    @pytest.mark.parametrize(
        "text",
        ["10", "a : 1 : b", "1 : 2 !3 : 4", "1 : !x : 4", "1 : !1 : 4"],
    )
    def test_rejects_bad_grammar(self, text):
        with pytest.raises(PolicySyntaxError):
            pe.parse_policy(0, text)

    def test_unknown_nodes_rejected_at_add(self, triangle_graph):
        rules = initialize(triangle_graph, SD)
        engine = pe.PolicyEngine(triangle_graph, rules, SD)
        with pytest.raises(UnknownNodeError):
            engine.add(pe.parse_policy(1, "0 : 9 : 2"))
        with pytest.raises(UnknownNodeError):
            engine.add(pe.parse_policy(2, "0 : !9 : 2"))


class TestWaypoints:
    def test_single_waypoint_on_triangle(self):
        _g, _rules, engine = engine_for(triangle())
        engine.add(pe.parse_policy(1, "0 : 1 : 2"))
        res = engine.evaluate(1)
        assert res.paths[0].hops == (0, 1, 2)
        assert res.paths[0].cost == 2.0
        assert not res.revisits

    def test_no_constraints_reduces_to_plain_retrieval(self):
        _g, rules, engine = engine_for(triangle())
        engine.add(pe.parse_policy(1, "0 :: 2"))
        res = engine.evaluate(1)
        assert res.paths[0] == retrieve(rules.established_rules(), 0, 2)

    def test_five_waypoints_visit_in_order_with_oracle_segments(self):
        rng = random.Random(4)
        topo = random_connected_topology(rng, 20)
        g, _rules, engine = engine_for(topo)
        want = oracle.apsp_additive(g, SD)
        stops = [0, 5, 11, 3, 17, 8, 19]
        engine.add(pe.parse_policy(1, "0 : 5 11 3 17 8 : 19"))
        res = engine.evaluate(1)
        hops = res.paths[0].hops
        # waypoints appear in order
        pos = 0
        for stop in stops:
            pos = hops.index(stop, pos)
        # each segment is the oracle optimum; total cost is their sum
        assert res.paths[0].cost == pytest.approx(
            sum(want.cost_of(a, b) for a, b in zip(stops, stops[1:]))
        )

    def test_revisits_are_flagged(self):
        # path graph: going 0 -> 2 -> 1 must revisit node 1
        topo = utilization_topology(3, [(0, 1, 1), (1, 2, 1)])
        _g, _rules, engine = engine_for(topo)
        engine.add(pe.parse_policy(1, "0 : 2 : 1"))
        res = engine.evaluate(1)
        assert res.paths[0].hops == (0, 1, 2, 1)
        assert res.revisits


class TestNotConstraints:
    def test_excluding_the_relay_takes_the_heavy_edge(self):
        _g, _rules, engine = engine_for(triangle())
        engine.add(pe.parse_policy(1, "0 : !1 : 2"))
        res = engine.evaluate(1)
        assert res.paths[0].hops == (0, 2)
        assert res.paths[0].cost == 3.0

    def test_excluding_an_off_path_node_changes_nothing(self):
        topo = utilization_topology(4, [(0, 1, 1), (1, 2, 1), (0, 3, 5), (3, 2, 5)])
        _g, rules, engine = engine_for(topo)
        engine.add(pe.parse_policy(1, "0 : !3 : 2"))
        res = engine.evaluate(1)
        assert res.paths[0] == retrieve(rules.established_rules(), 0, 2)

    def test_excluding_a_cut_vertex_is_unreachable(self):
        topo = utilization_topology(3, [(0, 1, 1), (1, 2, 1)])
        _g, _rules, engine = engine_for(topo)
        engine.add(pe.parse_policy(1, "0 : !1 : 2"))
        with pytest.raises(UnreachableError):
            engine.evaluate(1)

    def test_excluded_node_already_gone_from_base(self):
        topo = utilization_topology(4, [(0, 1, 1), (1, 2, 1), (0, 3, 5), (3, 2, 5)])
        g, rules, engine = engine_for(topo)
        engine.add(pe.parse_policy(1, "0 : !3 : 2"))
        step_epoch(rules, g, [pe.RemoveNode(3)])
        engine.on_epoch([pe.RemoveNode(3)])
        res = engine.evaluate(1)  # fork built after the node vanished
        assert res.paths[0].hops == (0, 1, 2)

    def test_forks_are_shared_per_exclusion_set(self):
        _g, _rules, engine = engine_for(triangle())
        engine.add(pe.parse_policy(1, "0 : !1 : 2"))
        engine.add(pe.parse_policy(2, "2 : !1 : 0"))
        engine.evaluate(1)
        engine.evaluate(2)
        assert engine.fork_count() == 1
        engine.remove(1)
        assert engine.fork_count() == 1
        engine.remove(2)
        assert engine.fork_count() == 0

    def test_fork_tracks_epochs_and_suppresses_excluded_events(self):
        rng = random.Random(12)
        topo = random_connected_topology(rng, 12)
        g, rules, engine = engine_for(topo)
        engine.add(pe.parse_policy(1, "0 : !5 : 9"))
        engine.evaluate(1)
        fork = engine._forks[frozenset({5})]
        for ev in random_events(rng, g, 15):
            batch = step_epoch(rules, g, [ev])
            engine.on_epoch([ev])
            # fork view always equals a fresh solve of (graph minus node 5)
            pruned = g.fork()
            pruned.apply_deltas(
                pruned.ingest_event(pe.RemoveNode(5), SD.link_cost)
            )
            want = oracle.apsp_additive(pruned, SD)
            assert oracle.compare_view(want, fork.rules.established_rules()) == []

    def test_event_inside_excluded_star_leaves_fork_untouched(self):
        topo = utilization_topology(4, [(0, 1, 1), (1, 2, 1), (1, 3, 1), (0, 2, 4)])
        g, rules, engine = engine_for(topo)
        engine.add(pe.parse_policy(1, "0 : !3 : 2"))
        engine.evaluate(1)
        fork = engine._forks[frozenset({3})]
        before = dict(fork.rules._est)
        step_epoch(rules, g, [RemoveLink(1, 3)])
        engine.on_epoch([RemoveLink(1, 3)])
        assert fork.rules._est == before


class TestBackup:
    def test_square_gives_the_two_disjoint_sides(self):
        topo = utilization_topology(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 0, 1)])
        _g, _rules, engine = engine_for(topo)
        engine.add(pe.parse_policy(1, "0 : backup : 2"))
        res = engine.evaluate(1)
        primary, backup = res.paths
        assert primary.hops == (0, 1, 2)  # tie broken toward smaller next id
        assert backup.hops == (0, 3, 2)
        assert res.kind == "failover"

    def test_triangle_backup_is_the_direct_link(self):
        _g, _rules, engine = engine_for(triangle())
        engine.add(pe.parse_policy(1, "0 : backup : 2"))
        primary, backup = engine.evaluate(1).paths
        assert primary.hops == (0, 1, 2) and primary.cost == 2.0
        assert backup.hops == (0, 2) and backup.cost == 3.0

    def test_path_graph_has_no_backup(self):
        topo = utilization_topology(3, [(0, 1, 1), (1, 2, 1)])
        _g, _rules, engine = engine_for(topo)
        engine.add(pe.parse_policy(1, "0 : backup : 2"))
        with pytest.raises(NoBackupError):
            engine.evaluate(1)

    def test_disjointness_on_random_graphs(self):
        rng = random.Random(77)
        hits = 0
        for seed in range(6):
            topo = random_connected_topology(random.Random(seed), 12, avg_degree=4.0)
            _g, _rules, engine = engine_for(topo)
            s, t = rng.sample(range(12), 2)
            engine.add(pe.parse_policy(1, f"{s} : 2way : {t}"))
            try:
                res = engine.evaluate(1)
            except NoBackupError:
                continue
            hits += 1
            primary, backup = res.paths
            undirected = {frozenset(e) for e in path_links(primary)}
            assert all(frozenset(e) not in undirected for e in path_links(backup))
            assert res.kind == "split"
        assert hits >= 3  # the fixture actually exercises the property

    def test_base_store_is_untouched_by_backup_eval(self):
        g, rules, engine = engine_for(triangle())
        before = dict(rules._est)
        engine.add(pe.parse_policy(1, "0 : redundant : 2"))
        res = engine.evaluate(1)
        assert res.kind == "duplicate"
        assert rules._est == before
        assert g.multiplicity(0, 1, 1.0) == 1
