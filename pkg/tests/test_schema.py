"""Unit and property tests for the route data model."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routecast.schema import (
    Cycle,
    DuplicateProduct,
    EmptyReactants,
    InvalidToken,
    MissingTargetStep,
    OrphanStep,
    ReactionStep,
    Route,
    RouteError,
    SharedIntermediate,
    Topology,
    build_route,
    canonical_key,
    escape_token,
    leaves,
    molecule_token,
    route_stats,
    subtree_keys,
)

from helpers import (
    chain_route,
    fig1_route,
    oracle_leaf_tokens,
    oracle_longest_path,
    random_route,
)


class TestMoleculeToken:
    def test_trims_surrounding_whitespace(self):
        assert molecule_token("  CCO  ") == "CCO"

    def test_empty_rejected(self):
        with pytest.raises(InvalidToken):
            molecule_token("   ")

    @pytest.mark.parametrize("bad", ["a b", "a>b", "a.b", "a;b", "a|b", "a\tb"])
    def test_reserved_characters_rejected(self, bad):
        with pytest.raises(InvalidToken):
            molecule_token(bad)

    def test_smiles_punctuation_allowed(self):
        # parentheses, %, commas etc. are legal token content
        assert molecule_token("CC(=O)O%10,") == "CC(=O)O%10,"


class TestBuildRoute:
    def test_reference_two_step_route(self, fig1):
        assert fig1.target == "T"
        assert len(fig1.steps) == 2

    def test_degenerate_empty_route(self):
        route = build_route("T")
        assert route.is_degenerate
        assert route.steps == ()

    def test_two_step_cycle(self):
        with pytest.raises(Cycle):
            build_route("T", [ReactionStep("T", ("I",)), ReactionStep("I", ("T",))])

    def test_self_loop_rejected_at_step_level(self):
        with pytest.raises(Cycle):
            ReactionStep("T", ("T",))

    def test_empty_reactants(self):
        with pytest.raises(EmptyReactants):
            ReactionStep("T", ())

    def test_duplicate_product(self):
        with pytest.raises(DuplicateProduct):
            build_route(
                "T", [ReactionStep("T", ("A",)), ReactionStep("A", ("B",)), ReactionStep("A", ("C",))]
            )

    def test_missing_target_step(self):
        with pytest.raises(MissingTargetStep):
            build_route("T", [ReactionStep("A", ("B",))])

    def test_orphan_step(self):
        with pytest.raises(OrphanStep):
            build_route("T", [ReactionStep("T", ("A",)), ReactionStep("X", ("B",))])

    def test_shared_intermediate(self):
        # A is produced once but consumed by two steps: a DAG, not a tree
        with pytest.raises(SharedIntermediate):
            build_route(
                "T",
                [
                    ReactionStep("T", ("A", "B")),
                    ReactionStep("B", ("A",)),
                    ReactionStep("A", ("L",)),
                ],
            )

    def test_detached_cyclic_component(self):
        with pytest.raises(Cycle):
            build_route(
                "T",
                [
                    ReactionStep("T", ("L",)),
                    ReactionStep("X", ("Y",)),
                    ReactionStep("Y", ("X",)),
                ],
            )

    def test_leaf_repeating_ancestor_token_is_cycle(self):
        with pytest.raises(Cycle):
            build_route("A", [ReactionStep("A", ("B",)), ReactionStep("B", ("A",))])

    def test_metadata_is_immutable(self, fig1):
        with pytest.raises(TypeError):
            fig1.metadata["x"] = "y"

    def test_route_is_frozen(self, fig1):
        with pytest.raises(AttributeError):
            fig1.target = "X"

    def test_mutations_of_valid_route_rejected(self, rng):
        """Every single-invariant mutation of a valid route must be rejected."""
        for _ in range(25):
            route = random_route(rng, rng.randint(2, 5))
            steps = list(route.steps)
            produced = {s.product for s in steps}

            # duplicate an existing product under a new step
            victim = rng.choice(steps)
            with pytest.raises(RouteError):
                build_route(
                    route.target,
                    steps + [ReactionStep(victim.product, ("Znew",))],
                    route.metadata,
                )

            # orphan: produce a token nobody consumes
            with pytest.raises(RouteError):
                build_route(
                    route.target, steps + [ReactionStep("Zorphan", ("Zfeed",))], route.metadata
                )

            # cycle: make some leaf produce the target
            some_leaf = next(
                r for s in steps for r in s.reactants if r not in produced
            )
            with pytest.raises(RouteError):
                build_route(
                    route.target,
                    steps + [ReactionStep(some_leaf, (route.target,))],
                    route.metadata,
                )


class TestCanonicalKey:
    def test_reference_route_key(self, fig1):
        # hand-applied grammar: children sorted lexicographically
        assert canonical_key(fig1) == "T(I(L1,L2),L3)"

    def test_reactant_order_irrelevant(self):
        a = build_route("T", [ReactionStep("T", ("I", "L3")), ReactionStep("I", ("L1", "L2"))])
        b = build_route("T", [ReactionStep("T", ("L3", "I")), ReactionStep("I", ("L2", "L1"))])
        assert canonical_key(a) == canonical_key(b)

    def test_step_order_irrelevant(self):
        a = build_route("T", [ReactionStep("T", ("I", "L3")), ReactionStep("I", ("L1", "L2"))])
        b = build_route("T", [ReactionStep("I", ("L1", "L2")), ReactionStep("T", ("I", "L3"))])
        assert canonical_key(a) == canonical_key(b)

    def test_different_topology_differs(self, fig1):
        shallow = build_route("T", [ReactionStep("T", ("I", "L3"))])
        assert canonical_key(shallow) == "T(I,L3)"
        assert canonical_key(shallow) != canonical_key(fig1)

    def test_metadata_never_affects_key(self, fig1):
        tagged = build_route("T", fig1.steps, {"model": "m1", "rank": "3"})
        assert canonical_key(tagged) == canonical_key(fig1)

    def test_grammar_characters_escaped(self):
        route = build_route("a(b", [ReactionStep("a(b", ("x,y", "z)w", "p%q"))])
        key = canonical_key(route)
        assert key == "a%28b(p%25q,x%2Cy,z%29w)"

    def test_escaping_is_injective(self):
        # a token containing a literal "%28" must not collide with "("
        r1 = build_route("T", [ReactionStep("T", ("a(",))])
        r2 = build_route("T", [ReactionStep("T", ("a%28",))])
        assert canonical_key(r1) != canonical_key(r2)

    def test_degenerate_key_is_token(self):
        assert canonical_key(build_route("T")) == "T"

    def test_duplicate_leaves_kept_as_multiset(self):
        route = build_route("T", [ReactionStep("T", ("A", "A"))])
        assert canonical_key(route) == "T(A,A)"

    def test_subtree_keys(self, fig1):
        keys = subtree_keys(fig1)
        assert keys["T"] == canonical_key(fig1)
        assert keys["I"] == "I(L1,L2)"
        assert "L1" not in keys

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), depth=st.integers(1, 6))
    def test_permutation_invariance_property(self, seed, depth):
        """Permuting reactant lists and step order never changes the key."""
        gen = random.Random(seed)
        route = random_route(gen, depth)
        shuffled_steps = [
            ReactionStep(s.product, tuple(gen.sample(s.reactants, len(s.reactants))))
            for s in route.steps
        ]
        gen.shuffle(shuffled_steps)
        permuted = build_route(route.target, shuffled_steps, route.metadata)
        assert canonical_key(permuted) == canonical_key(route)


class TestRouteStats:
    def test_reference_route(self, fig1):
        stats = route_stats(fig1)
        assert stats.length == 2
        assert stats.topology is Topology.LINEAR
        assert stats.n_steps == 2
        assert stats.n_leaves == 3

    def test_convergent_two_intermediates(self):
        route = build_route(
            "T",
            [
                ReactionStep("T", ("I1", "I2")),
                ReactionStep("I1", ("L1",)),
                ReactionStep("I2", ("L2",)),
            ],
        )
        stats = route_stats(route)
        assert stats.length == 2
        assert stats.topology is Topology.CONVERGENT

    def test_degenerate(self):
        stats = route_stats(build_route("T"))
        assert stats.length == 0
        assert stats.topology is Topology.LINEAR
        assert stats.n_steps == 0
        assert stats.n_leaves == 1

    def test_length_le_n_steps(self, rng):
        for _ in range(30):
            route = random_route(rng, rng.randint(1, 6))
            stats = route_stats(route)
            assert stats.length <= stats.n_steps
            assert (stats.length == 0) == route.is_degenerate

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), depth=st.integers(1, 8))
    def test_length_matches_brute_force_longest_path(self, seed, depth):
        route = random_route(random.Random(seed), depth)
        assert route_stats(route).length == oracle_longest_path(route) == depth


class TestLeaves:
    def test_reference_route(self, fig1):
        assert leaves(fig1) == {"L1", "L2", "L3"}

    def test_shallow_route(self):
        assert leaves(build_route("T", [ReactionStep("T", ("I", "L3"))])) == {"I", "L3"}

    def test_degenerate(self):
        assert leaves(build_route("T")) == {"T"}

    def test_leaves_and_products_partition_roles(self, rng):
        for _ in range(30):
            route = random_route(rng, rng.randint(1, 6))
            produced = {s.product for s in route.steps}
            leaf_set = leaves(route)
            assert leaf_set
            assert leaf_set.isdisjoint(produced)
            assert leaf_set == oracle_leaf_tokens(route)


def test_escape_token_round_trips_plain_tokens():
    assert escape_token("CCO") == "CCO"
    assert escape_token("(%,)") == "%28%25%2C%29"


def test_chain_builder_helper():
    route = chain_route(["A", "B", "C", "D"])
    assert route_stats(route).length == 3
    assert leaves(route) == {"D"}
