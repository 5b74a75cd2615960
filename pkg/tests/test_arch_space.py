"""DAG search space: sampling, mutation, decoding and cardinality."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nasuq.arch_space import (
    SearchSpace,
    decode,
    dense_space,
    hamming,
    mutate,
    random_sample,
    recurrent_space,
    skip_nodes,
)
from nasuq.errors import SpecError
from nasuq.nn import LayerSpec, build_network


def two_option_space(num_nodes=1):
    return SearchSpace("dense", num_nodes, (LayerSpec("dense", 4, "relu"), LayerSpec("dense", 8, "relu")), 2, 1)


def all_on(space, option):
    return (option,) * space.num_nodes + (1,) * len(space.skips)


class TestConstruction:
    def test_skip_node_rule(self):
        # destination k+1 gets sources k-3, k-2, k-1 (those >= 0)
        assert skip_nodes(5) == ((0, 2), (0, 3), (1, 3), (0, 4), (1, 4), (2, 4), (1, 5), (2, 5), (3, 5))
        assert skip_nodes(1) == ()

    @pytest.mark.parametrize(
        "space, n_options, expected",
        [(dense_space(3, 2), 11, 11**5 * 2**9), (recurrent_space(3, 2), 6, 6**5 * 2**9)],
    )
    def test_default_cardinality(self, space, n_options, expected):
        assert len(space.options) == n_options
        assert space.cardinality() == expected
        assert expected in (82_458_112, 3_981_312)

    def test_single_option_rejected(self):
        with pytest.raises(SpecError):
            SearchSpace("dense", 3, (LayerSpec("dense", 4, "relu"),), 2, 1)

    def test_dict_round_trip(self):
        space = recurrent_space(4, 7, num_nodes=3, widths=(8, 16))
        assert SearchSpace.from_dict(space.to_dict()) == space

    def test_out_of_range_config(self):
        space = dense_space(2, 1)
        cfg = list(random_sample(space, np.random.default_rng(0)))
        cfg[0] = 11
        with pytest.raises(SpecError):
            space.validate_config(cfg)
        with pytest.raises(SpecError):
            space.validate_config(cfg[:-1])


class TestSample:
    def test_binary_frequencies(self):
        space = two_option_space()
        rng = np.random.default_rng(0)
        draws = np.array([random_sample(space, rng)[0] for _ in range(10_000)])
        freq = np.bincount(draws, minlength=2) / draws.size
        np.testing.assert_allclose(freq, 0.5, atol=0.05)

    def test_uniform_chi_square(self):
        space = dense_space(2, 1)
        rng = np.random.default_rng(1)
        draws = np.array([random_sample(space, rng) for _ in range(20_000)])
        for col, n in zip(draws.T, space.sizes):
            counts = np.bincount(col, minlength=n)
            assert stats.chisquare(counts).pvalue > 1e-4

    def test_seed_reproduces(self):
        space = dense_space(2, 1)
        assert random_sample(space, np.random.default_rng(5)) == random_sample(space, np.random.default_rng(5))

    @pytest.mark.parametrize("space", [dense_space(3, 2), recurrent_space(3, 2, widths=(4, 8))])
    def test_sample_decodes_and_builds(self, space):
        rng = np.random.default_rng(2)
        for _ in range(200):
            spec = decode(space, random_sample(space, rng))
            assert all(s < d for s, d in spec.skips)
        build_network(decode(space, random_sample(space, rng)), 0)


class TestMutate:
    def test_exclusion_rule(self):
        space = SearchSpace("dense", 3, tuple(LayerSpec("dense", w, "relu") for w in (4, 8, 16)), 1, 1)
        parent = (2, 0, 1) + (0,) * len(space.skips)
        rng = np.random.default_rng(0)
        seen = set()
        for _ in range(2000):
            child = mutate(parent, space, rng)
            if child[1] != parent[1]:
                seen.add(child[:3])
        assert seen == {(2, 1, 1), (2, 2, 1)}

    def test_hamming_one(self):
        space = dense_space(2, 1)
        rng = np.random.default_rng(3)
        for _ in range(10_000):
            parent = random_sample(space, rng)
            child = mutate(parent, space, rng)
            assert hamming(parent, child) == 1
            space.validate_config(child)

    def test_binary_skip_flips(self):
        space = dense_space(2, 1)
        rng = np.random.default_rng(4)
        for _ in range(500):
            parent = random_sample(space, rng)
            child = mutate(parent, space, rng)
            i = next(k for k in range(len(parent)) if parent[k] != child[k])
            if i >= space.num_nodes:
                assert child[i] == 1 - parent[i]

    @pytest.mark.parametrize("seed", range(5))
    def test_mutation_reversible(self, seed):
        space = recurrent_space(2, 1)
        rng = np.random.default_rng(seed)
        parent = random_sample(space, rng)
        child = mutate(parent, space, rng)
        back = {mutate(child, space, rng) for _ in range(3000)}
        assert parent in back


class TestDecode:
    def test_all_identity(self):
        space = dense_space(3, 2)
        spec = decode(space, (0,) * space.n_decisions)
        assert spec.layers == () and spec.skips == ()
        assert (spec.input_dim, spec.output_dim) == (3, 2)

    def test_all_skips_enabled(self):
        space = dense_space(3, 2)
        spec = decode(space, all_on(space, 1))
        assert len(spec.layers) == 5
        assert len(spec.skips) == len(skip_nodes(5)) == 9
        assert set(spec.skips) == set(skip_nodes(5))

    def test_active_width_changes_spec(self):
        space = dense_space(3, 2)
        a = (1, 3, 1, 1, 1) + (0,) * 9
        b = (1, 5, 1, 1, 1) + (0,) * 9
        assert decode(space, a) != decode(space, b)

    def test_identity_reroutes(self):
        space = dense_space(2, 1)
        # nodes 1..5 with node 3 identity; skip (1, 3) lands on node 4 (new index 3),
        # skip (3, 5) starts at node 2 (new index 2)
        cfg = [1, 1, 0, 1, 1] + [0] * 9
        cfg[5 + skip_nodes(5).index((1, 3))] = 1
        cfg[5 + skip_nodes(5).index((3, 5))] = 1
        spec = decode(space, cfg)
        assert len(spec.layers) == 4
        assert set(spec.skips) == {(1, 3), (2, 4)}

    def test_trailing_identity_drops_edge(self):
        space = dense_space(2, 1, num_nodes=3)
        cfg = [1, 1, 0] + [0] * len(space.skips)
        cfg[3 + space.skips.index((1, 3))] = 1
        spec = decode(space, cfg)
        assert spec.skips == ()

    def test_recurrent_sequence_flag(self):
        space = recurrent_space(2, 3)
        spec = decode(space, all_on(space, 2))
        assert spec.sequence and all(l.kind == "recurrent" for l in spec.layers)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_acyclic(self, seed):
        space = dense_space(2, 1)
        spec = decode(space, random_sample(space, np.random.default_rng(seed)))
        n = len(spec.layers)
        assert all(0 <= s < d <= n for s, d in spec.skips)
        assert len(set(spec.skips)) == len(spec.skips)
