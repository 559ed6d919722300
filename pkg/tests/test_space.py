"""Grid geometry: depth formula, expansion steps, reachability, capacity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activenas import (
    ArchPoint,
    BlockSpec,
    SearchGrid,
    capacity_report,
    depth,
    edge_list,
    expand_depth,
    expand_stacks,
    neighbors,
    verify_reachability,
)

BLOCK = BlockSpec(beta=2, alpha=2, base_width=64)


def brute_force_stack_expansion(arch, n_blocks=64):
    """Independent argmin: shallowest (i', j+1) strictly deeper than arch."""
    best = None
    for i2 in range(1, n_blocks + 1):
        cand = ArchPoint(i2, arch.j + 1)
        if depth(cand, BLOCK) > depth(arch, BLOCK):
            if best is None or depth(cand, BLOCK) < depth(best, BLOCK):
                best = cand
    return best


class TestDepth:
    def test_resnet18_coordinates(self):
        assert depth(ArchPoint(2, 4), BLOCK) == 18

    def test_smallest(self):
        assert depth(ArchPoint(1, 1), BLOCK) == 4

    def test_largest_reference_grid(self):
        assert depth(ArchPoint(12, 5), BLOCK) == 122

    @given(st.integers(1, 20), st.integers(1, 8), st.integers(1, 5), st.integers(1, 4))
    def test_formula(self, i, j, beta, alpha):
        block = BlockSpec(beta=beta, alpha=alpha)
        assert depth(ArchPoint(i, j), block) == i * j * beta + alpha


class TestExpandDepth:
    @pytest.mark.parametrize(
        "src,dst", [((1, 1), (2, 1)), ((2, 4), (3, 4)), ((11, 5), (12, 5))]
    )
    def test_examples(self, src, dst):
        assert expand_depth(ArchPoint(*src)) == ArchPoint(*dst)

    @given(st.integers(1, 30), st.integers(1, 10))
    def test_depth_grows_by_j_beta(self, i, j):
        a = ArchPoint(i, j)
        assert depth(expand_depth(a), BLOCK) - depth(a, BLOCK) == j * BLOCK.beta


class TestExpandStacks:
    @pytest.mark.parametrize(
        "src,dst", [((2, 4), (2, 5)), ((1, 1), (1, 2)), ((5, 2), (4, 3))]
    )
    def test_examples(self, src, dst):
        assert expand_stacks(ArchPoint(*src)) == ArchPoint(*dst)

    @given(st.integers(1, 30), st.integers(1, 10))
    def test_strictly_deeper(self, i, j):
        a = ArchPoint(i, j)
        assert depth(expand_stacks(a), BLOCK) > depth(a, BLOCK)

    @given(st.integers(1, 30), st.integers(1, 10))
    def test_minimality_against_brute_force(self, i, j):
        a = ArchPoint(i, j)
        got = expand_stacks(a)
        want = brute_force_stack_expansion(a)
        assert depth(got, BLOCK) == depth(want, BLOCK)
        assert got == want

    def test_minimality_whole_reference_grid(self):
        for i in range(1, 13):
            for j in range(1, 6):
                a = ArchPoint(i, j)
                assert expand_stacks(a) == brute_force_stack_expansion(a)


class TestNeighbors:
    def setup_method(self):
        self.grid = SearchGrid(BLOCK, 12, 5)

    def test_interior(self):
        got = neighbors(self.grid, ArchPoint(2, 4))
        assert got == {ArchPoint(2, 4), ArchPoint(3, 4), ArchPoint(2, 5)}

    def test_corner_is_singleton(self):
        assert neighbors(self.grid, ArchPoint(12, 5)) == {ArchPoint(12, 5)}

    def test_depth_expansion_clipped(self):
        got = neighbors(self.grid, ArchPoint(12, 4))
        assert got == {ArchPoint(12, 4), ArchPoint(10, 5)}

    def test_outside_grid_rejected(self):
        with pytest.raises(ValueError):
            neighbors(self.grid, ArchPoint(13, 1))

    @given(st.integers(1, 12), st.integers(1, 5))
    def test_always_contains_self_and_bounded(self, i, j):
        got = neighbors(self.grid, ArchPoint(i, j))
        assert ArchPoint(i, j) in got
        assert 1 <= len(got) <= 3
        assert all(n in self.grid for n in got)


class TestReachability:
    @pytest.mark.parametrize("nb,ns", [(12, 5), (1, 1), (5, 4)])
    def test_reference_grids(self, nb, ns):
        ok, unreachable = verify_reachability(SearchGrid(BLOCK, nb, ns))
        assert ok and not unreachable

    def test_all_subgrids_up_to_12x5(self):
        for nb in range(1, 13):
            for ns in range(1, 6):
                ok, unreachable = verify_reachability(SearchGrid(BLOCK, nb, ns))
                assert ok, f"grid {nb}x{ns}: unreachable {unreachable}"

    def test_edges_strictly_increase_depth(self):
        grid = SearchGrid(BLOCK, 12, 5)
        for src, dst in edge_list(grid):
            assert depth(dst, BLOCK) > depth(src, BLOCK)


class TestValidation:
    def test_arch_coordinates_positive(self):
        with pytest.raises(ValueError):
            ArchPoint(0, 1)
        with pytest.raises(ValueError):
            ArchPoint(1, 0)

    def test_block_fields_positive(self):
        with pytest.raises(ValueError):
            BlockSpec(beta=0, alpha=2)
        with pytest.raises(ValueError):
            BlockSpec(beta=2, alpha=2, base_width=0)

    def test_grid_at_least_1x1(self):
        with pytest.raises(ValueError):
            SearchGrid(BLOCK, 0, 3)

    def test_points_row_order(self):
        grid = SearchGrid(BLOCK, 2, 2)
        assert grid.points() == [
            ArchPoint(1, 1), ArchPoint(2, 1), ArchPoint(1, 2), ArchPoint(2, 2),
        ]
        assert grid.largest == ArchPoint(2, 2)


class TestCapacity:
    def setup_method(self):
        self.block = BlockSpec(beta=2, alpha=2, base_width=4)
        self.grid = SearchGrid(self.block, 4, 3)

    def test_tiny_net_hand_count(self):
        # input dim 2, width 4, 2 classes, arch (1,1):
        #   initial affine 2*4+4 = 12, block layers 4*4+4 = 20 each (two),
        #   classifier 4*2+2 = 10; total 62.  units: 4+4+4+2 = 14.
        # cumulative params at the counted layers: 12, 32, 52, 62 -> sum 158.
        cap = capacity_report(self.grid, ArchPoint(1, 1), (2,), 2)
        assert cap.params_w == 62
        assert cap.units_u == 14
        assert cap.depth_layers == 4
        assert cap.lbar == pytest.approx(158 / 62)

    def test_depth_layers_match_formula(self):
        for arch in self.grid.points():
            cap = capacity_report(self.grid, arch, (2,), 2)
            assert cap.depth_layers == depth(arch, self.block)

    def test_lbar_range(self):
        for arch in self.grid.points():
            cap = capacity_report(self.grid, arch, (2,), 2)
            assert 1.0 <= cap.lbar <= cap.depth_layers

    def test_score_formula(self):
        cap = capacity_report(self.grid, ArchPoint(1, 1), (2,), 2)
        assert cap.score == pytest.approx(cap.lbar * cap.params_w * np.log2(cap.units_u))

    def test_width_doubling_grows_score(self):
        wide = SearchGrid(BlockSpec(beta=2, alpha=2, base_width=8), 4, 3)
        small = capacity_report(self.grid, ArchPoint(2, 2), (2,), 2)
        big = capacity_report(wide, ArchPoint(2, 2), (2,), 2)
        assert big.params_w > small.params_w
        assert big.score > small.score

    def test_depth_expansion_adds_j_beta_layers(self):
        a = capacity_report(self.grid, ArchPoint(2, 3), (2,), 2)
        b = capacity_report(self.grid, ArchPoint(3, 3), (2,), 2)
        assert b.depth_layers - a.depth_layers == 3 * self.block.beta
