"""Architecture search grid: block specs, expansion steps, capacity accounting.

The search space is a rectangular grid of homogeneous architectures indexed by
(i, j) = (blocks per stack, number of stacks).  Edges between grid points are
the two minimal expansion steps (deepen one stack, or add a stack while
re-balancing block counts), which makes the grid a DAG rooted at (1, 1).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class ArchPoint:
    """Grid coordinates of one architecture: i blocks per stack, j stacks."""

    i: int
    j: int

    def __post_init__(self):
        if self.i < 1 or self.j < 1:
            raise ValueError(f"arch coordinates must be >= 1, got ({self.i}, {self.j})")


@dataclass(frozen=True)
class BlockSpec:
    """Static description of the repeated block family.

    beta is the number of parameterized layers inside one block, alpha the
    number of parameterized layers outside the stacks (initial block plus
    classification block).  base_width is the width of stack 1; each later
    stack doubles it.
    """

    beta: int
    alpha: int
    base_width: int = 64
    kind: str = "residual-dense"

    def __post_init__(self):
        if self.beta < 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.base_width < 1:
            raise ValueError(f"base_width must be >= 1, got {self.base_width}")


@dataclass(frozen=True)
class SearchGrid:
    """Rectangular search space spanned by (1,1) .. (n_blocks, n_stacks)."""

    block: BlockSpec
    n_blocks: int
    n_stacks: int

    def __post_init__(self):
        if self.n_blocks < 1 or self.n_stacks < 1:
            raise ValueError(
                f"grid must be at least 1x1, got {self.n_blocks}x{self.n_stacks}"
            )

    def __contains__(self, arch: ArchPoint) -> bool:
        return 1 <= arch.i <= self.n_blocks and 1 <= arch.j <= self.n_stacks

    def points(self) -> list[ArchPoint]:
        """All grid points in (j, i) row order."""
        return [
            ArchPoint(i, j)
            for j in range(1, self.n_stacks + 1)
            for i in range(1, self.n_blocks + 1)
        ]

    @property
    def largest(self) -> ArchPoint:
        return ArchPoint(self.n_blocks, self.n_stacks)


def depth(arch: ArchPoint, block: BlockSpec) -> int:
    """Number of parameterized layers: i*j*beta + alpha."""
    return arch.i * arch.j * block.beta + block.alpha


def expand_depth(arch: ArchPoint) -> ArchPoint:
    """Minimal expansion that keeps the stack count: one more block per stack."""
    return ArchPoint(arch.i + 1, arch.j)


def expand_stacks(arch: ArchPoint) -> ArchPoint:
    """Minimal expansion that adds a stack.

    The block count per stack is re-balanced to floor(i*j/(j+1)) + 1, the
    smallest value whose depth strictly exceeds the current depth.
    """
    return ArchPoint(arch.i * arch.j // (arch.j + 1) + 1, arch.j + 1)


def neighbors(grid: SearchGrid, arch: ArchPoint) -> set[ArchPoint]:
    """The candidate set for one search step: arch plus its in-grid expansions."""
    if arch not in grid:
        raise ValueError(f"{arch} lies outside the {grid.n_blocks}x{grid.n_stacks} grid")
    out = {arch}
    for nxt in (expand_depth(arch), expand_stacks(arch)):
        if nxt in grid:
            out.add(nxt)
    return out


def edge_list(grid: SearchGrid) -> list[tuple[ArchPoint, ArchPoint]]:
    """All expansion edges inside the grid, sorted by source then target."""
    edges = []
    for src in grid.points():
        for dst in sorted(neighbors(grid, src) - {src}):
            edges.append((src, dst))
    edges.sort()
    return edges


def verify_reachability(grid: SearchGrid) -> tuple[bool, set[ArchPoint]]:
    """BFS over expansion edges from (1,1); returns (all reached, unreachable set)."""
    seen = {ArchPoint(1, 1)}
    queue = deque(seen)
    while queue:
        node = queue.popleft()
        for nxt in neighbors(grid, node):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    unreachable = set(grid.points()) - seen
    return not unreachable, unreachable


@dataclass(frozen=True)
class CapacityReport:
    """Static capacity proxy of one instantiated architecture.

    lbar is the mean over counted layers of the cumulative parameter fraction
    (params from the input up to that layer, divided by the total), and the
    score lbar * W * log2(U) tracks how the VC-dimension of the family grows
    under grid expansions.
    """

    depth_layers: int
    params_w: int
    units_u: int
    lbar: float
    score: float


def capacity_report(grid: SearchGrid, arch: ArchPoint, input_shape, n_classes: int) -> CapacityReport:
    """Compute parameter/unit/depth accounting for arch without training.

    Layer parameters are taken from the model backend's static structure.
    Width-transition projections between stacks contribute parameters and
    units but are not counted as depth layers, matching the depth formula.
    """
    from .nets import NetworkSpec, layer_manifest

    if arch not in grid:
        raise ValueError(f"{arch} lies outside the {grid.n_blocks}x{grid.n_stacks} grid")
    spec = NetworkSpec(
        arch=arch, block=grid.block, input_shape=tuple(input_shape), n_classes=n_classes
    )
    manifest = layer_manifest(spec)
    params_w = sum(layer.params for layer in manifest)
    units_u = sum(layer.units for layer in manifest)
    cumulative = 0
    counted_cumulative = []
    for layer in manifest:
        cumulative += layer.params
        if layer.counted:
            counted_cumulative.append(cumulative)
    d = depth(arch, grid.block)
    if len(counted_cumulative) != d:
        raise AssertionError(
            f"backend structure has {len(counted_cumulative)} counted layers, "
            f"depth formula says {d}"
        )
    lbar = sum(counted_cumulative) / params_w
    score = lbar * params_w * math.log2(units_u)
    return CapacityReport(
        depth_layers=d, params_w=params_w, units_u=units_u, lbar=lbar, score=score
    )
