"""Skeleton graph and joint-specific graph convolution.

Each graph layer learns one weight matrix per skeleton vertex. A vertex j
aggregates the batch-normalized per-vertex transforms of itself and its
neighbors, weighted by the symmetric-normalized adjacency
D^{-1/2} (A + I) D^{-1/2}, and applies ReLU. Batch-norm statistics are kept
per (vertex, channel) so vertices stay decoupled before aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError, ShapeMismatchError


@dataclass(frozen=True)
class SkeletonGraph:
    adjacency: np.ndarray   # (J, J) binary, symmetric, zero diagonal
    a_norm: np.ndarray      # (J, J) D^{-1/2} (A + I) D^{-1/2}
    neighbors: tuple[tuple[int, ...], ...]

    @property
    def num_vertices(self) -> int:
        return self.adjacency.shape[0]


def build_skeleton_graph(edges: list[tuple[int, int]],
                         num_vertices: int | None = None) -> SkeletonGraph:
    """Fixed graph from skeleton edges; raises ConfigError if disconnected."""
    if num_vertices is None:
        num_vertices = max(max(e) for e in edges) + 1
    adj = np.zeros((num_vertices, num_vertices), dtype=np.int64)
    for a, b in edges:
        if a == b or not (0 <= a < num_vertices and 0 <= b < num_vertices):
            raise ConfigError(f"bad edge ({a}, {b}) for {num_vertices} vertices")
        adj[a, b] = adj[b, a] = 1

    # connectivity check (single vertex with no edges counts as connected)
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for u in np.flatnonzero(adj[v]):
            if u not in seen:
                seen.add(int(u))
                stack.append(int(u))
    if len(seen) != num_vertices:
        raise ConfigError(f"graph is disconnected: reached {len(seen)}/{num_vertices} vertices")

    a_hat = adj + np.eye(num_vertices, dtype=np.int64)
    d_inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1).astype(np.float64))
    a_norm = d_inv_sqrt[:, None] * a_hat * d_inv_sqrt[None, :]
    neighbors = tuple(tuple(int(u) for u in np.flatnonzero(adj[v])) for v in range(num_vertices))
    return SkeletonGraph(adjacency=adj, a_norm=a_norm, neighbors=neighbors)


class JointGraphConv(nn.Module):
    """One graph-convolution layer with a separate weight matrix per vertex.

    out_j = ReLU(sum_{i in N_j + {j}} a_norm[j, i] * BN(W_i @ in_i))
    """

    def __init__(self, graph: SkeletonGraph, in_channels: int, out_channels: int,
                 relu: bool = True):
        super().__init__()
        j = graph.num_vertices
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.weight = nn.Parameter(torch.empty(j, out_channels, in_channels))
        with torch.no_grad():
            for v in range(j):  # per-vertex fan-in, not fan over the stacked tensor
                nn.init.kaiming_normal_(self.weight[v], mode="fan_in", nonlinearity="relu")
        self.bn = nn.BatchNorm1d(j * out_channels)
        self.relu = nn.ReLU(inplace=True) if relu else nn.Identity()
        self.register_buffer("a_norm", torch.as_tensor(graph.a_norm, dtype=torch.float32))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 3 or x.shape[1:] != (self.weight.shape[0], self.in_channels):
            raise ShapeMismatchError(
                f"expected (B, {self.weight.shape[0]}, {self.in_channels}), got {tuple(x.shape)}")
        b = x.shape[0]
        h = torch.einsum("joc,bjc->bjo", self.weight, x)
        h = self.bn(h.reshape(b, -1)).reshape(b, *h.shape[1:])
        out = torch.einsum("ji,bio->bjo", self.a_norm, h)
        return self.relu(out)


class GraphResidualBlock(nn.Module):
    """Two joint-specific graph convolutions with an identity skip."""

    def __init__(self, graph: SkeletonGraph, channels: int):
        super().__init__()
        self.conv1 = JointGraphConv(graph, channels, channels)
        self.conv2 = JointGraphConv(graph, channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(self.conv1(x))


class GraphNetwork(nn.Module):
    """One graph convolution block followed by four graph residual blocks."""

    def __init__(self, graph: SkeletonGraph, in_channels: int, hidden_channels: int,
                 num_residual: int = 4):
        super().__init__()
        self.input_block = JointGraphConv(graph, in_channels, hidden_channels)
        self.residual = nn.Sequential(
            *[GraphResidualBlock(graph, hidden_channels) for _ in range(num_residual)])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.residual(self.input_block(x))
