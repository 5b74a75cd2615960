"""DAG architecture search space: variable nodes plus binary skip nodes.

Nodes are numbered as in :class:`~nasuq.nn.NetworkSpec`: 0 is the input and
``1..n`` are the variable nodes. For every consecutive pair of variable nodes
``(k, k+1)`` there are three skip nodes connecting ``k-3``, ``k-2`` and
``k-1`` to ``k+1``; those whose source would fall before the input node are
left out.

An architecture configuration is a tuple of ints: one option index for each
variable node, followed by one 0/1 entry per skip node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import SpecError
from .nn import LayerSpec, NetworkSpec

DEFAULT_WIDTHS = (16, 32, 64, 128, 256)
DEFAULT_ACTIVATIONS = ("relu", "tanh")
SKIP_OFFSETS = (4, 3, 2)  # source = destination - offset, i.e. k-3, k-2, k-1 for destination k+1


def skip_nodes(num_nodes):
    out = []
    for dst in range(2, num_nodes + 1):
        for off in SKIP_OFFSETS:
            src = dst - off
            if src >= 0:
                out.append((src, dst))
    return tuple(out)


@dataclass(frozen=True)
class SearchSpace:
    kind: str
    num_nodes: int
    options: tuple
    input_dim: int
    output_dim: int

    def __post_init__(self):
        if self.kind not in ("dense", "recurrent"):
            raise SpecError(f"unknown search-space kind {self.kind!r}")
        opts = tuple(o if isinstance(o, LayerSpec) else LayerSpec(**o) for o in self.options)
        object.__setattr__(self, "options", opts)
        if self.num_nodes < 1:
            raise SpecError("search space needs at least one variable node")
        if len(opts) < 2:
            raise SpecError("every variable node needs at least two options")
        if len(set(opts)) != len(opts):
            raise SpecError("duplicate layer options")

    @property
    def sequence(self):
        return self.kind == "recurrent"

    @property
    def skips(self):
        return skip_nodes(self.num_nodes)

    @property
    def sizes(self):
        """Option count of each decision variable, in configuration order."""
        return (len(self.options),) * self.num_nodes + (2,) * len(self.skips)

    @property
    def n_decisions(self):
        return self.num_nodes + len(self.skips)

    def cardinality(self):
        return math.prod(self.sizes)

    def validate_config(self, cfg):
        cfg = tuple(int(v) for v in cfg)
        if len(cfg) != self.n_decisions:
            raise SpecError(f"config has {len(cfg)} entries, space has {self.n_decisions}")
        for i, (v, n) in enumerate(zip(cfg, self.sizes)):
            if not 0 <= v < n:
                raise SpecError(f"decision {i}: value {v} outside [0, {n})")
        return cfg

    def to_dict(self):
        return {
            "kind": self.kind,
            "num_nodes": self.num_nodes,
            "options": [o.to_dict() for o in self.options],
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["num_nodes"], tuple(LayerSpec(**o) for o in d["options"]), d["input_dim"], d["output_dim"])


def dense_space(input_dim, output_dim, num_nodes=5, widths=DEFAULT_WIDTHS, activations=DEFAULT_ACTIVATIONS):
    opts = [LayerSpec("identity")]
    opts += [LayerSpec("dense", w, a) for w in widths for a in activations]
    return SearchSpace("dense", num_nodes, tuple(opts), input_dim, output_dim)


def recurrent_space(input_dim, output_dim, num_nodes=5, widths=DEFAULT_WIDTHS):
    opts = [LayerSpec("identity")] + [LayerSpec("recurrent", w, "tanh") for w in widths]
    return SearchSpace("recurrent", num_nodes, tuple(opts), input_dim, output_dim)


def random_sample(space, rng):
    return tuple(int(rng.integers(n)) for n in space.sizes)


def mutate(parent, space, rng):
    """Change exactly one decision variable to a different value."""
    parent = space.validate_config(parent)
    child = list(parent)
    i = int(rng.integers(space.n_decisions))
    new = int(rng.integers(space.sizes[i] - 1))
    child[i] = new + (new >= parent[i])
    return tuple(child)


def decode(space, cfg):
    """Build the :class:`NetworkSpec` for a configuration.

    Identity choices drop their layer. A skip edge whose source was dropped
    starts from the nearest surviving earlier node (the input always
    survives); one whose destination was dropped lands on the nearest
    surviving later node, and is discarded if there is none.
    """
    cfg = space.validate_config(cfg)
    chosen = [space.options[v] for v in cfg[: space.num_nodes]]
    # old node index -> new node index, for surviving nodes only
    new_index = {0: 0}
    layers = []
    for old, layer in enumerate(chosen, start=1):
        if layer.kind != "identity":
            layers.append(layer)
            new_index[old] = len(layers)

    def back(i):
        while i not in new_index:
            i -= 1
        return new_index[i]

    def forward(i):
        while i <= space.num_nodes and i not in new_index:
            i += 1
        return new_index.get(i)

    edges = set()
    for (src, dst), on in zip(space.skips, cfg[space.num_nodes :]):
        if not on:
            continue
        d = forward(dst)
        if d is None:
            continue
        edges.add((back(src), d))
    return NetworkSpec(
        layers=tuple(layers),
        skips=tuple(sorted(edges)),
        input_dim=space.input_dim,
        output_dim=space.output_dim,
        sequence=space.sequence,
    )


def hamming(a, b):
    return sum(int(x != y) for x, y in zip(a, b))
