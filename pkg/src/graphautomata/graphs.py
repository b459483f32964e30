"""Finite connected labeled graphs and the constructions the automata run on.

Graphs are immutable after construction. The constructor only enforces
referential integrity (edge endpoints exist, labels are total); semantic
invariants (connected, at least two nodes, no self-loops, labels drawn from
the alphabet) are reported by :func:`validate` so that intermediate objects
such as disconnected Kronecker covers can still be built and inspected.
"""

from __future__ import annotations

import itertools
import json
import os
from collections import deque
from dataclasses import dataclass
from types import MappingProxyType

from .errors import DomainError, ParseError, TooLargeError

UNLABELED = "·"

_ISO_NODE_CAP = 10
_ENUM_CACHE_ENV = "AUTOMATA_CACHE_DIR"


class LabeledGraph:
    """Undirected graph with a total node labeling over a finite alphabet."""

    __slots__ = ("nodes", "edges", "alphabet", "_labels", "_adjacency", "_index")

    def __init__(self, nodes, edges, labels, alphabet=None):
        nodes = tuple(nodes)
        if len(set(nodes)) != len(nodes):
            raise DomainError("duplicate node identifiers")
        index = {v: i for i, v in enumerate(nodes)}
        canon = set()
        for edge in edges:
            u, v = tuple(edge)
            if u not in index or v not in index:
                raise DomainError(f"edge {{{u},{v}}} mentions unknown node")
            canon.add((u, v) if index[u] <= index[v] else (v, u))
        labels = dict(labels)
        missing = [v for v in nodes if v not in labels]
        if missing:
            raise DomainError(f"nodes without label: {missing}")
        extra = [v for v in labels if v not in index]
        if extra:
            raise DomainError(f"labels for unknown nodes: {extra}")
        if alphabet is None:
            alphabet = tuple(sorted(set(labels.values())))
        self.nodes = nodes
        self.edges = frozenset(canon)
        self.alphabet = tuple(alphabet)
        self._labels = MappingProxyType(labels)
        self._index = index
        adjacency = {v: [] for v in nodes}
        for u, v in sorted(canon, key=lambda e: (index[e[0]], index[e[1]])):
            if u != v:
                adjacency[u].append(v)
                adjacency[v].append(u)
        self._adjacency = {v: tuple(ns) for v, ns in adjacency.items()}

    @property
    def labels(self):
        return self._labels

    def label(self, v):
        return self._labels[v]

    def neighbors(self, v):
        return self._adjacency[v]

    def degree(self, v):
        return len(self._adjacency[v])

    def node_index(self, v):
        return self._index[v]

    def __contains__(self, v):
        return v in self._index

    def __len__(self):
        return len(self.nodes)

    def __eq__(self, other):
        if not isinstance(other, LabeledGraph):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and dict(self._labels) == dict(other._labels)
            and self.alphabet == other.alphabet
        )

    def __hash__(self):
        return hash((self.nodes, self.edges, tuple(self._labels[v] for v in self.nodes)))

    def __repr__(self):
        return f"LabeledGraph(|V|={len(self.nodes)}, |E|={len(self.edges)}, alphabet={self.alphabet})"


@dataclass(frozen=True)
class NodePairAnchor:
    """An ordered pair of adjacent nodes used to attach chain-link edges."""

    first: str
    second: str

    def check_in(self, g: LabeledGraph, name="anchor"):
        if self.first not in g or self.second not in g:
            raise DomainError(f"{name}: nodes must belong to the host graph")
        if self.second not in g.neighbors(self.first):
            raise DomainError(f"{name}: nodes {self.first},{self.second} are not adjacent")


def validate(g: LabeledGraph):
    """Return the list of invariant violations, empty iff `g` is a legal input graph."""
    violations = []
    if len(g.nodes) < 2:
        violations.append("fewer than 2 nodes")
    for u, v in g.edges:
        if u == v:
            violations.append(f"self-loop at {u}")
    if len(g.nodes) >= 1 and not is_connected(g):
        violations.append("not connected")
    bad = sorted({g.label(v) for v in g.nodes} - set(g.alphabet))
    if bad:
        violations.append(f"labels outside alphabet: {bad}")
    return violations


def is_connected(g: LabeledGraph):
    if not g.nodes:
        return True
    seen = {g.nodes[0]}
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for v in g.neighbors(u):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(g.nodes)


def connected_components(g: LabeledGraph):
    remaining = set(g.nodes)
    components = []
    while remaining:
        root = next(iter(remaining))
        comp = {root}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in g.neighbors(u):
                if v not in comp:
                    comp.add(v)
                    queue.append(v)
        components.append(comp)
        remaining -= comp
    return components


def has_odd_cycle(g: LabeledGraph):
    """True iff `g` is non-bipartite (a 2-coloring BFS fails)."""
    color = {}
    for root in g.nodes:
        if root in color:
            continue
        color[root] = 0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in g.neighbors(u):
                if v not in color:
                    color[v] = 1 - color[u]
                    queue.append(v)
                elif color[v] == color[u]:
                    return True
    return False


def generate_star(n_leaves, label=UNLABELED):
    """Star with a center of degree `n_leaves`; requires center degree at least 2."""
    if n_leaves < 2:
        raise DomainError("a star needs a center of degree at least 2")
    nodes = ["c"] + [f"l{i}" for i in range(1, n_leaves + 1)]
    edges = [("c", leaf) for leaf in nodes[1:]]
    return LabeledGraph(nodes, edges, {v: label for v in nodes}, alphabet=(label,))


def generate_cycle(labels):
    """Cycle whose nodes carry `labels` in order; length below 3 is a multi-edge."""
    labels = list(labels)
    if len(labels) < 3:
        raise DomainError("cycles need at least 3 nodes")
    nodes = [f"n{i}" for i in range(len(labels))]
    edges = [(nodes[i], nodes[(i + 1) % len(nodes)]) for i in range(len(nodes))]
    return LabeledGraph(nodes, edges, dict(zip(nodes, labels)))


def generate_path(n_nodes, label=UNLABELED):
    if n_nodes < 2:
        raise DomainError("paths need at least 2 nodes")
    nodes = [f"n{i}" for i in range(n_nodes)]
    edges = [(nodes[i], nodes[i + 1]) for i in range(n_nodes - 1)]
    return LabeledGraph(nodes, edges, {v: label for v in nodes}, alphabet=(label,))


def generate_complete(n_nodes, label=UNLABELED):
    if n_nodes < 2:
        raise DomainError("complete graphs need at least 2 nodes")
    nodes = [f"n{i}" for i in range(n_nodes)]
    edges = list(itertools.combinations(nodes, 2))
    return LabeledGraph(nodes, edges, {v: label for v in nodes}, alphabet=(label,))


def relabel(g: LabeledGraph, labels, alphabet=None):
    """Copy of `g` with new labels (a mapping, or a sequence in node order)."""
    if not isinstance(labels, dict):
        labels = dict(zip(g.nodes, labels))
    return LabeledGraph(g.nodes, g.edges, labels, alphabet=alphabet)


def kronecker_cover(g: LabeledGraph):
    """Bipartite double cover on V x {0,1}; possibly disconnected, returned unvalidated."""
    nodes = [f"{v}@0" for v in g.nodes] + [f"{v}@1" for v in g.nodes]
    edges = []
    for u, v in g.edges:
        edges.append((f"{u}@0", f"{v}@1"))
        edges.append((f"{u}@1", f"{v}@0"))
    labels = {}
    for v in g.nodes:
        labels[f"{v}@0"] = g.label(v)
        labels[f"{v}@1"] = g.label(v)
    return LabeledGraph(nodes, edges, labels, alphabet=g.alphabet)


def chain_construction(g: LabeledGraph, h: LabeledGraph, t, g_anchor: NodePairAnchor, h_anchor: NodePairAnchor):
    """t copies of g and of h linked anchor-to-anchor in two arms joined by a bridge.

    Copy i of node w in graph X is named "w@Xi". Arm edges join u@X{i} to
    v@X{i+1}; the bridge joins u@G{t} to u@H{t}.
    """
    if t < 1:
        raise DomainError("need at least one copy of each graph")
    g_anchor.check_in(g, "g_anchor")
    h_anchor.check_in(h, "h_anchor")
    nodes, edges, labels = [], [], {}
    for tag, base, anchor in (("G", g, g_anchor), ("H", h, h_anchor)):
        for i in range(1, t + 1):
            for v in base.nodes:
                name = f"{v}@{tag}{i}"
                nodes.append(name)
                labels[name] = base.label(v)
            for u, v in base.edges:
                edges.append((f"{u}@{tag}{i}", f"{v}@{tag}{i}"))
        for i in range(1, t):
            edges.append((f"{anchor.first}@{tag}{i}", f"{anchor.second}@{tag}{i + 1}"))
    edges.append((f"{g_anchor.first}@G{t}", f"{h_anchor.first}@H{t}"))
    alphabet = tuple(dict.fromkeys(tuple(g.alphabet) + tuple(h.alphabet)))
    return LabeledGraph(nodes, edges, labels, alphabet=alphabet)


def isomorphic(g: LabeledGraph, h: LabeledGraph, *, max_nodes=_ISO_NODE_CAP):
    """Label-preserving isomorphism by backtracking with degree/label pruning."""
    if len(g.nodes) > max_nodes or len(h.nodes) > max_nodes:
        raise TooLargeError(f"isomorphism check capped at {max_nodes} nodes")
    if len(g.nodes) != len(h.nodes) or len(g.edges) != len(h.edges):
        return False

    def signature(graph, v):
        return (graph.degree(v), graph.label(v))

    if sorted(signature(g, v) for v in g.nodes) != sorted(signature(h, v) for v in h.nodes):
        return False

    order = sorted(g.nodes, key=lambda v: (-g.degree(v), g.label(v)))
    h_by_sig = {}
    for v in h.nodes:
        h_by_sig.setdefault(signature(h, v), []).append(v)

    mapping = {}
    used = set()

    def extend(i):
        if i == len(order):
            return True
        u = order[i]
        for w in h_by_sig.get(signature(g, u), ()):
            if w in used:
                continue
            # adjacency to every already-mapped node must agree in both directions
            ok = all(
                (u2 in g.neighbors(u)) == (w2 in h.neighbors(w))
                for u2, w2 in mapping.items()
            )
            if not ok:
                continue
            mapping[u] = w
            used.add(w)
            if extend(i + 1):
                return True
            del mapping[u]
            used.remove(w)
        return False

    return extend(0)


def _canonical_key(g: LabeledGraph):
    """Cheap invariant used to bucket candidates before the exact check."""
    degs = sorted((g.degree(v), g.label(v)) for v in g.nodes)
    tri = 0
    for u, v in g.edges:
        tri += sum(1 for w in g.neighbors(u) if w in g.neighbors(v))
    return (len(g.nodes), len(g.edges), tuple(degs), tri)


def connected_graphs(max_nodes=6, *, cache_dir=None):
    """All non-isomorphic connected unlabeled graphs with 2..max_nodes nodes.

    Brute force over edge subsets with isomorphism dedup; results are memoized
    on disk under AUTOMATA_CACHE_DIR when set.
    """
    cache_dir = cache_dir or os.environ.get(_ENUM_CACHE_ENV)
    cache_path = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        cache_path = os.path.join(cache_dir, f"connected_graphs_{max_nodes}.json")
        if os.path.exists(cache_path):
            with open(cache_path) as fh:
                return tuple(parse_graph(entry) for entry in json.load(fh))
    out = []
    for n in range(2, max_nodes + 1):
        nodes = [f"n{i}" for i in range(n)]
        pairs = list(itertools.combinations(nodes, 2))
        buckets = {}
        for bits in range(1 << len(pairs)):
            edges = [pairs[i] for i in range(len(pairs)) if bits >> i & 1]
            if len(edges) < n - 1:
                continue
            g = LabeledGraph(nodes, edges, {v: UNLABELED for v in nodes}, alphabet=(UNLABELED,))
            if not is_connected(g):
                continue
            key = _canonical_key(g)
            reps = buckets.setdefault(key, [])
            if not any(isomorphic(g, rep) for rep in reps):
                reps.append(g)
        for reps in buckets.values():
            out.extend(reps)
    out.sort(key=lambda g: (len(g.nodes), len(g.edges), _canonical_key(g)))
    if cache_path:
        with open(cache_path, "w") as fh:
            json.dump([serialize_graph(g) for g in out], fh)
    return tuple(out)


def all_labelings(g: LabeledGraph, alphabet):
    """Every total relabeling of `g` over `alphabet`, in deterministic order."""
    alphabet = tuple(alphabet)
    for combo in itertools.product(alphabet, repeat=len(g.nodes)):
        yield relabel(g, dict(zip(g.nodes, combo)), alphabet=alphabet)


def serialize_graph(g: LabeledGraph):
    return {
        "alphabet": list(g.alphabet),
        "nodes": [{"id": v, "label": g.label(v)} for v in g.nodes],
        "edges": [[u, v] for u, v in sorted(g.edges, key=lambda e: (g.node_index(e[0]), g.node_index(e[1])))],
    }


def dumps_graph(g: LabeledGraph):
    return json.dumps(serialize_graph(g), indent=2)


def parse_graph(data):
    """Parse the graph JSON schema; raises ParseError with a location on bad input."""
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", location="<input>") from exc
    if not isinstance(data, dict):
        raise ParseError("expected a JSON object", location="<input>")
    for key in ("alphabet", "nodes", "edges"):
        if key not in data:
            raise ParseError(f"missing key {key!r}", location="<input>")
    alphabet = data["alphabet"]
    if not isinstance(alphabet, list) or not all(isinstance(a, str) for a in alphabet):
        raise ParseError("alphabet must be a list of strings", location="alphabet")
    nodes, labels = [], {}
    for i, entry in enumerate(data["nodes"]):
        if not isinstance(entry, dict) or "id" not in entry or "label" not in entry:
            raise ParseError("node entries need 'id' and 'label'", location=f"nodes[{i}]")
        if entry["id"] in labels:
            raise ParseError(f"duplicate node id {entry['id']!r}", location=f"nodes[{i}]")
        if entry["label"] not in alphabet:
            raise ParseError(f"label {entry['label']!r} not in alphabet", location=f"nodes[{i}]")
        nodes.append(entry["id"])
        labels[entry["id"]] = entry["label"]
    seen, edges = set(), []
    for i, entry in enumerate(data["edges"]):
        if not isinstance(entry, list) or len(entry) != 2:
            raise ParseError("edges must be 2-element lists", location=f"edges[{i}]")
        u, v = entry
        if u not in labels or v not in labels:
            raise ParseError(f"edge [{u},{v}] mentions unknown node", location=f"edges[{i}]")
        if u == v:
            raise ParseError(f"self-loop at {u}", location=f"edges[{i}]")
        key = frozenset((u, v))
        if key in seen:
            raise ParseError(f"duplicate edge [{u},{v}]", location=f"edges[{i}]")
        seen.add(key)
        edges.append((u, v))
    return LabeledGraph(nodes, edges, labels, alphabet=alphabet)


def export_dot(g: LabeledGraph):
    """Deterministic DOT rendering (nodes in declaration order)."""
    lines = ["graph G {"]
    for v in g.nodes:
        lines.append(f'  "{v}" [label="{v}:{g.label(v)}"];')
    for u, v in sorted(g.edges, key=lambda e: (g.node_index(e[0]), g.node_index(e[1]))):
        lines.append(f'  "{u}" -- "{v}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
