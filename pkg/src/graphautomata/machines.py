"""Distributed machines: states, bounded neighbor observation, one-step semantics.

A machine's transition function is an arbitrary evaluator
``delta(state, BoundedMultiset) -> state``. Rule tables are one concrete,
serializable evaluator; machine-to-machine transforms produce composed
closures instead of tables to avoid the (beta+1)^|Q| table blowup. Totality of
composed evaluators is checked lazily: an evaluation failure during
exploration surfaces as EvaluationError naming the offending (state, multiset).
"""

from __future__ import annotations

import itertools
import json
from collections.abc import Mapping
from dataclasses import dataclass, field

from .errors import DomainError, EvaluationError, ParseError, TooLargeError, ValidationError
from .graphs import LabeledGraph

_ENUM_CAP = 10**6


class BoundedMultiset:
    """Neighbor-state counts saturated at a threshold beta.

    Counts of zero are dropped, so two multisets are equal iff they report the
    same positive capped counts. beta=1 degenerates to set detection.
    """

    __slots__ = ("beta", "_counts", "_key")

    def __init__(self, counts, beta):
        if beta < 1:
            raise DomainError("counting bound must be at least 1")
        capped = {}
        for state, n in dict(counts).items():
            if n < 0:
                raise DomainError("negative multiplicity")
            if n > 0:
                capped[state] = min(beta, n)
        self.beta = beta
        self._counts = capped
        self._key = frozenset(capped.items())

    @classmethod
    def from_states(cls, states, beta):
        counts = {}
        for s in states:
            counts[s] = counts.get(s, 0) + 1
        return cls(counts, beta)

    def count(self, state):
        return self._counts.get(state, 0)

    def states(self):
        """Set of states with positive count."""
        return set(self._counts)

    def items(self):
        return self._counts.items()

    def total(self):
        """Sum of capped counts; exact whenever it is below beta."""
        return sum(self._counts.values())

    def count_where(self, predicate):
        """Sum of capped counts over states satisfying `predicate`."""
        return sum(n for s, n in self._counts.items() if predicate(s))

    def project(self, fn, beta=None):
        """Re-cap under `fn`: image states accumulate their preimages' counts.

        States mapped to None are dropped. Exact for any target bound
        beta' <= self.beta: if the capped sum reaches beta' the true sum does
        too, and below beta' no source count was clipped.
        """
        beta = self.beta if beta is None else beta
        if beta > self.beta:
            raise DomainError("cannot project to a larger counting bound")
        counts = {}
        for s, n in self._counts.items():
            image = fn(s)
            if image is not None:
                counts[image] = counts.get(image, 0) + n
        return BoundedMultiset(counts, beta)

    def key(self):
        return self._key

    def __eq__(self, other):
        if not isinstance(other, BoundedMultiset):
            return NotImplemented
        return self.beta == other.beta and self._key == other._key

    def __hash__(self):
        return hash((self.beta, self._key))

    def __repr__(self):
        inner = ", ".join(f"{s!r}:{n}" for s, n in sorted(self._counts.items(), key=lambda kv: repr(kv[0])))
        return f"BoundedMultiset({{{inner}}}, beta={self.beta})"


@dataclass(frozen=True, eq=False)
class Machine:
    """Identical finite-state device placed at every node of an input graph.

    `delta` reads the node's own state plus the beta-bounded multiset of its
    neighbors' states; node identifiers are never visible to it.
    """

    name: str
    states: tuple
    alphabet: tuple
    beta: int
    init: dict
    delta: object  # callable (state, BoundedMultiset) -> state
    accepting: frozenset
    rejecting: frozenset
    table: object = None  # RuleTable when the machine came from one
    source: dict | None = None  # JSON-able provenance (builtin + transform chain)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "init", dict(self.init))
        object.__setattr__(self, "accepting", frozenset(self.accepting))
        object.__setattr__(self, "rejecting", frozenset(self.rejecting))
        if self.beta < 1:
            raise ValidationError("counting bound must be at least 1")
        state_set = set(self.states)
        if len(state_set) != len(self.states):
            raise ValidationError("duplicate states")
        if self.accepting & self.rejecting:
            raise ValidationError("accepting and rejecting states must be disjoint")
        if not self.accepting <= state_set or not self.rejecting <= state_set:
            raise ValidationError("accepting/rejecting states must be machine states")
        for a in self.alphabet:
            if a not in self.init:
                raise ValidationError(f"initialization undefined for label {a!r}")
            if self.init[a] not in state_set:
                raise ValidationError(f"initialization of {a!r} is not a state")

    def evaluate(self, state, multiset):
        """Apply delta with the lazy-totality contract."""
        try:
            new = self.delta(state, multiset)
        except Exception as exc:  # noqa: BLE001 - diagnostic wrapper is the contract
            raise EvaluationError(
                f"machine {self.name!r}: delta failed on state={state!r}, multiset={multiset!r}: {exc}"
            ) from exc
        if new is None:
            raise EvaluationError(
                f"machine {self.name!r}: delta returned None on state={state!r}, multiset={multiset!r}"
            )
        return new

    def __repr__(self):
        return f"Machine({self.name!r}, |Q|={len(self.states)}, beta={self.beta})"


class Configuration(Mapping):
    """Total map node -> state, canonically ordered by the graph's node order."""

    __slots__ = ("nodes", "states")

    def __init__(self, nodes, states):
        self.nodes = tuple(nodes)
        self.states = tuple(states)
        if len(self.nodes) != len(self.states):
            raise DomainError("one state per node required")

    @classmethod
    def from_dict(cls, graph: LabeledGraph, assignment):
        missing = [v for v in graph.nodes if v not in assignment]
        if missing:
            raise DomainError(f"assignment missing nodes: {missing}")
        return cls(graph.nodes, tuple(assignment[v] for v in graph.nodes))

    def __getitem__(self, node):
        try:
            return self.states[self.nodes.index(node)]
        except ValueError:
            raise KeyError(node) from None

    def __iter__(self):
        return iter(self.nodes)

    def __len__(self):
        return len(self.nodes)

    def as_dict(self):
        return dict(zip(self.nodes, self.states))

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.nodes == other.nodes and self.states == other.states

    def __hash__(self):
        return hash((self.nodes, self.states))

    def __repr__(self):
        inner = ", ".join(f"{v}:{s!r}" for v, s in zip(self.nodes, self.states))
        return f"Configuration({inner})"


class Stepper:
    """Memoizing per-node update evaluator over a fixed (machine, graph) pair.

    The hot path of simulation and state-space exploration: configurations are
    bare state tuples in graph node order, nodes are positional indices.
    """

    __slots__ = ("machine", "graph", "neighbor_indices", "_memo")

    def __init__(self, machine: Machine, graph: LabeledGraph):
        for v in graph.nodes:
            if graph.label(v) not in machine.alphabet:
                raise DomainError(
                    f"label {graph.label(v)!r} of node {v} outside machine alphabet"
                )
        self.machine = machine
        self.graph = graph
        index = {v: i for i, v in enumerate(graph.nodes)}
        self.neighbor_indices = tuple(
            tuple(index[u] for u in graph.neighbors(v)) for v in graph.nodes
        )
        self._memo = {}

    def initial(self):
        return tuple(self.machine.init[self.graph.label(v)] for v in self.graph.nodes)

    def neighbor_multiset(self, states, v):
        counts = {}
        for u in self.neighbor_indices[v]:
            s = states[u]
            counts[s] = counts.get(s, 0) + 1
        return BoundedMultiset(counts, self.machine.beta)

    def update(self, states, v):
        """State node v moves to when selected at `states` (reads the old tuple)."""
        beta = self.machine.beta
        counts = {}
        for u in self.neighbor_indices[v]:
            s = states[u]
            counts[s] = counts.get(s, 0) + 1
        key = (states[v], frozenset((s, min(beta, n)) for s, n in counts.items()))
        memo = self._memo
        hit = memo.get(key)
        if hit is None:
            hit = self.machine.evaluate(states[v], BoundedMultiset(counts, beta))
            memo[key] = hit
        return hit

    def changed_mask(self, states):
        """Bitmask of nodes whose update differs from their current state."""
        mask = 0
        for v in range(len(states)):
            if self.update(states, v) != states[v]:
                mask |= 1 << v
        return mask

    def apply(self, states, selected):
        """Successor tuple: selected node indices update, the rest stay."""
        out = list(states)
        for v in selected:
            out[v] = self.update(states, v)
        return tuple(out)

    def apply_mask(self, states, mask):
        out = list(states)
        v = 0
        while mask:
            if mask & 1:
                out[v] = self.update(states, v)
            mask >>= 1
            v += 1
        return tuple(out)


def bounded_multiset(config: Configuration, v, graph: LabeledGraph, beta):
    """beta-bounded multiset of v's neighbors' states in `config`."""
    if v not in graph:
        raise DomainError(f"node {v!r} not in graph")
    return BoundedMultiset.from_states((config[u] for u in graph.neighbors(v)), beta)


def initial_configuration(machine: Machine, graph: LabeledGraph):
    stepper = Stepper(machine, graph)
    return Configuration(graph.nodes, stepper.initial())


def successor(config: Configuration, selection, machine: Machine, graph: LabeledGraph):
    """Selected nodes evaluate delta simultaneously against the old configuration."""
    selection = set(selection)
    unknown = [v for v in selection if v not in graph]
    if unknown:
        raise DomainError(f"selection mentions nodes outside the graph: {unknown}")
    stepper = Stepper(machine, graph)
    states = tuple(config[v] for v in graph.nodes)
    new = stepper.apply(states, [graph.node_index(v) for v in selection])
    return Configuration(graph.nodes, new)


def is_accepting_config(config: Configuration, machine: Machine):
    return all(s in machine.accepting for s in config.states)


def is_rejecting_config(config: Configuration, machine: Machine):
    return all(s in machine.rejecting for s in config.states)


def enumerate_multisets(states, beta):
    """All beta-bounded multisets over `states` (size (beta+1)^|states|)."""
    states = tuple(states)
    for combo in itertools.product(range(beta + 1), repeat=len(states)):
        yield BoundedMultiset(dict(zip(states, combo)), beta)


def is_halting(machine: Machine, *, cap=_ENUM_CAP):
    """True iff no accepting or rejecting state can be left, checked exhaustively.

    Enumerates all (q, P) with q in Y u N; raises TooLargeError when the
    multiset count exceeds `cap` (callers may then fall back to checking the
    invariant lazily along explored trajectories).
    """
    halt_states = machine.accepting | machine.rejecting
    if not halt_states:
        return True
    n_multisets = (machine.beta + 1) ** len(machine.states)
    if len(halt_states) * n_multisets > cap:
        raise TooLargeError(
            f"halting check needs {len(halt_states) * n_multisets} evaluations (cap {cap})"
        )
    for q in halt_states:
        for multiset in enumerate_multisets(machine.states, machine.beta):
            if machine.evaluate(q, multiset) != q:
                return False
    return True


# ---------------------------------------------------------------------------
# Rule tables: the serializable concrete transition format.

_OPS = {
    "=": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
}


@dataclass(frozen=True)
class Guard:
    state: object
    op: str
    n: int


@dataclass(frozen=True)
class Rule:
    src: object
    guards: tuple
    dst: object

    def matches(self, state, multiset: BoundedMultiset):
        if state != self.src:
            return False
        return all(_OPS[g.op](multiset.count(g.state), g.n) for g in self.guards)


@dataclass(frozen=True)
class RuleTable:
    """Ordered guarded rules; the first matching rule fires, otherwise stay."""

    rules: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    def evaluate(self, state, multiset):
        for rule in self.rules:
            if rule.matches(state, multiset):
                return rule.dst
        return state


def compile_rule_table(table: RuleTable, *, name, states, alphabet, beta, init,
                       accepting, rejecting, source=None):
    """Machine whose delta is first-match evaluation of `table`, default stay."""
    state_set = set(states)
    for i, rule in enumerate(table.rules):
        if rule.src not in state_set:
            raise ValidationError(f"rule {i}: unknown source state {rule.src!r}")
        if rule.dst not in state_set:
            raise ValidationError(f"rule {i}: unknown target state {rule.dst!r}")
        for g in rule.guards:
            if g.state not in state_set:
                raise ValidationError(f"rule {i}: guard references unknown state {g.state!r}")
            if g.op not in _OPS:
                raise ValidationError(f"rule {i}: unknown comparator {g.op!r}")
            if not 0 <= g.n <= beta:
                raise ValidationError(f"rule {i}: threshold {g.n} outside [0, beta={beta}]")
    return Machine(
        name=name,
        states=tuple(states),
        alphabet=tuple(alphabet),
        beta=beta,
        init=dict(init),
        delta=table.evaluate,
        accepting=frozenset(accepting),
        rejecting=frozenset(rejecting),
        table=table,
        source=source,
    )


def export_table(machine: Machine, *, cap=_ENUM_CAP):
    """Full (state, multiset) -> state map; TooLargeError beyond `cap` entries."""
    n_entries = len(machine.states) * (machine.beta + 1) ** len(machine.states)
    if n_entries > cap:
        raise TooLargeError(f"explicit table has {n_entries} entries (cap {cap})")
    out = {}
    for q in machine.states:
        for multiset in enumerate_multisets(machine.states, machine.beta):
            out[(q, multiset.key())] = machine.evaluate(q, multiset)
    return out


def machine_from_table(mapping, *, name, states, alphabet, beta, init,
                       accepting, rejecting, source=None):
    """Machine evaluating delta by lookup in an explicit (state, multiset-key) map."""
    mapping = dict(mapping)

    def delta(state, multiset):
        return mapping[(state, multiset.key())]

    return Machine(
        name=name,
        states=tuple(states),
        alphabet=tuple(alphabet),
        beta=beta,
        init=dict(init),
        delta=delta,
        accepting=frozenset(accepting),
        rejecting=frozenset(rejecting),
        source=source,
    )


# ---------------------------------------------------------------------------
# Machine JSON.


def serialize_machine(machine: Machine):
    """Machine JSON: rule-table form when available, builtin reference otherwise."""
    if machine.table is not None:
        return {
            "name": machine.name,
            "states": list(machine.states),
            "alphabet": list(machine.alphabet),
            "beta": machine.beta,
            "init": {a: machine.init[a] for a in machine.alphabet},
            "accepting": sorted(machine.accepting),
            "rejecting": sorted(machine.rejecting),
            "rules": [
                {
                    "from": rule.src,
                    "guards": [{"state": g.state, "op": g.op, "n": g.n} for g in rule.guards],
                    "to": rule.dst,
                }
                for rule in machine.table.rules
            ],
        }
    if machine.source is not None:
        return dict(machine.source)
    raise DomainError(
        f"machine {machine.name!r} has neither a rule table nor a builtin source"
    )


def dumps_machine(machine: Machine):
    return json.dumps(serialize_machine(machine), indent=2)


def parse_machine(data, *, builtin_resolver=None):
    """Inverse of serialize_machine.

    `builtin_resolver(name, params)` supplies machines for the builtin form;
    a "transforms" list of {"name":..., "params":{...}} entries is applied in
    order via `transform_resolver` injected by the CLI layer.
    """
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", location="<input>") from exc
    if not isinstance(data, dict):
        raise ParseError("expected a JSON object", location="<input>")
    if "builtin" in data:
        if builtin_resolver is None:
            raise ParseError("builtin machine reference but no resolver available",
                             location="builtin")
        return builtin_resolver(data["builtin"], data.get("params", {}),
                                data.get("transforms", []))
    for key in ("states", "alphabet", "beta", "init", "rules"):
        if key not in data:
            raise ParseError(f"missing key {key!r}", location="<input>")
    rules = []
    for i, entry in enumerate(data["rules"]):
        try:
            guards = tuple(
                Guard(state=g["state"], op=g["op"], n=int(g["n"])) for g in entry.get("guards", [])
            )
            rules.append(Rule(src=entry["from"], guards=guards, dst=entry["to"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad rule: {exc}", location=f"rules[{i}]") from exc
    try:
        return compile_rule_table(
            RuleTable(tuple(rules)),
            name=data.get("name", "machine"),
            states=data["states"],
            alphabet=data["alphabet"],
            beta=int(data["beta"]),
            init=data["init"],
            accepting=data.get("accepting", ()),
            rejecting=data.get("rejecting", ()),
        )
    except ValidationError as exc:
        raise ParseError(str(exc), location="rules") from exc
