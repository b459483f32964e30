"""Model classes, selection constraints, and bounded simulation.

A model class is the quadruple (detection, acceptance, selection, fairness)
naming one of the twenty automaton models: detection and acceptance constrain
the machine, selection and fairness describe the scheduler. Synchronous
selection admits only the schedule V, V, V, ..., which is simultaneously
weakly and strongly fair, so the two synchronous variants of each machine
class coincide (24 raw combinations, 20 distinct models).
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass

from .errors import DomainError, TooLargeError, ValidationError
from .graphs import LabeledGraph, validate
from .machines import Configuration, Machine, Stepper, is_halting

DETECTIONS = ("set", "multiset")
ACCEPTANCES = ("halting", "stabilizing")
SELECTIONS = ("liberal", "exclusive", "synchronous")
FAIRNESSES = ("weak", "strong")

_LIBERAL_ENUM_CAP_NODES = 20


@dataclass(frozen=True)
class ModelClass:
    """One of the automaton models, written detection.acceptance.selection.fairness."""

    detection: str
    acceptance: str
    selection: str
    fairness: str

    def __post_init__(self):
        for value, allowed, part in (
            (self.detection, DETECTIONS, "detection"),
            (self.acceptance, ACCEPTANCES, "acceptance"),
            (self.selection, SELECTIONS, "selection"),
            (self.fairness, FAIRNESSES, "fairness"),
        ):
            if value not in allowed:
                raise ValidationError(
                    f"unknown {part} {value!r}; expected one of {allowed}"
                )

    @classmethod
    def parse(cls, text):
        parts = text.split(".")
        if len(parts) != 4:
            raise ValidationError(
                f"model class {text!r} must be detection.acceptance.selection.fairness "
                f"with detection in {DETECTIONS}, acceptance in {ACCEPTANCES}, "
                f"selection in {SELECTIONS}, fairness in {FAIRNESSES}"
            )
        return cls(*parts)

    def canonical(self):
        """Fold synchronous.strong onto synchronous.weak (same unique fair run)."""
        if self.selection == "synchronous" and self.fairness == "strong":
            return ModelClass(self.detection, self.acceptance, "synchronous", "weak")
        return self

    def __str__(self):
        return f"{self.detection}.{self.acceptance}.{self.selection}.{self.fairness}"


def all_model_classes(distinct=True):
    """The 20 distinct models, or all 24 raw quadruples with distinct=False."""
    out = []
    for combo in itertools.product(DETECTIONS, ACCEPTANCES, SELECTIONS, FAIRNESSES):
        mc = ModelClass(*combo)
        if distinct and mc.canonical() != mc:
            continue
        out.append(mc)
    return tuple(out)


def check_model_class(machine: Machine, mc: ModelClass, *, halting_cap=10**6):
    """Violations of the machine-side constraints of `mc` (empty list iff none).

    detection=set requires counting bound 1; acceptance=halting requires the
    accepting/rejecting states to be traps. When the halting check is too
    large to enumerate it is deferred: exploration re-checks the invariant on
    every transition it actually takes.
    """
    violations = []
    if mc.detection == "set" and machine.beta != 1:
        violations.append(f"counting bound exceeds 1 (beta={machine.beta})")
    if mc.acceptance == "halting":
        try:
            if not is_halting(machine, cap=halting_cap):
                violations.append("accepting/rejecting states are not traps")
        except TooLargeError:
            pass  # deferred to the lazy runtime check
    return violations


# ---------------------------------------------------------------------------
# Selection constraints.


class PermittedSelections:
    """Permitted selections of one constraint on one graph."""

    kind = None

    def __init__(self, graph: LabeledGraph):
        self.graph = graph

    def contains(self, selection):
        raise NotImplementedError

    def sample(self, rng):
        raise NotImplementedError

    def enumerate(self):
        raise NotImplementedError


class LiberalSelections(PermittedSelections):
    """Any subset of nodes may move, including the empty one."""

    kind = "liberal"

    def __init__(self, graph, select_probability=0.5):
        super().__init__(graph)
        self.select_probability = select_probability

    def contains(self, selection):
        return set(selection) <= set(self.graph.nodes)

    def sample(self, rng):
        p = self.select_probability
        return frozenset(v for v in self.graph.nodes if rng.random() < p)

    def enumerate(self):
        nodes = self.graph.nodes
        if len(nodes) > _LIBERAL_ENUM_CAP_NODES:
            raise TooLargeError(
                f"2^{len(nodes)} selections exceed the enumeration cap"
            )
        for r in range(len(nodes) + 1):
            for combo in itertools.combinations(nodes, r):
                yield frozenset(combo)


class ExclusiveSelections(PermittedSelections):
    """Exactly one node moves per step."""

    kind = "exclusive"

    def contains(self, selection):
        selection = set(selection)
        return len(selection) == 1 and selection <= set(self.graph.nodes)

    def sample(self, rng):
        return frozenset((rng.choice(self.graph.nodes),))

    def enumerate(self):
        for v in self.graph.nodes:
            yield frozenset((v,))


class SynchronousSelections(PermittedSelections):
    """All nodes move at every step."""

    kind = "synchronous"

    def contains(self, selection):
        return set(selection) == set(self.graph.nodes)

    def sample(self, rng):
        return frozenset(self.graph.nodes)

    def enumerate(self):
        yield frozenset(self.graph.nodes)


_SELECTION_CLASSES = {
    "liberal": LiberalSelections,
    "exclusive": ExclusiveSelections,
    "synchronous": SynchronousSelections,
}


def permitted(selection, graph: LabeledGraph, **kwargs):
    """Permitted-selections object for a selection kind name on `graph`."""
    if isinstance(selection, PermittedSelections):
        return selection
    try:
        cls = _SELECTION_CLASSES[selection]
    except KeyError:
        raise DomainError(f"unknown selection kind {selection!r}") from None
    return cls(graph, **kwargs)


# ---------------------------------------------------------------------------
# Simulation.


@dataclass(frozen=True)
class RunTrace:
    """Finite prefix of a run: configurations, the selections between them,
    per-configuration status, and why the simulation stopped."""

    configurations: tuple
    selections: tuple
    statuses: tuple  # per configuration: 'accepting' | 'rejecting' | 'neither'
    terminal: str  # 'budget-exhausted' | 'cycle-detected' | 'fixpoint'
    period: int | None = None
    seed: object = None

    def __post_init__(self):
        if len(self.selections) != len(self.configurations) - 1:
            raise DomainError("a trace has one selection per step")

    @property
    def final(self):
        return self.configurations[-1]

    def terminal_note(self):
        if self.terminal == "cycle-detected":
            return f"cycle-detected(period={self.period})"
        return self.terminal

    def to_json(self):
        return {
            "terminal": self.terminal_note(),
            "seed": self.seed,
            "steps": len(self.selections),
            "selections": [sorted(sel) for sel in self.selections],
            "configurations": [
                {v: _jsonable_state(s) for v, s in config.items()}
                for config in self.configurations
            ],
            "statuses": list(self.statuses),
        }


def _jsonable_state(state):
    return state if isinstance(state, (str, int, float, bool)) else repr(state)


def _status(states, machine):
    if all(s in machine.accepting for s in states):
        return "accepting"
    if all(s in machine.rejecting for s in states):
        return "rejecting"
    return "neither"


def simulate(machine: Machine, graph: LabeledGraph, selection="liberal", *,
             steps, seed=None, schedule=None, select_probability=0.5,
             stop_on_fixpoint=True):
    """Run `machine` on `graph` for at most `steps` steps.

    Synchronous selection is deterministic and stops at the first repeated
    configuration, reporting the cycle period. Liberal selection samples each
    node independently with `select_probability` per step; exclusive selection
    picks one node uniformly. An explicit `schedule` (iterable of selections)
    takes priority over the random policy until it is exhausted. Identical
    (machine, graph, selection, seed, steps) always yields an identical trace.
    """
    if steps <= 0:
        raise DomainError("step budget must be positive")
    problems = validate(graph)
    if problems:
        raise DomainError(f"invalid input graph: {problems}")
    sel = permitted(selection, graph, **(
        {"select_probability": select_probability} if selection == "liberal" else {}
    ))
    stepper = Stepper(machine, graph)
    rng = random.Random(seed)
    index_of = {v: i for i, v in enumerate(graph.nodes)}
    prefix = [frozenset(s) for s in schedule] if schedule else []
    for i, s in enumerate(prefix):
        if not sel.contains(s):
            raise DomainError(f"schedule step {i}: selection {sorted(s)} not permitted")

    states = stepper.initial()
    configs = [states]
    selections = []
    terminal = "budget-exhausted"
    period = None

    if sel.kind == "synchronous" and not prefix:
        seen = {states: 0}
        all_nodes = frozenset(graph.nodes)
        every = tuple(range(len(graph.nodes)))
        for _ in range(steps):
            states = stepper.apply(states, every)
            selections.append(all_nodes)
            configs.append(states)
            if states in seen:
                period = len(configs) - 1 - seen[states]
                terminal = "fixpoint" if period == 1 else "cycle-detected"
                break
            seen[states] = len(configs) - 1
    else:
        for step in range(steps):
            if stop_on_fixpoint and stepper.changed_mask(states) == 0:
                terminal = "fixpoint"
                break
            chosen = prefix[step] if step < len(prefix) else sel.sample(rng)
            states = stepper.apply(states, [index_of[v] for v in chosen])
            selections.append(frozenset(chosen))
            configs.append(states)

    nodes = graph.nodes
    return RunTrace(
        configurations=tuple(Configuration(nodes, s) for s in configs),
        selections=tuple(selections),
        statuses=tuple(_status(s, machine) for s in configs),
        terminal=terminal,
        period=period,
        seed=seed,
    )


def weakly_fair_prefix_deficit(trace: RunTrace, graph: LabeledGraph):
    """Per-node steps since last selection at the end of the trace.

    A node never selected has deficit equal to the number of steps taken.
    Diagnostic for how far a finite prefix is from looking weakly fair.
    """
    steps = len(trace.selections)
    deficit = {v: steps for v in graph.nodes}
    for i, sel in enumerate(trace.selections):
        for v in sel:
            deficit[v] = steps - 1 - i
    return deficit


def dumps_trace(trace: RunTrace):
    return json.dumps(trace.to_json(), indent=2)
