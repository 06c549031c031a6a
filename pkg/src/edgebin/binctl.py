"""The bin's decision state machine.

The controller watches a stream of classifier outputs and opens the door
of a recycling container only after ``stability_window`` consecutive
confident classifications of the same class. A hand in view always wins:
the bin holds and restarts its observation once the hand is gone. Empty
frames return it to idle.
"""

from __future__ import annotations

import csv
import queue
from dataclasses import dataclass, field
from typing import Union

from .errors import InvalidTransition, UnknownLabel
from .ir import BIN_LABELS, RECYCLING_LABELS

HAND, EMPTY = "hand", "empty"


# --- events ------------------------------------------------------------------

@dataclass(frozen=True)
class Classified:
    label: str
    confidence: float

    def __post_init__(self):
        if self.label not in BIN_LABELS:
            raise UnknownLabel(f"label {self.label!r} not in {BIN_LABELS}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class SortComplete:
    pass


@dataclass(frozen=True)
class Timeout:
    pass


@dataclass(frozen=True)
class Tick:
    pass


Event = Union[Classified, SortComplete, Timeout, Tick]


# --- states ------------------------------------------------------------------

@dataclass(frozen=True)
class Idle:
    pass


@dataclass(frozen=True)
class Observing:
    label: str
    streak: int


@dataclass(frozen=True)
class HandHold:
    pass


@dataclass(frozen=True)
class Sorting:
    container: str
    elapsed: int = 0

    def __post_init__(self):
        if self.container not in RECYCLING_LABELS:
            raise ValueError(f"cannot sort into {self.container!r}")


State = Union[Idle, Observing, HandHold, Sorting]


# --- actions -----------------------------------------------------------------

@dataclass(frozen=True)
class OpenDoor:
    container: str

    def __str__(self):
        return f"OpenDoor({self.container})"


@dataclass(frozen=True)
class Alarm:
    def __str__(self):
        return "Alarm"


@dataclass(frozen=True)
class ControllerConfig:
    stability_window: int = 3
    confidence_threshold: float = 0.6
    sort_timeout: int = 50

    def __post_init__(self):
        if self.stability_window < 1:
            raise ValueError("stability_window must be >= 1")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in [0, 1]")
        if self.sort_timeout < 1:
            raise ValueError("sort_timeout must be >= 1")

    @classmethod
    def from_json(cls, d):
        return cls(**{k: d[k] for k in ("stability_window", "confidence_threshold", "sort_timeout")
                      if k in d})


def _name(obj):
    return type(obj).__name__


def step(state: State, event: Event, config: ControllerConfig = ControllerConfig()):
    """Pure transition function -> (new state, list of actions).

    Raises InvalidTransition for completion/timeout events outside Sorting;
    the caller keeps the old state.
    """
    if isinstance(state, Sorting):
        if isinstance(event, SortComplete):
            return Idle(), []
        if isinstance(event, Timeout):
            return Idle(), [Alarm()]
        if isinstance(event, Tick):
            elapsed = state.elapsed + 1
            if elapsed >= config.sort_timeout:
                return Idle(), [Alarm()]
            return Sorting(state.container, elapsed), []
        # the door is already open; new frames wait for completion
        return state, []

    if isinstance(event, (SortComplete, Timeout)):
        raise InvalidTransition(state, event)
    if isinstance(event, Tick):
        return state, []

    if event.label == HAND:
        return HandHold(), []
    if event.confidence < config.confidence_threshold or event.label == EMPTY:
        return Idle(), []
    streak = state.streak + 1 if isinstance(state, Observing) and state.label == event.label else 1
    if streak >= config.stability_window:
        return Sorting(event.label), [OpenDoor(event.label)]
    return Observing(event.label, streak), []


@dataclass(frozen=True)
class LogEntry:
    index: int
    action: str
    detail: str = ""


@dataclass
class ScenarioResult:
    log: list[LogEntry] = field(default_factory=list)
    final_state: State = field(default_factory=Idle)

    @property
    def doors(self):
        return [e for e in self.log if e.action == "OpenDoor"]


def _invalid(index, exc):
    return LogEntry(index, "InvalidTransition", f"{_name(exc.event)} in {_name(exc.state)}")


def _entry(index, action):
    if isinstance(action, OpenDoor):
        return LogEntry(index, "OpenDoor", action.container)
    return LogEntry(index, _name(action))


def run_scenario(script, config: ControllerConfig = ControllerConfig(), state: State = None):
    """Fold ``step`` over ``script``; invalid transitions become log entries."""
    state = Idle() if state is None else state
    result = ScenarioResult(final_state=state)
    for i, event in enumerate(script):
        try:
            state, actions = step(state, event, config)
        except InvalidTransition as exc:
            result.log.append(_invalid(i, exc))
            continue
        result.log.extend(_entry(i, a) for a in actions)
    result.final_state = state
    return result


class BinController:
    """Stateful wrapper for a live event loop.

    Producers may ``put`` events from any thread; ``drain`` consumes them
    in queue order on the calling thread.
    """

    def __init__(self, config: ControllerConfig = ControllerConfig()):
        self.config = config
        self.state: State = Idle()
        self.events: queue.Queue = queue.Queue()
        self.log: list[LogEntry] = []
        self._count = 0

    def put(self, event: Event):
        self.events.put(event)

    def handle(self, event: Event):
        i, self._count = self._count, self._count + 1
        try:
            self.state, actions = step(self.state, event, self.config)
        except InvalidTransition as exc:
            self.log.append(_invalid(i, exc))
            return []
        self.log.extend(_entry(i, a) for a in actions)
        return actions

    def drain(self):
        actions = []
        while True:
            try:
                event = self.events.get_nowait()
            except queue.Empty:
                return actions
            actions.extend(self.handle(event))


# --- trace files -------------------------------------------------------------

_EVENT_NAMES = {"classified": Classified, "sort_complete": SortComplete,
                "timeout": Timeout, "tick": Tick}


def parse_event(name, label="", confidence=""):
    key = name.strip().lower()
    if key not in _EVENT_NAMES:
        raise ValueError(f"unknown event {name!r}; expected one of {sorted(_EVENT_NAMES)}")
    if key == "classified":
        return Classified(label.strip(), float(confidence))
    return _EVENT_NAMES[key]()


def read_trace(path):
    """CSV rows ``event,label,confidence`` (header optional)."""
    events = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "event" or row[0].startswith("#"):
                continue
            row = row + [""] * (3 - len(row))
            events.append(parse_event(*row[:3]))
    return events


def write_trace(path, events):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["event", "label", "confidence"])
        for e in events:
            if isinstance(e, Classified):
                w.writerow(["classified", e.label, repr(e.confidence)])
            else:
                name = {SortComplete: "sort_complete", Timeout: "timeout", Tick: "tick"}[type(e)]
                w.writerow([name, "", ""])


def write_log(fh, log):
    w = csv.writer(fh)
    w.writerow(["index", "action", "detail"])
    for e in log:
        w.writerow([e.index, e.action, e.detail])


def random_trace(rng, n, hand_rate=0.1, low_conf_rate=0.15, control_rate=0.1):
    """Random event stream biased towards runs of one label so that the
    controller regularly reaches Sorting."""
    events, current = [], rng.choice(RECYCLING_LABELS)
    for _ in range(n):
        u = rng.random()
        if u < control_rate:
            events.append([Tick(), SortComplete(), Timeout()][rng.integers(3)])
            continue
        if rng.random() < hand_rate:
            label = HAND
        elif rng.random() < 0.7:
            label = current
        else:
            current = label = rng.choice(BIN_LABELS)
        conf = rng.uniform(0, 0.6) if rng.random() < low_conf_rate else rng.uniform(0.6, 1.0)
        events.append(Classified(str(label), float(conf)))
    return events
