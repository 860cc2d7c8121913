"""Round-structured protocol programs.

An interactive protocol is written as a generator. Each ``yield`` hands the
driver one :class:`Exchange` (arrays to send to each peer, and the shapes
expected back from each peer) and resumes with the received arrays::

    def reveal(x):
        got = yield Exchange(send={peer: [x]}, recv={peer: [spec]})
        return x + got[peer][0]

Sub-protocols compose with ``yield from``. :func:`gather` runs independent
programs side by side so that their messages for one round travel together.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Generator

import numpy as np

from ..runtime.wire import Spec

Arrays = dict[int, list[np.ndarray]]
Program = Generator["Exchange", Arrays, Any]


@dataclass
class Exchange:
    send: dict[int, list[np.ndarray]] = field(default_factory=dict)
    recv: dict[int, list[Spec]] = field(default_factory=dict)


def gather(*programs: Program) -> Program:
    """Run programs in lockstep; returns their results in order."""
    results: list[Any] = [None] * len(programs)
    inbox: dict[int, Arrays | None] = {i: None for i in range(len(programs))}
    active = list(range(len(programs)))
    while True:
        pending: dict[int, Exchange] = {}
        for i in active:
            try:
                pending[i] = programs[i].send(inbox[i])
            except StopIteration as stop:
                results[i] = stop.value
        if not pending:
            return results
        merged = Exchange()
        for ex in pending.values():
            for peer, arrays in ex.send.items():
                merged.send.setdefault(peer, []).extend(arrays)
            for peer, specs in ex.recv.items():
                merged.recv.setdefault(peer, []).extend(specs)
        incoming = yield merged
        offsets = {peer: 0 for peer in incoming}
        for i, ex in pending.items():
            mine = {}
            for peer, specs in ex.recv.items():
                start = offsets[peer]
                mine[peer] = incoming[peer][start : start + len(specs)]
                offsets[peer] = start + len(specs)
            inbox[i] = mine
        active = list(pending)


def local(value) -> Program:
    """A program that finishes without communicating (useful inside gather)."""
    return value
    yield  # pragma: no cover
