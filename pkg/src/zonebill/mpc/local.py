"""Single-threaded execution of the three computing parties, for tests and tools.

Programs are stepped in lockstep and messages are handed over directly, so
a run is deterministic and needs no transport. The returned transcript lists
``(round, sender, receiver, sizes)`` for every message.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .engine import Engine, ZeroSharing, make_engine
from .preprocessing import PreprocRequest, deal
from .rounds import Program
from .shares import N_PARTIES, Backend

Transcript = list[tuple[int, int, int, tuple[int, ...]]]


def local_engines(backend: Backend, request: PreprocRequest | None = None, seed=0) -> list[Engine]:
    stores = deal(request or PreprocRequest(), backend, seed)
    rng = np.random.default_rng([0x5EED, *np.atleast_1d(seed).tolist()])
    keys = [int(k) for k in rng.integers(0, 1 << 63, size=N_PARTIES)]
    engines = []
    for pid in range(N_PARTIES):
        zero = ZeroSharing(keys[pid], keys[(pid + 1) % N_PARTIES])
        engines.append(make_engine(backend, pid, stores[pid], zero))
    return engines


def run_programs(programs: list[Program]) -> tuple[list, Transcript]:
    """Run one program per party to completion."""
    results: list = [None] * len(programs)
    inbox: list = [None] * len(programs)
    transcript: Transcript = []
    rnd = 0
    while True:
        requests = {}
        for i, prog in enumerate(programs):
            try:
                requests[i] = prog.send(inbox[i])
            except StopIteration as stop:
                results[i] = stop.value
        if not requests:
            return results, transcript
        if len(requests) != len(programs):
            raise RuntimeError(f"parties {sorted(requests)} still communicating after others finished")
        rnd += 1
        for i, ex in requests.items():
            for peer, arrays in sorted(ex.send.items()):
                transcript.append((rnd, i, peer, tuple(a.size for a in arrays)))
        for i, ex in requests.items():
            inbox[i] = {}
            for peer, specs in ex.recv.items():
                arrays = requests[peer].send.get(i, [])
                if len(arrays) != len(specs):
                    raise RuntimeError(f"party {i} expected {len(specs)} arrays from {peer}, got {len(arrays)}")
                inbox[i][peer] = [a.copy() for a in arrays]


def run_local(engines: list[Engine], program: Callable[[Engine, int], Program]) -> list:
    """Run ``program(engine, pid)`` at every party; returns the per-party results."""
    results, _ = run_programs([program(e, e.pid) for e in engines])
    return results
