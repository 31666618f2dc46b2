from __future__ import annotations

import time

import pytest

from vrpqubo import assemble, parse_instance, solve_exhaustive

from oracles import desk_family

REFERENCE_DOC = """
{
  "depots": [{"id": "D1", "capacity": 3}],
  "vehicles": [{"id": "V1", "depot": "D1", "capacity": 3}],
  "customers": [{"id": "C1", "demand": 1}, {"id": "C2", "demand": 2}],
  "distances": {
    "customer_customer": [[0, 2], [4, 0]],
    "depot_customer": [[1, 5]],
    "customer_depot": [[7], [3]]
  }
}
"""


@pytest.fixture(scope="session")
def reference_instance():
    return parse_instance(REFERENCE_DOC)


@pytest.fixture(scope="session")
def family():
    """The shared desk-scale instance family with exhaustive ground truth.

    Returns (instances, models, layouts, samplesets, build_seconds); built
    once per session because several acceptance checks reuse it.
    """
    instances = desk_family()
    start = time.perf_counter()
    models, layouts, solved = [], [], []
    for inst in instances:
        model, layout = assemble(inst)
        models.append(model)
        layouts.append(layout)
        solved.append(solve_exhaustive(model))
    elapsed = time.perf_counter() - start
    return instances, models, layouts, solved, elapsed
