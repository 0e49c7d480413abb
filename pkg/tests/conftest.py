import json
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def frozen():
    """50-digit reference values produced by ``tests/oracles/generate.py``."""
    raw = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())
    return {k: float(v) for k, v in raw.items()}
