import json
import os
import random
from pathlib import Path

import pytest

from tdcss import scheme

GOLDEN = Path(__file__).parent / "golden"
REGEN = os.environ.get("TDCSS_REGEN_GOLDEN") == "1"


def check_golden(name: str, text: str) -> None:
    """Compare ``text`` with tests/golden/<name>; TDCSS_REGEN_GOLDEN=1 rewrites it."""
    path = GOLDEN / name
    if REGEN or not path.exists():
        path.write_text(text, encoding="utf-8")
    assert text == path.read_text(encoding="utf-8")


UNIVERSE = [f"attr{i}" for i in range(12)]


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def system():
    """Shared keys: mpk/msk over a 12-attribute universe and one owner key."""
    r = random.Random(99)
    mpk, msk = scheme.setup(UNIVERSE, rng=r)
    seed = scheme.gen_seed(mpk, "owner", rng=r)
    pk, beta = scheme.pkeygen_pdo(mpk, seed.psi, rng=r)
    owner = scheme.PDOKeyMaterial(pk, beta, scheme.skeygen_pdo(seed.gamma, beta))
    return mpk, msk, owner
