import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from mpst.surface import parse

sys.path.insert(0, os.path.dirname(__file__))

ROOT = Path(__file__).resolve().parent.parent
PROTOCOLS = ROOT / "protocols"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def oauth():
    return parse((PROTOCOLS / "oauth.mpst").read_text())


@pytest.fixture(scope="session")
def cex():
    return parse((PROTOCOLS / "counterexamples.mpst").read_text())
