import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

SCENARIO_DIR = Path(__file__).parent.parent / "src" / "ensplan" / "scenarios"


@pytest.fixture(scope="session")
def emergency_path():
    return str(SCENARIO_DIR / "emergency_brake.json")


@pytest.fixture(scope="session")
def overtaking_path():
    return str(SCENARIO_DIR / "overtaking.json")
