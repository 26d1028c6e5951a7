from pathlib import Path

import pytest

from cornercase import synth

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_spec() -> synth.ScenarioSpec:
    """The versioned 100-frame scenario used across the suite: a textured
    static background, a constant-velocity car, and a person whose
    velocity reverses at frame 60 near the image bottom."""
    return synth.load_scenario(DATA_DIR / "fixture_scenario.txt")


@pytest.fixture(scope="session")
def fixture_render(fixture_spec):
    return synth.generate_scenario(fixture_spec)


@pytest.fixture(scope="session")
def fixture_on_disk(fixture_spec, tmp_path_factory):
    """The fixture scenario written out as numbered PNG frames and masks."""
    from cornercase.cli import main

    root = tmp_path_factory.mktemp("fixture")
    rc = main(["synth", "--spec", str(DATA_DIR / "fixture_scenario.txt"), "--out", str(root)])
    assert rc == 0
    return root


