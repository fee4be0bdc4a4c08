import pathlib

import pytest

SAMPLES = pathlib.Path(__file__).resolve().parent.parent / "samples"


@pytest.fixture(scope="session")
def samples_dir():
    return SAMPLES


@pytest.fixture(scope="session")
def corpus_paths():
    return sorted(SAMPLES.glob("*.c"))


@pytest.fixture(scope="session")
def corpus_sources(corpus_paths):
    return {p.name: p.read_text() for p in corpus_paths}
