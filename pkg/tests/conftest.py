import random
import sys

import pytest
from hypothesis import settings

from seq2act import synth
from seq2act.schema import load_schema
from seq2act.trainer import read_corpus

# reproducible property runs; some properties train or decode, so no deadline
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

SMALL_SCHEMA = """
# two types, enough for every constraint rule
type state
type city
entity texas : state
entity austin : city
relation next_to(state, state)
relation loc(city, state)
operation count(arg-for, arg-return)
operation not()
"""


@pytest.fixture(scope="session")
def toy_schema():
    return synth.toy_schema()


@pytest.fixture(scope="session")
def small_schema():
    return load_schema(SMALL_SCHEMA)


@pytest.fixture(scope="session")
def toy_train():
    return read_corpus(synth.TOY_TRAIN)


@pytest.fixture(scope="session")
def toy_test():
    return read_corpus(synth.TOY_TEST)


@pytest.fixture(scope="session")
def random_lfs(toy_schema):
    rng = random.Random(2024)
    return [synth.random_lf(rng, toy_schema, max_depth=4) for _ in range(1000)]


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
