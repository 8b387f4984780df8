import json
from pathlib import Path

import pytest

from solidcdl.knowledge import load_default_kb
from solidcdl.problem import ProblemCDL, load_record

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = Path(__file__).parents[1] / "src" / "solidcdl" / "data" / "corpus"


@pytest.fixture(scope="session")
def kb():
    return load_default_kb()


@pytest.fixture
def fixtures():
    return FIXTURES


def fixture_record(name):
    return load_record(FIXTURES / name)


def problem(construction=(), text=(), goal="", answer="", image=()):
    return ProblemCDL.from_dict({"construction_cdl": list(construction), "text_cdl": list(text),
                                 "image_cdl": list(image), "goal_cdl": goal,
                                 "problem_answer": answer})


def gateway_fixture(name):
    return json.loads((FIXTURES / "gateway" / f"{name}.json").read_text())
