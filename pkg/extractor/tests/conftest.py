import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from tiny_model import build_student_dir


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory) -> str:
    return build_student_dir(str(tmp_path_factory.mktemp("student") / "tiny"), seed=0)


@pytest.fixture(scope="session")
def student(model_dir):
    from tokstat import load_student

    return load_student(model_dir)
