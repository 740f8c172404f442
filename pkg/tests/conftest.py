import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

D = 0.033  # robot diameter used throughout


@pytest.fixture
def rect_file(tmp_path):
    path = tmp_path / "rect.txt"
    path.write_text("\n".join(["#" * 10] * 6) + "\n")
    return path


@pytest.fixture
def annulus_file(tmp_path):
    rows = ["#######", "##...##", "##...##", "##...##", "#######"]
    path = tmp_path / "annulus.txt"
    path.write_text("\n".join(rows) + "\n")
    return path


def write_config(tmp_path, shape_path, **kw):
    lines = [f"shape_file = {shape_path}"]
    kw.setdefault("robot_count", 30)
    kw.setdefault("output_dir", str(tmp_path / "out"))
    for k, v in kw.items():
        lines.append(f"{k} = {v}")
    path = tmp_path / "scenario.cfg"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, printed after the run
VERDICTS = []


def record_verdict(name, ok, detail):
    VERDICTS.append(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[0][3:])):
            terminalreporter.write_line(line)
