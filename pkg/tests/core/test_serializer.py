from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np
import pytest

from kmwave_core.exceptions import KMWaveCLIError
from kmwave_core.serialize import serialize


class MyEnum(IntEnum):
    FIRST = 1
    SECOND = 2


class Scheme(str, Enum):
    RK4 = "rk4"


@dataclass
class Level:
    n: int
    radius: float


class RegularClass:
    def __init__(self, title: str, count: int):
        self.title = title
        self.count = count


def test_primitive_types():
    assert serialize("test") == "test"
    assert serialize(123) == 123
    assert serialize(3.14) == 3.14
    assert serialize(True)
    assert serialize({"key": "value"}) == {"key": "value"}
    assert serialize(None) is None


def test_numpy_values():
    assert serialize(np.float64(0.5)) == 0.5
    assert type(serialize(np.int64(3))) is int
    assert serialize(np.array([[1.0, 2.0], [3.0, 4.0]])) == [[1.0, 2.0], [3.0, 4.0]]


def test_enum():
    assert serialize(MyEnum.FIRST) == 1
    assert serialize(Scheme.RK4) == "rk4"


def test_path():
    assert serialize(Path("out") / "frame_000000.csv") == str(Path("out") / "frame_000000.csv")


def test_nested_list():
    nested_list = [1, ["a", "b"], {"key": "value"}, (2, 3)]
    assert serialize(nested_list) == [1, ["a", "b"], {"key": "value"}, [2, 3]]


def test_dataclass():
    assert serialize(Level(n=2, radius=np.float64(1.5))) == {"n": 2, "radius": 1.5}


def test_regular_class():
    assert serialize(RegularClass(title="test", count=42)) == {"title": "test", "count": 42}


def test_complex_nested_structure():
    @dataclass
    class Report:
        scheme: Scheme
        levels: list
        passed: np.bool_

    report = Report(scheme=Scheme.RK4, levels=[Level(0, 0.5), Level(1, 0.75)], passed=np.bool_(True))
    assert serialize(report) == {
        "scheme": "rk4",
        "levels": [{"n": 0, "radius": 0.5}, {"n": 1, "radius": 0.75}],
        "passed": True,
    }


def test_empty_structures():
    assert serialize([]) == []
    assert serialize({}) == {}

    @dataclass
    class EmptyDataClass:
        pass

    assert serialize(EmptyDataClass()) == {}


def test_non_string_keys():
    with pytest.raises(KMWaveCLIError):
        serialize({1: "one"})
