import json
import math
from fractions import Fraction

import numpy as np
import pytest

from apcauchy.grid import GridFunction, TimeGrid, TrigPolynomial
from apcauchy.serialize import (dumps, read_grid_csv, to_jsonable, trig_from_dict,
                                trig_to_dict, write_grid_csv, write_json)


class TestJson:
    def test_special_values(self):
        doc = to_jsonable({"a": math.inf, "b": Fraction(4, 3), "c": 1 + 2j,
                           "d": np.float64(0.5), "e": np.array([1, 2])})
        assert doc == {"a": "inf", "b": "4/3", "c": [1.0, 2.0], "d": 0.5, "e": [1, 2]}

    def test_sorted_and_deterministic(self, tmp_path):
        a = write_json(tmp_path / "a.json", {"z": 1, "a": [0.1, 0.2]})
        b = write_json(tmp_path / "b.json", {"a": [0.1, 0.2], "z": 1})
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().index('"a"') < a.read_text().index('"z"')

    def test_float_round_trip(self):
        x = 0.1 + 0.2
        assert json.loads(dumps({"x": x}))["x"] == x


class TestCsv:
    def test_header_and_round_trip(self, tmp_path):
        g = TimeGrid(0.0, 1.0, 0.1)
        f = GridFunction(g, np.stack([np.sin(g.nodes), np.exp(g.nodes)], axis=1))
        p = write_grid_csv(tmp_path / "t.csv", f)
        assert p.read_text().splitlines()[0] == "t,v0,v1"
        back = read_grid_csv(p)
        assert np.array_equal(back.values, f.values)
        assert back.grid.n == g.n

    def test_rejects_nonuniform(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("t,v0\n0,1\n0.1,2\n0.5,3\n")
        with pytest.raises(ValueError, match="uniform"):
            read_grid_csv(p)

    def test_rejects_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x,y\n0,1\n")
        with pytest.raises(ValueError, match="header"):
            read_grid_csv(p)


class TestTrig:
    def test_round_trip(self):
        tp = TrigPolynomial.sines([1.0, math.sqrt(2)]) + TrigPolynomial.constant(0.5)
        back = trig_from_dict(json.loads(dumps(trig_to_dict(tp))))
        t = np.linspace(-3, 3, 13)
        assert np.allclose(back(t), tp(t))

    def test_missing_field(self):
        with pytest.raises(ValueError, match="'im'"):
            trig_from_dict({"dim": 1, "terms": [{"lambda": 1.0, "re": [1.0]}]})
