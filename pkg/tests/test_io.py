import json
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from htsl import io as hio
from htsl.processes import PathEnsemble, simulate_stable_levy

doubles = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(v=arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 8)), elements=doubles),
       step=st.sampled_from([1.0, 0.25, 1 / 3, 1 / 256]), kind=st.sampled_from(["values", "increments"]))
def test_csv_round_trip_bytes(v, step, kind):
    ens = PathEnsemble(v, step, kind)
    text = hio.ensemble_to_csv(ens)
    back = hio.ensemble_from_csv(text)
    assert np.array_equal(back.values, ens.values)
    assert back.grid_step == step and back.kind == kind
    assert hio.ensemble_to_csv(back) == text


@given(v=arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 8)), elements=doubles))
def test_binary_round_trip(v):
    blob = hio.ensemble_to_bytes(PathEnsemble(v, 0.5))
    assert len(blob) == 32 + 8 * v.size
    magic, version, P, cols, step = struct.unpack("<4sIQQd", blob[:32])
    assert (magic, version, P, cols, step) == (b"HTSL", 1, v.shape[0], v.shape[1], 0.5)
    assert np.array_equal(hio.ensemble_from_bytes(blob).values, v)


def test_binary_rejects_corruption():
    blob = hio.ensemble_to_bytes(PathEnsemble(np.zeros((2, 3))))
    with pytest.raises(ValueError, match="magic"):
        hio.ensemble_from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError, match="size"):
        hio.ensemble_from_bytes(blob[:-8])
    with pytest.raises(ValueError):
        hio.ensemble_from_bytes(blob[:10])


def test_csv_rejects_bad_header():
    with pytest.raises(ValueError):
        hio.ensemble_from_csv("1,2,3\n")


def test_file_helpers(tmp_path):
    ens = simulate_stable_levy(1.5, 8, 0.5, 3, seed=1)
    for name in ("e.csv", "e.bin"):
        hio.write_ensemble(ens, tmp_path / name)
        assert np.array_equal(hio.read_ensemble(tmp_path / name).values, ens.values)


def test_dumps_canonical():
    s = hio.dumps({"b": float("inf"), "a": np.float64(0.1), "c": np.arange(2)})
    assert s == '{\n  "a": 0.1,\n  "b": "unbounded",\n  "c": [\n    0,\n    1\n  ]\n}\n'
    assert json.loads(s)["b"] == "unbounded"


def test_tidy_csv():
    out = hio.tidy_csv([(4, "block_max", "q50", 0.1)])
    assert out == "level,statistic,quantity,value\n4,block_max,q50,0.10000000000000001\n"


@pytest.mark.parametrize("name", ["slln_certificate", "quasi_stationary_report", "diagnostics_report",
                                  "budget_report", "constants_table", "lfsm_demo"])
def test_schemas_are_valid(name):
    jsonschema = pytest.importorskip("jsonschema")
    jsonschema.Draft202012Validator.check_schema(hio.load_schema(name))
