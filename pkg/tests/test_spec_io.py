import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
import pytest

from weylwalk import zoo
from weylwalk.evolve import BoundReport, continuum_data, dispersion
from weylwalk.exceptions import WalkFileError
from weylwalk.spec_io import (
    emit_csv,
    load_study_config,
    parse_walk,
    read_walk,
    serialize_walk,
    write_study_summary,
    write_walk,
)
from weylwalk.walk import LatticeScale

# WEYLWALK_FUZZ_ITERATIONS=1000000 runs the full fuzz campaign.
FUZZ_ITERATIONS = int(os.environ.get("WEYLWALK_FUZZ_ITERATIONS", "3000"))
WALK_CODES = {"encoding", "malformed_json", "unknown_version", "duplicate_q", "shape_mismatch", "invalid_field"}


def _document(**overrides):
    document = {
        "version": "weylwalk/1",
        "d": 1,
        "k": 2,
        "scale": {"a": 1.0, "dt": 1.0},
        "coins": [
            {"q": [1], "matrix": [[[1, 0], [0, 0]], [[0, 0], [0, 0]]]},
            {"q": [-1], "matrix": [[[0, 0], [0, 0]], [[0, 0], [1, 0]]]},
        ],
    }
    document.update(overrides)
    return json.dumps(document)


@pytest.mark.parametrize("name", sorted(zoo.ZOO))
def test_round_trip_is_bit_exact(name):
    spec = zoo.build(name, m=0.37, scale=LatticeScale(a=0.1, dt=0.07))
    parsed = parse_walk(serialize_walk(spec))
    assert parsed.scale == spec.scale
    assert parsed.support == spec.support
    for q in spec.support:
        assert np.array_equal(parsed.coins[q], spec.coins[q])


def test_file_round_trip(tmp_path, bcc_walk):
    path = tmp_path / "bcc.json"
    write_walk(bcc_walk, path)
    assert read_walk(path).name == "bb_weyl_3d"


def test_parse_minimal_document():
    spec = parse_walk(_document())
    assert spec.d == 1 and spec.k == 2
    assert spec.support == ((-1,), (1,))


def test_duplicate_q():
    coins = [{"q": [1], "matrix": [[[1, 0], [0, 0]], [[0, 0], [0, 0]]]}] * 2
    with pytest.raises(WalkFileError) as e:
        parse_walk(_document(coins=coins))
    assert e.value.code == "duplicate_q"
    assert e.value.path == "coins[1].q"


def test_shape_mismatch_has_path():
    matrix = [[[1, 0]] * 3] * 3
    with pytest.raises(WalkFileError) as e:
        parse_walk(_document(coins=[{"q": [1], "matrix": matrix}]))
    assert e.value.code == "shape_mismatch"
    assert e.value.path == "coins[0].matrix"


def test_wrong_q_length():
    with pytest.raises(WalkFileError) as e:
        parse_walk(_document(coins=[{"q": [1, 0], "matrix": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]}]))
    assert e.value.code == "shape_mismatch"


def test_unknown_version():
    with pytest.raises(WalkFileError) as e:
        parse_walk(_document(version="weylwalk/2"))
    assert e.value.code == "unknown_version"


def test_malformed_json_reports_position():
    with pytest.raises(WalkFileError) as e:
        parse_walk('{"version": "weylwalk/1",\n  "d": }')
    assert e.value.code == "malformed_json"
    assert "line 2" in e.value.path


def test_invalid_field_path():
    with pytest.raises(WalkFileError) as e:
        parse_walk(_document(scale={"a": -1.0, "dt": 1.0}))
    assert e.value.code == "invalid_field"
    assert e.value.path == "scale.a"


def test_not_utf8():
    with pytest.raises(WalkFileError) as e:
        parse_walk(b"\xff\xfe{}")
    assert e.value.code == "encoding"


def test_parse_does_not_check_unitarity():
    coins = [{"q": [1], "matrix": [[[2, 0], [0, 0]], [[0, 0], [2, 0]]]}]
    assert parse_walk(_document(coins=coins)).coin_count == 1


@pytest.mark.parametrize("value", [10**30, -(10**19), 2**63, 2**31 + 1])
def test_displacement_out_of_range(value):
    coins = [{"q": [value], "matrix": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]}]
    with pytest.raises(WalkFileError) as e:
        parse_walk(_document(coins=coins))
    assert e.value.code == "invalid_field"
    assert e.value.path == "coins[0].q[0]"


def test_largest_displacement_is_usable():
    coins = [{"q": [2**31], "matrix": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]}]
    spec = parse_walk(_document(coins=coins))
    assert spec.displacements.tolist() == [[2**31]]


def test_fuzzed_inputs_only_raise_walk_file_errors(rng):
    seed = _document().encode()
    alphabet = np.frombuffer(b'{}[]",:0123456789.-eE truenullfalse\\\xff', dtype=np.uint8)
    big_numbers = [b"1" + b"0" * int(n) for n in (10, 19, 30, 400)]
    for _ in range(FUZZ_ITERATIONS):
        data = bytearray(seed)
        for _ in range(int(rng.integers(1, 6))):
            position = int(rng.integers(0, len(data)))
            action = rng.integers(0, 4)
            if action == 0:
                data[position] = int(rng.choice(alphabet))
            elif action == 1:
                del data[position]
            elif action == 2:
                data.insert(position, int(rng.integers(0, 256)))
            else:
                data[position:position] = big_numbers[int(rng.integers(0, len(big_numbers)))]
        try:
            spec = parse_walk(bytes(data))
        except WalkFileError as e:
            assert e.code in WALK_CODES
        else:
            assert spec.displacements.shape == (len(spec.coins), spec.d)


def test_random_bytes(rng):
    for _ in range(max(FUZZ_ITERATIONS // 6, 500)):
        data = rng.integers(0, 256, size=int(rng.integers(0, 64)), dtype=np.uint8).tobytes()
        with pytest.raises(WalkFileError):
            parse_walk(data)


def test_bound_report_csv():
    report = BoundReport(measured=0.5, analytic=1.0, K=8, qmax=3 ** 0.5, satisfied=True, lam=0.1, a=0.1)
    lines = emit_csv(report).split("\r\n")
    assert lines[0] == "measured,analytic,K,qmax,satisfied,kind,lambda,a"
    assert lines[1] == "0.5,1,8,1.7320508075688772,true,quadratic,0.10000000000000001,0.10000000000000001"
    assert lines[2] == ""


def test_empty_table_is_header_only(bcc_walk):
    table = dispersion(bcc_walk, continuum_data(bcc_walk), [0, 0, 0], [1, 1, 1], 0)
    text = emit_csv(table)
    assert text.count("\r\n") == 1
    assert text.startswith("s,p1,p2,p3,theta1_over_dt,theta2_over_dt,energy1,energy2")


def test_massless_dispersion_csv(massless_1d_walk):
    table = dispersion(massless_1d_walk, continuum_data(massless_1d_walk), [0.0], [0.5], 3)
    rows = [line.split(",") for line in emit_csv(table).strip().split("\r\n")[1:]]
    for row in rows:
        p, theta1, theta2 = float(row[1]), float(row[2]), float(row[3])
        assert theta1 == pytest.approx(-p, abs=1e-15)
        assert theta2 == pytest.approx(p, abs=1e-15)


def test_study_config_round_trip(tmp_path):
    path = tmp_path / "study.toml"
    path.write_text('[study]\nwalk = "bb_weyl_3d"\nlambda = 0.5\na_schedule = [0.2, 0.1, 0.05, 0.025]\n')
    config = load_study_config(path)
    assert config.lam == 0.5
    assert config.grid_per_dim == 64

    summary = tmp_path / "summary.toml"
    write_study_summary(summary, {"study": config.model_dump(by_alias=True, exclude_none=True), "note": None})
    with open(summary, "rb") as f:
        written = tomllib.load(f)
    assert written["study"]["lambda"] == 0.5
    assert "note" not in written
