import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

import triage

DATA = Path(os.environ.get("TRIAGE_TEST_DATA", Path(__file__).parents[1] / "data"))


def test_shannon_index_worked_values():
    assert triage.shannon_index([0.033, 0.033, 0.9, 0.034]) == pytest.approx(0.44, abs=0.01)
    assert triage.shannon_index([0.25, 0.25, 0.25, 0.25]) == pytest.approx(math.log(4))
    assert triage.argmax_label([0.2, 0.4, 0.4]) == 1


def test_invalid_vector_raises():
    with pytest.raises(triage.ValidationError):
        triage.shannon_index([0.5, -0.1, 0.6])
    assert issubclass(triage.ValidationError, triage.TriageError)


def test_selection():
    probs = {"a": [0.4, 0.3, 0.3], "b": [0.98, 0.01, 0.01], "c": [0.01, 0.98, 0.01]}
    labels = {"a": 0, "b": 0, "c": 0}
    assert triage.build_candidates(probs, labels, 0.4) == ["a"]
    flags = triage.detect(probs, labels, 0.2)
    assert [f["sample_id"] for f in flags] == ["c"]
    assert flags[0]["predicted"] == 1


def test_transforms():
    image = np.array([[0.1, 0.2], [0.3, 0.4]])
    rotated = triage.apply_transform(image, triage.TransformSpec.rotate2d(90))
    np.testing.assert_array_equal(rotated, [[0.2, 0.4], [0.1, 0.3]])
    rgb = np.random.default_rng(0).random((5, 6, 3))
    same = triage.apply_transform(rgb, triage.TransformSpec.identity("perspective"))
    np.testing.assert_array_equal(same, rgb)
    spec = triage.choice(3, 10, (28, 28, 1), kinds=["pan"])
    assert spec.kind == "pan"
    assert spec == triage.choice(3, 10, (28, 28, 1), kinds=["pan"])
    assert json.loads(spec.to_json())["kind"] == "pan"


def test_load_digits_and_model(tmp_path):
    ids, images, labels = triage.load_idx(
        DATA / "digits/test-images.idx3-ubyte", DATA / "digits/test-labels.idx1-ubyte"
    )
    assert images.shape == (500, 8, 8, 1)
    assert len(ids) == 500 and labels[:3].tolist() == [0, 1, 4]
    with pytest.raises(triage.ParseError):
        triage.load_idx(DATA / "digits/test-labels.idx1-ubyte", DATA / "digits/test-labels.idx1-ubyte")


def test_cli_round_trip(tmp_path):
    code, out, err = triage.run_cli(["sweep", "--taus", "0.4,0.1", "--out", str(tmp_path)])
    assert code == 2
    assert "error [config]" in err
    code, out, _ = triage.run_cli(["--help"])
    assert code == 0 and "generate" in out
