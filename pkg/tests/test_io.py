import json

import numpy as np
import pytest

from physmotion.contact import ContactState
from physmotion.io import (MotionFormatError, MotionSequence, read_contacts, read_motion,
                           write_contacts, write_motion)


@pytest.fixture
def seq(human):
    rng = np.random.default_rng(0)
    T = 6
    return MotionSequence.from_model(human, rng.normal(size=(T, 43)) * 1e3 ** rng.normal(size=(T, 43)),
                                     30.0, positions=rng.normal(size=(T, 37, 3)),
                                     keypoints={"input": rng.normal(size=(T, 37, 2))})


def test_round_trip_is_bitwise(seq, tmp_path, human):
    p = tmp_path / "m.json"
    write_motion(seq, p)
    back = read_motion(p, human)
    assert back.equals(seq)
    assert np.array_equal(back.q.view(np.uint64), seq.q.view(np.uint64))


def edit(tmp_path, seq, fn):
    p = tmp_path / "m.json"
    write_motion(seq, p)
    d = json.loads(p.read_text())
    fn(d)
    p.write_text(json.dumps(d))
    return p


def test_zero_fps_rejected(seq, tmp_path):
    p = edit(tmp_path, seq, lambda d: d.update(fps=0))
    with pytest.raises(MotionFormatError, match="fps"):
        read_motion(p)


def test_wrong_q_length_names_frame(seq, tmp_path):
    p = edit(tmp_path, seq, lambda d: d["frames"][3]["q"].pop())
    with pytest.raises(MotionFormatError, match="frame 3"):
        read_motion(p)


def test_parse_error_has_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"schema_version": 1,\n "fps": 25,\n oops}')
    with pytest.raises(MotionFormatError, match="line 3"):
        read_motion(p)


def test_schema_mismatch(seq, tmp_path):
    p = edit(tmp_path, seq, lambda d: d.update(schema_version=2))
    with pytest.raises(MotionFormatError, match="schema_version"):
        read_motion(p)


def test_missing_field(seq, tmp_path):
    p = edit(tmp_path, seq, lambda d: d.pop("binding"))
    with pytest.raises(MotionFormatError, match="binding"):
        read_motion(p)


def test_binding_failure_lists_names(seq, tmp_path, human):
    def rename(d):
        d["binding"]["dofs"][10] = "tail_0"
    p = edit(tmp_path, seq, rename)
    with pytest.raises(MotionFormatError, match="tail_0") as e:
        read_motion(p, human)
    assert human.dof_names[10] in str(e.value)


def test_partial_positions_rejected(seq, tmp_path):
    p = edit(tmp_path, seq, lambda d: d["frames"][2].pop("positions"))
    with pytest.raises(MotionFormatError, match="frame 2"):
        read_motion(p)


def test_non_finite_q(seq, tmp_path):
    seq.q[4, 0] = np.nan
    p = tmp_path / "m.json"
    write_motion(seq, p)
    with pytest.raises(MotionFormatError, match="frame 4"):
        read_motion(p)


def test_contacts_round_trip(tmp_path):
    states = [ContactState(t % 2 == 0, (True, t % 3 == 0, False, True), t) for t in range(7)]
    p = tmp_path / "c.csv"
    write_contacts(states, p)
    assert read_contacts(p) == states


def test_contacts_errors(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("frame,a,b\n")
    with pytest.raises(MotionFormatError, match="header"):
        read_contacts(p)
    p.write_text("frame,stationary,left_heel,left_forefoot,right_heel,right_forefoot\n0,1,1,2,1,1\n")
    with pytest.raises(MotionFormatError, match="line 2"):
        read_contacts(p)
