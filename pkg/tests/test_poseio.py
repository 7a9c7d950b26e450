import json

import numpy as np
import pytest

from regait.errors import (
    MultiplePeopleError,
    NoPersonDetectedError,
    PoseDocumentError,
)
from regait.model import FramePose, JointId, Keypoint2D
from regait.poseio import (
    frame_index_from_name,
    load_pose_directory,
    parse_pose_document,
    pose_filename,
    serialize_pose_document,
    trajectories_from_csv,
    trajectories_to_csv,
    write_pose_file,
)


def make_document(people_triples, canvas=(1280, 720)):
    people = [{"pose_keypoints_2d": list(t)} for t in people_triples]
    return json.dumps({"version": 1.3, "canvas_size": list(canvas), "people": people})


def person_values(**joints):
    values = [0.0] * 75
    for joint, (x, y, c) in joints.items():
        base = 3 * int(JointId[joint])
        values[base : base + 3] = [x, y, c]
    return values


class TestParse:
    def test_direct_field_mapping(self):
        doc = make_document([person_values(R_KNEE=(320.0, 410.5, 0.91))])
        pose = parse_pose_document(doc, frame_index=4)
        got = pose.get(JointId.R_KNEE)
        assert (got.x, got.y, got.confidence) == (320.0, 410.5, 0.91)
        assert pose.frame_index == 4

    def test_zero_people_raises(self):
        with pytest.raises(NoPersonDetectedError):
            parse_pose_document(make_document([]), 0)

    def test_zero_confidence_triple_is_invalid(self):
        doc = make_document([person_values(R_ANKLE=(0.0, 0.0, 0.0), NECK=(5, 5, 0.8))])
        pose = parse_pose_document(doc, 0)
        assert pose.get(JointId.R_ANKLE) is None
        assert pose.valid(JointId.NECK)

    def test_wrong_triple_count_rejected(self):
        doc = json.dumps({"people": [{"pose_keypoints_2d": [0.0] * 74}]})
        with pytest.raises(PoseDocumentError, match="75"):
            parse_pose_document(doc, 0)

    def test_malformed_json_rejected(self):
        with pytest.raises(PoseDocumentError):
            parse_pose_document(b"not json{", 0)
        with pytest.raises(PoseDocumentError):
            parse_pose_document(json.dumps({"nope": 1}), 0)

    def test_multiple_people_need_a_rule(self):
        doc = make_document(
            [person_values(NECK=(5, 5, 0.9)), person_values(NECK=(500, 5, 0.9))]
        )
        with pytest.raises(MultiplePeopleError):
            parse_pose_document(doc, 0)

    def test_largest_person_selected(self):
        small = person_values(NECK=(5, 5, 0.9), MID_HIP=(6, 10, 0.9))
        big = person_values(NECK=(100, 50, 0.9), MID_HIP=(200, 400, 0.9))
        pose = parse_pose_document(make_document([small, big]), 0, person="largest")
        assert pose.get(JointId.NECK).x == 100

    def test_person_index_override(self):
        a = person_values(NECK=(1, 1, 0.9))
        b = person_values(NECK=(2, 2, 0.9))
        pose = parse_pose_document(make_document([a, b]), 0, person=1)
        assert pose.get(JointId.NECK).x == 2
        with pytest.raises(PoseDocumentError):
            parse_pose_document(make_document([a, b]), 0, person=5)


class TestRoundTrip:
    def test_parse_serialize_parse_identity(self):
        doc = make_document(
            [person_values(R_KNEE=(320.0, 410.5, 0.91), L_ANKLE=(101.25, 600.5, 0.77))]
        )
        first = parse_pose_document(doc, 7)
        second = parse_pose_document(serialize_pose_document(first), 7)
        assert first == second

    def test_invalid_joints_reserialize_as_zero_triples(self):
        pose = FramePose(0, {JointId.NECK: Keypoint2D(4.0, 5.0, 0.5)})
        data = json.loads(serialize_pose_document(pose))
        values = data["people"][0]["pose_keypoints_2d"]
        assert values[3 : 6] == [4.0, 5.0, 0.5]
        assert sum(abs(v) for i, v in enumerate(values) if i not in (3, 4, 5)) == 0


class TestNaming:
    def test_ordinal_naming(self):
        assert pose_filename("clip", 7) == "clip_000000000007_keypoints.json"
        assert frame_index_from_name("clip_000000000042_keypoints.json") == 42

    def test_bad_name_rejected(self):
        with pytest.raises(PoseDocumentError):
            frame_index_from_name("whatever.json")


class TestDirectory:
    def test_load_sorted_with_missing_as_empty(self, tmp_path):
        for i in (0, 2):
            write_pose_file(
                FramePose(i, {JointId.NECK: Keypoint2D(float(i), 1.0, 0.9)}),
                tmp_path,
            )
        frames = load_pose_directory(tmp_path, n_frames=3)
        assert [f.frame_index for f in frames] == [0, 1, 2]
        assert frames[1].keypoints == {}
        assert frames[2].get(JointId.NECK).x == 2.0

    def test_zero_person_file_becomes_empty_frame(self, tmp_path):
        (tmp_path / "f_000000000000_keypoints.json").write_text(
            json.dumps({"people": []})
        )
        frames = load_pose_directory(tmp_path)
        assert frames[0].keypoints == {}


class TestTrajectoryCsv:
    def test_round_trip(self, tmp_path, walk):
        path = trajectories_to_csv(walk.trajectories, tmp_path / "t.csv")
        back = trajectories_from_csv(path)
        assert back.sample_rate == walk.trajectories.sample_rate
        for joint in walk.trajectories.joints():
            a, b = walk.trajectories.track(joint), back.track(joint)
            assert np.array_equal(a.valid, b.valid)
            assert np.allclose(a.x, b.x, atol=1e-6)
            assert np.allclose(a.y, b.y, atol=1e-6)
