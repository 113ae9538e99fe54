import math

import numpy as np
import pytest

from pointdet import geometry
from pointdet.data_io import LabeledScene, SceneGenSpec, generate_scene
from pointdet.detector import (
    ContextConfig,
    Detector,
    DetectorConfig,
    Proposal,
    assign_membership,
    kitti_config,
    read_detections,
    toy_config,
    write_detections,
)
from pointdet.errors import ConfigError, DataError
from pointdet.geometry import Box7
from pointdet.sampling import PointCloud
from pointdet.train import (
    load_detector_checkpoint,
    save_detector_checkpoint,
    train_detector,
)


@pytest.fixture(scope="module")
def tiny_scene():
    return generate_scene(SceneGenSpec(extent=12.0, background_points=400,
                                       instances_per_class=((1, 1), (1, 1), (1, 1)),
                                       points_per_instance=(40, 60), seed=3))


@pytest.fixture(scope="module")
def tiny_detector():
    return Detector(toy_config(), seed=0)


# ---------------------------------------------------------------------------
# configuration


def test_context_config_validation():
    with pytest.raises(ConfigError):
        ContextConfig("inside-out", 1.0)
    with pytest.raises(ConfigError):
        ContextConfig("factor", 0.0)
    ContextConfig("centers", 0.0)  # amount unused in centers mode


def test_detector_config_dict_roundtrip():
    cfg = toy_config()
    back = DetectorConfig.from_dict(cfg.to_dict())
    assert back.to_dict() == cfg.to_dict()
    assert back.layers == cfg.layers
    np.testing.assert_array_equal(back.mean_sizes, cfg.mean_sizes)


def test_kitti_config_point_budgets():
    cfg = kitti_config()
    assert [l.npoint for l in cfg.layers] == [4096, 1024, 512, 256]
    assert [l.strategy for l in cfg.layers] == ["d-fps", "d-fps", "ctr-aware", "ctr-aware"]


def test_config_rejects_mismatched_mean_sizes():
    with pytest.raises(ConfigError):
        DetectorConfig(class_names=("A", "B"), mean_sizes=np.ones((3, 3)))


# ---------------------------------------------------------------------------
# membership assignment


def test_membership_none_mode_inside_only():
    box = Box7(0, 0, 0, 2, 2, 2, 0, instance_id=5)
    pts = np.array([[0, 0, 0], [0.9, 0, 0], [1.4, 0, 0]])
    out = assign_membership(pts, [box], ContextConfig("none", 0.0))
    np.testing.assert_array_equal(out, [5, 5, -1])


def test_membership_length_mode_extends_reach():
    box = Box7(0, 0, 0, 2, 2, 2, 0, instance_id=5)
    pts = np.array([[1.4, 0, 0]])
    out = assign_membership(pts, [box], ContextConfig("length", 1.0))
    np.testing.assert_array_equal(out, [5])


def test_membership_overlap_resolved_by_nearest_center():
    a = Box7(0, 0, 0, 4, 4, 4, 0, instance_id=0)
    b = Box7(3, 0, 0, 4, 4, 4, 0, instance_id=1)
    pts = np.array([[1.0, 0, 0], [2.0, 0, 0]])
    out = assign_membership(pts, [a, b], ContextConfig("none", 0.0))
    np.testing.assert_array_equal(out, [0, 1])


def test_membership_centers_mode_marks_one_point_per_instance():
    box = Box7(0, 0, 0, 2, 2, 2, 0, instance_id=5)
    pts = np.array([[0.4, 0, 0], [0.1, 0, 0], [0.8, 0, 0]])
    out = assign_membership(pts, [box], ContextConfig("centers", 0.0))
    np.testing.assert_array_equal(out, [-1, 5, -1])
    assert (out >= 0).sum() == 1


def test_membership_empty_inputs():
    out = assign_membership(np.zeros((0, 3)), [], ContextConfig("none", 0.0))
    assert len(out) == 0


# ---------------------------------------------------------------------------
# forward pass mechanics


def test_forward_shapes(tiny_detector, tiny_scene):
    state = tiny_detector.forward(tiny_scene.cloud, seed=0)
    m = tiny_detector.config.layers[-1].npoint
    assert state.votes.positions.shape == (m, 3)
    assert state.votes.shifted.shape == (m, 3)
    assert state.cls_logits.shape == (m, tiny_detector.config.num_classes)
    assert state.reg_out.shape == (m, 30)
    # Score heads run at every learned-sampling layer.
    learned = sum(1 for l in tiny_detector.config.layers
                  if l.strategy in ("cls-aware", "ctr-aware", "top-k"))
    assert len(state.sample_logits) == learned


def test_forward_zero_init_votes_start_at_points(tiny_scene):
    det = Detector(toy_config(), seed=1)
    state = det.forward(tiny_scene.cloud, seed=0)
    np.testing.assert_allclose(state.votes.shifted, state.votes.positions, atol=1e-12)


def test_forward_deterministic(tiny_detector, tiny_scene):
    a = tiny_detector.forward(tiny_scene.cloud, seed=0)
    b = tiny_detector.forward(tiny_scene.cloud, seed=0)
    np.testing.assert_array_equal(a.cls_logits.data, b.cls_logits.data)
    np.testing.assert_array_equal(a.reg_out.data, b.reg_out.data)


def test_losses_finite_and_backward_fills_grads(tiny_detector, tiny_scene):
    state = tiny_detector.forward(tiny_scene.cloud, seed=0)
    loss, breakdown = tiny_detector.compute_losses(tiny_scene, state)
    assert math.isfinite(float(loss.data))
    assert breakdown.total == pytest.approx(float(loss.data), rel=1e-9)
    tiny_detector.zero_grad()
    loss.backward()
    graded = sum(1 for p in tiny_detector.parameters() if p.grad is not None)
    assert graded > len(tiny_detector.parameters()) * 0.9


def test_detect_empty_scene(tiny_detector):
    cloud = PointCloud(np.random.default_rng(0).uniform(-5, 5, size=(50, 3)))
    # No boxes involved: detection still runs and returns a (possibly empty)
    # proposal list.
    props = tiny_detector.detect(cloud, seed=0)
    assert isinstance(props, list)


def test_postprocess_filters_scores_and_overlaps(tiny_detector):
    box_a = Box7(0, 0, 0, 2, 2, 2, 0)
    box_b = Box7(0.1, 0, 0, 2, 2, 2, 0)
    box_c = Box7(9, 9, 0, 2, 2, 2, 0)
    mk = lambda b, s: Proposal(b, np.array([s, 0.0, 0.0]))
    out = tiny_detector.postprocess(
        [mk(box_a, 0.9), mk(box_b, 0.8), mk(box_c, 0.7), mk(box_c, 0.1)],
        iou_threshold=0.3, score_threshold=0.3,
    )
    assert [p.box for p in out] == [box_a, box_c]


def test_state_arrays_roundtrip(tiny_scene):
    det = Detector(toy_config(), seed=2)
    arrays = det.state_arrays()
    other = Detector(toy_config(), seed=99)
    other.load_state_arrays(arrays)
    a = det.forward(tiny_scene.cloud, seed=0)
    b = other.forward(tiny_scene.cloud, seed=0)
    np.testing.assert_array_equal(a.reg_out.data, b.reg_out.data)


def test_load_state_arrays_rejects_mismatch():
    det = Detector(toy_config(), seed=0)
    arrays = det.state_arrays()
    arrays.pop(sorted(arrays)[0])
    with pytest.raises(DataError, match="mismatch"):
        det.load_state_arrays(arrays)
    arrays = det.state_arrays()
    name = sorted(arrays)[0]
    arrays[name] = np.zeros((1, 1))
    with pytest.raises(DataError, match="mismatch"):
        det.load_state_arrays(arrays)


# ---------------------------------------------------------------------------
# training loop


def test_train_short_run_reduces_loss(tiny_scene):
    det, opt, bds = train_detector([tiny_scene], toy_config(), steps=25, seed=0,
                                   peak_lr=1e-3)
    assert len(bds) == 25
    assert bds[-1].total < bds[0].total


def test_train_deterministic(tiny_scene):
    a = train_detector([tiny_scene], toy_config(), steps=5, seed=0, peak_lr=1e-3)
    b = train_detector([tiny_scene], toy_config(), steps=5, seed=0, peak_lr=1e-3)
    for pa, pb in zip(a[0].parameters(), b[0].parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)


def test_checkpoint_reload_is_inference_identical(tiny_scene, tmp_path):
    det, opt, _ = train_detector([tiny_scene], toy_config(), steps=5, seed=0,
                                 peak_lr=1e-3)
    path = tmp_path / "model.ckpt"
    save_detector_checkpoint(path, det, opt, step=5, total_steps=5,
                             peak_lr=1e-3, train_seed=0)
    back, meta, opt_arrays = load_detector_checkpoint(path)
    assert meta["step"] == 5 and meta["train_seed"] == 0
    assert opt_arrays  # optimizer moments travel with the checkpoint
    a = det.forward(tiny_scene.cloud, seed=0)
    b = back.forward(tiny_scene.cloud, seed=0)
    np.testing.assert_array_equal(a.cls_logits.data, b.cls_logits.data)
    np.testing.assert_array_equal(a.reg_out.data, b.reg_out.data)


def test_resume_training_continues(tiny_scene, tmp_path):
    det, opt, _ = train_detector([tiny_scene], toy_config(), steps=5, seed=0,
                                 peak_lr=1e-3)
    path = tmp_path / "model.ckpt"
    save_detector_checkpoint(path, det, opt, step=5, total_steps=10,
                             peak_lr=1e-3, train_seed=0)
    back, meta, opt_arrays = load_detector_checkpoint(path)
    det2, _, bds = train_detector([tiny_scene], steps=5, seed=0, peak_lr=1e-3,
                                  detector=back, optimizer_state=opt_arrays,
                                  start_step=5, total_steps=10)
    assert len(bds) == 5
    assert all(math.isfinite(b.total) for b in bds)


# ---------------------------------------------------------------------------
# detection record format


def test_detections_file_roundtrip(tmp_path):
    r = np.random.default_rng(4)
    props = [
        Proposal(Box7(*r.uniform(-10, 10, 3), *r.uniform(0.5, 4, 3),
                      r.uniform(-3, 3), class_id=c),
                 np.eye(3)[c] * r.uniform(0.4, 1.0))
        for c in (0, 1, 2)
    ]
    path = tmp_path / "dets.txt"
    write_detections(path, "f1", props)
    back = read_detections(path)
    assert set(back) == {"f1"}
    assert len(back["f1"]) == 3
    for p, (box, score) in zip(props, back["f1"]):
        assert score == pytest.approx(p.score, abs=1e-6)
        np.testing.assert_allclose(box.center, p.box.center, atol=1e-6)
        assert box.class_id == p.box.class_id


def test_read_detections_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("f1 Car 0.5 0 0 0 1 1 1\n")  # nine fields, not ten
    with pytest.raises(DataError, match="expected 10 fields"):
        read_detections(path)
    path.write_text("f1 Spaceship 0.5 0 0 0 1 1 1 0\n")
    with pytest.raises(DataError, match="unknown class"):
        read_detections(path)
