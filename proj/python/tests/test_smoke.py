import json
import os
import subprocess

import numpy as np
import pytest

import mvsa


def onion(label, conf, cx, cy, half=4):
    return {"label": label, "confidence": conf, "box": [cx - half, cy - half, cx + half, cy + half]}


def test_select_target_near_effector_wins():
    dets = [onion("blemished", 0.9, 103, 104), onion("unblemished", 0.95, 150, 50)]
    assert mvsa.select_target_onion(dets, (100, 100), 150) == "blemished"


def test_select_target_radius_is_strict():
    # 3-4-5 triangle scaled to exactly 40 px: not "near", so the end rule decides.
    dets = [onion("blemished", 0.9, 124, 132), onion("unblemished", 0.6, 10, 10)]
    assert mvsa.select_target_onion(dets, (100, 100), 0) == "unblemished"


def test_low_confidence_is_unknown():
    assert mvsa.select_target_onion([onion("blemished", 0.49, 100, 100)], (100, 100), 0) == "unknown"


def test_consolidate():
    assert mvsa.consolidate_status(["unblemished", "blemished", "unknown"]) == "blemished"
    assert mvsa.consolidate_status(["unknown", "unknown"]) == "unknown"
    assert mvsa.consolidate_status(["unknown", "unblemished"]) == "unblemished"


def test_fuse_matches_numpy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = rng.dirichlet(np.ones(3))
        c = rng.dirichlet(np.ones(4), size=3)
        dist, label = mvsa.fuse(g.tolist(), c.tolist())
        np.testing.assert_allclose(dist, g @ c, atol=1e-12)
        assert label == int(np.argmax(g @ c))


def test_fuse_shape_mismatch_raises():
    with pytest.raises(Exception):
        mvsa.fuse([0.5, 0.5], [[1.0, 0.0]])


def test_config_hash_is_key_order_free():
    assert mvsa.config_hash('{"a": 1, "b": 2}') == mvsa.config_hash('{"b": 2, "a": 1}')


def test_gen_data_and_read_frames(tmp_path):
    out = tmp_path / "d"
    code, text, err = mvsa.run_cli(["gen-data", "--episodes", "2", "--height", "30", "--width", "40",
                                    "--steps", "8", "--step-jitter", "0", "--out", str(out)])
    assert code == 0, err
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["views"] == 3
    frames = mvsa.read_tensor(str(out / "ep0_view1.mvst"))
    assert frames.shape == (8, 30, 40, 4)
    assert frames.min() >= 0.0 and frames.max() <= 1.0


def test_usage_error_exit_code():
    code, _, err = mvsa.run_cli(["train"])
    assert code == 2
    assert "--data" in err


def test_cli_binary_matches_module(tmp_path):
    exe = os.environ.get("MVSA_CLI")
    if not exe:
        pytest.skip("MVSA_CLI not set")
    args = ["gen-data", "--episodes", "1", "--height", "30", "--width", "40", "--steps", "6", "--step-jitter", "0"]
    subprocess.run([exe, *args, "--out", str(tmp_path / "a")], check=True, capture_output=True)
    assert mvsa.run_cli([*args, "--out", str(tmp_path / "b")])[0] == 0
    for name in ("manifest.json", "ep0_view0.mvst", "ep0_labels.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
