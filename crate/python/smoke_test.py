"""Smoke test for the flowcorrupt extension. Runs under pytest or as a script."""

import json
import math
import os
import tempfile

import flowcorrupt as fc


def test_kind_sets():
    assert len(fc.kitti_kinds()) == 20
    assert len(fc.gopro_kinds()) == 24
    assert set(fc.kitti_kinds()) <= set(fc.kinds())
    assert fc.derive_seed(7, "000002_10", "snow", 1) == 15380975089709411235


def test_corrupt_pair():
    img = fc.Image.sample()
    assert (img.width, img.height) == (128, 128)
    a, b = fc.corrupt_pair(img, img, "gaussian_noise", 3, seed=1)
    again, _ = fc.corrupt_pair(img, img, "gaussian_noise", 3, seed=1)
    assert a == again and a != img
    a, b = fc.corrupt_pair(img, img, "over_exposure", 5)
    assert a.quantized() == img.quantized() and b != img
    for bad in [("snow", 6), ("no_such_kind", 1)]:
        try:
            fc.corrupt_pair(img, img, *bad)
        except ValueError:
            pass
        else:
            raise AssertionError(bad)
    try:
        fc.corrupt_pair(img, img, "h264_crf", 1)
    except fc.FlowCorruptError:
        pass
    else:
        raise AssertionError("stream kind accepted a single pair")


def test_flow_files_and_metrics():
    with tempfile.TemporaryDirectory() as d:
        flow = fc.FlowField(3, 2, [0.5, 1.0, -1.5, 2.0, 0.0, 7.25], [1.0] * 6)
        fc.write_flow(os.path.join(d, "x.flo"), flow)
        back, valid = fc.read_flow(os.path.join(d, "x.flo"))
        assert back == flow and all(valid)
        mask = [True, False, True, True, True, True]
        fc.write_flow(os.path.join(d, "x.png"), flow, mask, format="kitti_png16")
        back, valid = fc.read_flow(os.path.join(d, "x.png"))
        assert valid == mask
        assert all(abs(p - q) <= 1 / 128 for p, q, m in zip(back.u, flow.u, mask) if m)

    zero = fc.FlowField.constant(8, 8, 0.0, 0.0)
    assert math.isclose(fc.epe(fc.FlowField.constant(8, 8, 3.0, 4.0), zero), 5.0)
    assert fc.rcre(zero, zero) == 0.0
    assert fc.prediction_path("000123_10", "snow", 3) == "snow/3/000123_10.flo"
    assert fc.prediction_path("000123_10", format="kitti_png16") == "clean/000123_10.png"


def _synthetic_kitti(root, pairs=121, w=16, h=12):
    os.makedirs(os.path.join(root, "image_2"))
    os.makedirs(os.path.join(root, "flow_occ"))
    for i in range(pairs):
        for frame, shift in (("10", 0), ("11", 2)):
            data = []
            for y in range(h):
                for x in range(w):
                    t = (x + shift) * 0.4 + y * 0.2 + i
                    data += [0.5 + 0.3 * math.sin(t), 0.5 + 0.3 * math.cos(t), 0.4]
            fc.Image(w, h, data).save_png(os.path.join(root, "image_2", f"{i:06}_{frame}.png"))
        gt = fc.FlowField.constant(w, h, 2.0, 0.0)
        fc.write_flow(os.path.join(root, "flow_occ", f"{i:06}_10.png"), gt, format="kitti_png16")


def test_benchmark_round_trip():
    with tempfile.TemporaryDirectory() as d:
        kitti, out, pred = (os.path.join(d, n) for n in ("kitti", "out", "pred"))
        _synthetic_kitti(kitti)
        manifest = json.loads(fc.build_kitti(kitti, out, kinds=["fog", "snow"], seed=4))
        assert len(manifest["pairs"]) == 1
        assert os.path.isfile(os.path.join(out, "manifest.json"))
        assert os.path.isfile(os.path.join(out, fc.corrupted_path("fog", 2, "000120_10", "b")))
        assert json.loads(fc.load_manifest(out)) == manifest

        # Only two kinds exist, so a full evaluation reports the grid as incomplete.
        fc.write_baseline(out, "constant:3,4", pred)
        try:
            fc.evaluate(out, pred, gt_from_manifest=True)
        except fc.FlowCorruptError as e:
            assert "incomplete grid" in str(e)
        else:
            raise AssertionError("partial benchmark evaluated")

        assert fc.run_cli(["corrupt", "--benchmark", "kitti-fc", "--data-root", kitti, "--out", out, "--seed", "4"]) == 0
        fc.write_baseline(out, "constant:3,4", pred)
        report = json.loads(fc.evaluate(out, pred, model_id="const", gt_from_manifest=True))
        assert math.isclose(report["epe_clean"], math.hypot(1.0, 4.0), rel_tol=1e-6)
        assert report["cre"] == 0.0 and report["rcre"] == 0.0
        assert len(report["cells"]) == 100


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
