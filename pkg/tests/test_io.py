import numpy as np
import pytest

from splatcurves import io
from splatcurves.curves import CurveNetwork
from splatcurves.geometry import Camera, look_at
from splatcurves.metrics import MetricReport
from splatcurves.render import SphericalGaussianSet
from splatcurves.scene import default_rig
from splatcurves.train import TrainLog


def random_gaussians(n=50, seed=0):
    rng = np.random.default_rng(seed)
    return SphericalGaussianSet(rng.uniform(size=(n, 3)), rng.uniform(size=n), rng.uniform(size=n), 0.005)


def test_gaussians_roundtrip_exact(tmp_path):
    g = random_gaussians()
    io.save_gaussians(tmp_path / "g.txt", g, {"phase": 1, "config": {"lr": [1e-4, 0.1]}})
    h, meta = io.load_gaussians(tmp_path / "g.txt", with_meta=True)
    for a in ("centers", "opacities", "colors"):
        assert np.array_equal(getattr(g, a), getattr(h, a))
    assert h.radius == g.radius
    assert meta == {"phase": 1, "config": {"lr": [1e-4, 0.1]}}


def test_empty_gaussian_file(tmp_path):
    io.save_gaussians(tmp_path / "g.txt", SphericalGaussianSet(np.zeros((0, 3)), [], []))
    assert len(io.load_gaussians(tmp_path / "g.txt")) == 0


def test_gaussian_file_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("hello\n")
    with pytest.raises(io.FormatError):
        io.load_gaussians(p)
    io.save_gaussians(p, random_gaussians(3))
    p.write_text(p.read_text().replace("# count 3", "# count 4"))
    with pytest.raises(io.FormatError):
        io.load_gaussians(p)


def test_points_roundtrip_exact(tmp_path):
    pts = np.random.default_rng(1).normal(size=(100, 3)) * 1e-3
    io.save_points(tmp_path / "p.txt", pts)
    assert np.array_equal(io.load_points(tmp_path / "p.txt"), pts)


def test_cameras_roundtrip_exact(tmp_path):
    cams = default_rig(7, 40) + [Camera(77.7, 66.6, 20.1, 19.9, 41, 40, look_at([2, 1, 0.3], [0.5, 0.5, 0.5]))]
    io.save_cameras(tmp_path / "c.json", cams)
    assert io.load_cameras(tmp_path / "c.json") == cams


def test_curves_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(2)
    net = CurveNetwork.from_arrays(rng.uniform(size=(5, 4, 3)), rng.uniform(0.3, 3, (5, 4)))
    io.save_curves(tmp_path / "c.json", net)
    back = io.load_curves(tmp_path / "c.json")
    assert np.array_equal(back.control_points, net.control_points)
    assert np.array_equal(back.weights, net.weights)


def test_malformed_documents(tmp_path):
    with pytest.raises(io.FormatError):
        io.curves_from_doc({"lines": []})
    with pytest.raises(io.FormatError):
        io.cameras_from_doc({"views": [{"fx": 1}]})


def test_report_roundtrip(tmp_path):
    r = MetricReport(0.0123, 0.91, 0.88, 0.8947, 0.6, 1000, 2400, 0.02)
    io.save_report(tmp_path / "r.json", r)
    assert io.load_report(tmp_path / "r.json") == r


def test_pgm_roundtrip(tmp_path):
    img = np.random.default_rng(3).uniform(size=(17, 23))
    io.save_pgm(tmp_path / "a.pgm", img)
    back = io.load_pgm(tmp_path / "a.pgm")
    assert back.shape == img.shape
    assert np.abs(back - img).max() <= 0.5 / 65535 + 1e-15
    io.save_pgm(tmp_path / "b.pgm", back)
    assert np.array_equal(io.load_pgm(tmp_path / "b.pgm"), back)


def test_pgm_8bit_and_comment(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    assert io.load_pgm(p).tolist() == [[0.0, 1.0]]


@pytest.mark.parametrize("raw", [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\x00", b"P5\n2", b"P5\nx 2\n255\n\x00\x00"])
def test_pgm_bad_files(tmp_path, raw):
    p = tmp_path / "bad.pgm"
    p.write_bytes(raw)
    with pytest.raises(io.FormatError):
        io.load_pgm(p)


def test_train_log_roundtrip(tmp_path):
    log = TrainLog(rows=[(1, 1, 3, 0.5, 0.25, 0.1, 0.0, float("nan"), 100), (2, 1, 0, 0.4, 0.2, 0.1, 0.0, 1.5, 101)])
    io.save_train_log(tmp_path / "l.tsv", log)
    rows = io.load_train_log(tmp_path / "l.tsv")
    assert [r["count"] for r in rows] == [100, 101]
    assert rows[1]["total"] == 0.4 and np.isnan(rows[0]["reg"])
