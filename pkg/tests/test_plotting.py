from deltakws import plotting
from deltakws.evaluate import DetCurve, DetPoint
from deltakws.train import EpochStats


def curve(shift=0.0):
    return DetCurve([DetPoint(0.0, 40.0, 0.0, 4), DetPoint(0.5, 5.0 + shift, 0.1, 1),
                     DetPoint(1.0, 0.0, 1.0, 0)])


def test_det_svg_is_reproducible(tmp_path):
    for name in ("a.svg", "b.svg"):
        plotting.plot_det({"0": curve(), "12": curve(3.0)}, tmp_path / name, operating_point=0.5)
    a, b = (tmp_path / "a.svg").read_bytes(), (tmp_path / "b.svg").read_bytes()
    assert a == b
    assert b"<svg" in a


def test_scatter_and_loss(tmp_path):
    plotting.plot_score_scatter([0.1, 0.5, 0.9], [0.1, 0.6, 0.8], tmp_path / "s.svg", pr=0.98)
    plotting.plot_loss({"zero-sum": [EpochStats(1, 0.7, 0.5), EpochStats(2, 0.4, 0.8)]},
                       tmp_path / "l.png")
    assert (tmp_path / "s.svg").stat().st_size > 0
    assert (tmp_path / "l.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
