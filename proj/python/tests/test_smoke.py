import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import triplane


def small(variant):
    cfg = triplane.default_config(variant)
    cfg["dims"] = [8, 8, 8]
    cfg["feature_channels"] = 4
    cfg["plane_hidden"] = [4]
    return cfg


def test_default_config_round_trips():
    cfg = triplane.default_config("hybrid")
    assert cfg["variant"] == "hybrid"
    assert triplane.config_hash(cfg) == triplane.config_hash(dict(cfg))
    assert triplane.Model(cfg).config == cfg


def test_unknown_key_is_rejected():
    cfg = triplane.default_config("backbone")
    cfg["bogus"] = 1
    with pytest.raises(triplane.ConfigError):
        triplane.Model(cfg)


def test_flops_ordering_and_pe_share():
    totals = {v: triplane.count_flops(triplane.default_config(v), 64)["total_flops"]
              for v in ("backbone", "hybrid", "dense3d")}
    assert totals["backbone"] < totals["hybrid"] < totals["dense3d"]
    report = triplane.count_flops(triplane.default_config("hybrid"), (32, 32, 32))
    assert sum(s["flops"] for s in report["stages"]) == report["total_flops"]
    assert 0 < report["pe_share"] < 1


@pytest.mark.parametrize("variant", ["backbone", "hybrid", "dense3d"])
def test_forward_shape_and_determinism(variant):
    model = triplane.Model(small(variant))
    x = np.random.default_rng(0).random((1, 8, 8, 8), dtype=np.float32)
    y = model(x)
    assert y.shape == (1, 8, 8, 8)
    assert np.isfinite(y).all()
    np.testing.assert_array_equal(y, triplane.Model(small(variant))(x))


def test_forward_rejects_bad_rank():
    with pytest.raises(triplane.ShapeError):
        triplane.Model(small("backbone"))(np.zeros((8, 8, 8), dtype=np.float32))


def test_gen_shapes_and_vxg(tmp_path):
    samples = triplane.gen_shapes("complete", 4, (16, 16, 16), seed=3)
    assert len(samples) == 4
    assert [s[2] for s in samples] == [0, 1, 2, 3]
    for inp, target, _ in samples:
        assert inp.sum() <= target.sum()
    vol = np.stack([samples[0][1], samples[1][1]])
    path = str(tmp_path / "v.vxg")
    triplane.write_vxg(path, vol)
    np.testing.assert_array_equal(triplane.read_vxg(path), vol)
    with pytest.raises(triplane.IoError):
        triplane.read_vxg(str(tmp_path / "missing.vxg"))


def test_plot_is_parseable_svg(tmp_path):
    paths = []
    for name, gflops, score in (("a", 0.2, 0.61), ("b", 1.5, 0.72)):
        p = tmp_path / f"{name}.csv"
        p.write_text(f"epoch,split,metric,value\n0,model,gflops,{gflops}\n1,val,iou,{score}\n")
        paths.append(str(p))
    svg = triplane.plot_metrics(paths, ["a & co", "b"], title="IoU")
    root = ET.fromstring(svg.encode())
    ns = {"s": "http://www.w3.org/2000/svg"}
    series = root.findall(".//s:g[@class='series']", ns)
    assert [g.get("data-label") for g in series] == ["a & co", "b"]
    assert not math.isnan(float(root.get("width")))
