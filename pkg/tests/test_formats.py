import json

import numpy as np
import pytest

from potts_mcem import formats
from potts_mcem.formats import FormatError


def test_grid_round_trip_is_exact(tmp_path):
    a = np.random.default_rng(0).normal(size=(4, 7)) * 1e3
    a[0, 0] = 0.1
    p = formats.write_grid(tmp_path / "a.csv", a)
    assert np.array_equal(formats.read_grid(p), a)
    assert p.read_text().splitlines()[0].split(",")[0] == "0.10000000000000001"


@pytest.mark.parametrize("text", ["", "1,2\n3\n", "1,x\n", "1,nan\n"])
def test_bad_grids(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(FormatError):
        formats.read_grid(p)


def test_pgm_binary_layout(tmp_path):
    g = np.array([[0, 1, 256], [65535, 2, 3]])
    formats.write_pgm(tmp_path / "g.pgm", g, 1.5, 0.25)
    raw = (tmp_path / "g.pgm").read_bytes()
    assert raw[:15] == b"P5\n3 2\n65535\n\x00\x00"
    assert raw[15:17] == b"\x00\x01" and raw[17:19] == b"\x01\x00" and len(raw) == 13 + 12
    meta = json.loads((tmp_path / "g.pgm.json").read_text())
    assert meta == {"kind": "labels", "width": 3, "height": 2, "maxval": 65535, "offset": 1.5, "scale": 0.25}
    back, m = formats.read_pgm(tmp_path / "g.pgm")
    assert np.array_equal(back, g) and m["offset"] == 1.5
    np.testing.assert_array_equal(formats.read_pgm_values(tmp_path / "g.pgm"), 1.5 + 0.25 * g)


def test_pgm_text_and_comments(tmp_path):
    g = np.array([[5, 6], [7, 8]])
    formats.write_pgm(tmp_path / "t.pgm", g, binary=False)
    assert (tmp_path / "t.pgm").read_text() == "P2\n2 2\n65535\n5 6\n7 8\n"
    (tmp_path / "c.pgm").write_bytes(b"P2\n# made by hand\n2 1 # w h\n255\n3 4\n")
    back, meta = formats.read_pgm(tmp_path / "c.pgm")
    assert back.tolist() == [[3, 4]] and meta["scale"] == 1.0
    (tmp_path / "c8.pgm").write_bytes(b"P5 2 1 255\n\x07\x09")
    assert formats.read_pgm(tmp_path / "c8.pgm")[0].tolist() == [[7, 9]]


@pytest.mark.parametrize("raw", [b"P6\n1 1\n255\n\x00", b"P5\n2 2\n65535\n\x00", b"P2\n2", b"P2\n2 1\n255\n1\n"])
def test_bad_pgm(tmp_path, raw):
    (tmp_path / "b.pgm").write_bytes(raw)
    with pytest.raises(FormatError):
        formats.read_pgm(tmp_path / "b.pgm")


def test_pgm_rejects_out_of_range(tmp_path):
    for g in (np.array([[-1]]), np.array([[65536]]), np.array([[0.5]])):
        with pytest.raises(ValueError):
            formats.write_pgm(tmp_path / "x.pgm", g)


def test_labels_and_render(tmp_path):
    lab = np.array([[1, 2], [10, 3]])
    formats.write_labels(tmp_path / "l.pgm", lab)
    assert np.array_equal(formats.read_labels(tmp_path / "l.pgm"), lab)
    v = np.array([[-2.0, 0.0], [1.0, 3.0]])
    formats.render_map(tmp_path / "m.pgm", v)
    g, meta = formats.read_pgm(tmp_path / "m.pgm")
    assert g.min() == 0 and g.max() == 65535 and meta["kind"] == "map"
    np.testing.assert_allclose(formats.read_pgm_values(tmp_path / "m.pgm"), v, atol=meta["scale"] / 2 + 1e-12)
    with pytest.raises(FormatError):
        formats.read_labels(tmp_path / "m.pgm")
    formats.render_map(tmp_path / "k.pgm", np.full((2, 2), 4.0))
    assert np.all(formats.read_pgm_values(tmp_path / "k.pgm") == 4.0)


def test_load_image_dispatch(tmp_path):
    formats.write_grid(tmp_path / "a.csv", np.eye(2))
    formats.render_map(tmp_path / "a.pgm", np.eye(2))
    assert np.array_equal(formats.load_image(tmp_path / "a.csv"), np.eye(2))
    assert np.allclose(formats.load_image(tmp_path / "a.pgm"), np.eye(2))
    with pytest.raises(FormatError):
        formats.load_image(tmp_path / "missing.csv")


def test_table_cells(tmp_path):
    rows = [dict(a=1, b=0.1, c=float("nan"), d=True, e=None, f="x,y", g=np.int64(3))]
    p = formats.write_table(tmp_path / "t.csv", rows)
    assert p.read_bytes() == b'a,b,c,d,e,f,g\n1,0.10000000000000001,nan,true,,"x,y",3\n'
    assert formats.read_table(p)[0]["f"] == "x,y"
    assert formats.write_table(tmp_path / "e.csv", [], ["a", "b"]).read_text() == "a,b\n"
