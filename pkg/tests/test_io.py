import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wickbeam.io import FieldFileError, read_fields, to_jsonable, write_csv, write_fields, write_json
from wickbeam.spectral import Grid, random_field


class TestFieldFiles:
    @pytest.mark.parametrize("M,d,batch", [(6, 4, ()), (8, 2, (3,)), (10, 1, (2, 2))])
    def test_spectral_round_trip_is_exact(self, tmp_path, rng, M, d, batch):
        f = random_field(Grid(M, d), 1.0, rng, batch=batch)
        path = tmp_path / "f.b4df"
        write_fields(path, f)
        back = read_fields(path)
        assert back.grid == f.grid
        assert np.array_equal(back.coeffs, f.coeffs.reshape((-1,) + f.grid.shape))

    def test_physical_round_trip(self, tmp_path, rng):
        f = random_field(Grid(6, 4), 1.0, rng, batch=(2,))
        path = tmp_path / "f.b4df"
        write_fields(path, f, layout="physical")
        back = read_fields(path)
        assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-14

    def test_header_layout(self, tmp_path, rng):
        f = random_field(Grid(4, 3), 1.0, rng)
        path = tmp_path / "f.b4df"
        write_fields(path, f)
        raw = path.read_bytes()
        assert raw[:4] == b"B4DF"
        assert struct.unpack_from("<IIIIQ", raw, 4) == (1, 3, 4, 0, 1)
        assert len(raw) == 28 + 16 * 4**3
        first = np.frombuffer(raw, "<f8", count=2, offset=28)
        assert first[0] == f.coeffs[0, 0, 0].real and first[1] == f.coeffs[0, 0, 0].imag

    def test_unknown_layout(self, tmp_path, rng):
        with pytest.raises(ValueError):
            write_fields(tmp_path / "f", random_field(Grid(4, 1), 1.0, rng), layout="wavelet")

    def _good(self, tmp_path, rng):
        path = tmp_path / "f.b4df"
        write_fields(path, random_field(Grid(4, 2), 1.0, rng))
        return path, bytearray(path.read_bytes())

    @pytest.mark.parametrize(
        "patch,message",
        [
            (lambda b: b.__setitem__(slice(0, 4), b"XXXX"), "magic"),
            (lambda b: b.__setitem__(slice(4, 8), struct.pack("<I", 7)), "version"),
            (lambda b: b.__setitem__(slice(16, 20), struct.pack("<I", 9)), "layout"),
            (lambda b: b.__delitem__(slice(-8, None)), "bytes"),
            (lambda b: b.__delitem__(slice(10, None)), "header"),
        ],
    )
    def test_malformed_files(self, tmp_path, rng, patch, message):
        path, raw = self._good(tmp_path, rng)
        patch(raw)
        path.write_bytes(bytes(raw))
        with pytest.raises(FieldFileError, match=message):
            read_fields(path)


class TestJsonCsv:
    def test_non_finite_and_numpy_values(self):
        obj = {"a": np.float64("nan"), "b": [np.inf, -np.inf], "c": np.arange(3), 1: np.bool_(True), "d": (np.int32(4),)}
        assert to_jsonable(obj) == {"a": "nan", "b": ["inf", "-inf"], "c": [0, 1, 2], "1": True, "d": [4]}

    def test_deterministic_json(self, tmp_path):
        write_json(tmp_path / "a.json", {"z": 1.5, "a": [float("nan")]})
        write_json(tmp_path / "b.json", {"a": [float("nan")], "z": 1.5})
        text = (tmp_path / "a.json").read_text()
        assert text == (tmp_path / "b.json").read_text()
        assert text.endswith("\n") and json.loads(text) == {"a": ["nan"], "z": 1.5}

    @given(x=st.floats(allow_nan=False, allow_infinity=False))
    def test_csv_floats_round_trip(self, tmp_path_factory, x):
        path = tmp_path_factory.mktemp("csv") / "r.csv"
        write_csv(path, [["x", "label"], [x, "s"], [np.float64(x), 3]])
        lines = path.read_text().split("\n")
        assert lines[0] == "x,label" and lines[-1] == ""
        assert float(lines[1].split(",")[0]) == x and float(lines[2].split(",")[0]) == x
        assert lines[2].endswith(",3")
