import json
import math
import os
import struct
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from errors import UsageError
from report_io import read_json, read_transform_bin, to_plain, write_csv, write_json, write_transform_bin


class TestJson(unittest.TestCase):
    def test_to_plain(self):
        plain = to_plain({"a": np.arange(3), "b": np.float64(math.nan), "c": (np.int64(2), np.bool_(True))})
        self.assertEqual(plain, {"a": [0, 1, 2], "b": None, "c": [2, True]})
        self.assertIsNone(to_plain(math.inf))

    def test_write_and_read(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "report.json"
            write_json({"residual": np.float64(1e-12), "bad": math.nan}, path)
            text = path.read_text()
            self.assertNotIn("NaN", text)
            self.assertEqual(json.loads(text)["bad"], None)
            self.assertEqual(read_json(path)["residual"], 1e-12)

    def test_read_errors(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(UsageError):
                read_json(Path(tmp) / "absent.json")
            path = Path(tmp) / "broken.json"
            path.write_text("{")
            with self.assertRaises(UsageError):
                read_json(path)


class TestTransformFile(unittest.TestCase):
    def test_layout(self):
        matrix = np.arange(16, dtype=float).reshape(4, 4) / 7.0
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "transform.bin"
            write_transform_bin(matrix, 2, path)
            raw = path.read_bytes()
            self.assertEqual(len(raw), 16 + 8 * 16)
            self.assertEqual(struct.unpack_from("<8sII", raw), (b"RSTABT01", 2, 0))
            self.assertEqual(struct.unpack_from("<d", raw, 16 + 8)[0], matrix[0, 1])
            N, back = read_transform_bin(path)
            self.assertEqual(N, 2)
            np.testing.assert_array_equal(back, matrix)

    def test_wrong_shape(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValueError):
                write_transform_bin(np.eye(3), 2, Path(tmp) / "t.bin")

    def test_corrupt_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "t.bin"
            path.write_bytes(b"RSTAB")
            with self.assertRaises(UsageError):
                read_transform_bin(path)
            path.write_bytes(struct.pack("<8sII", b"NOTMAGIC", 1, 0) + bytes(32))
            with self.assertRaises(UsageError):
                read_transform_bin(path)
            path.write_bytes(struct.pack("<8sII", b"RSTABT01", 2, 0) + bytes(32))
            with self.assertRaises(UsageError):
                read_transform_bin(path)
            with self.assertRaises(UsageError):
                read_transform_bin(Path(tmp) / "absent.bin")


class TestCsv(unittest.TestCase):
    def test_full_precision(self):
        frame = pd.DataFrame({"t": [0.1, 1.0 / 3.0], "v": [math.pi, -1e-300]})
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "out.csv"
            write_csv(frame, path)
            back = pd.read_csv(path, float_precision="round_trip")
            np.testing.assert_array_equal(back.to_numpy(), frame.to_numpy())
            self.assertNotIn(b"\r", path.read_bytes())


if __name__ == "__main__":
    unittest.main()
