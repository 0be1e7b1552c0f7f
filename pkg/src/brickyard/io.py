"""File formats: ASCII PLY clouds, binary PPM/PGM images, atomic JSON."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .cloud import PointCloud


def atomic_write(path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    atomic_write(path, dumps_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_ply(path, pc: PointCloud) -> None:
    props = ["x", "y", "z"]
    if pc.normals is not None:
        props += ["nx", "ny", "nz"]
    lines = [
        "ply",
        "format ascii 1.0",
        f"comment frame {pc.frame}",
        f"element vertex {len(pc)}",
    ]
    lines += [f"property double {p}" for p in props]
    if pc.labels is not None:
        lines.append("property int label")
    lines.append("end_header")
    for i in range(len(pc)):
        row = [_fmt(v) for v in pc.points[i]]
        if pc.normals is not None:
            row += [_fmt(v) for v in pc.normals[i]]
        if pc.labels is not None:
            row.append(str(int(pc.labels[i])))
        lines.append(" ".join(row))
    atomic_write(path, "\n".join(lines) + "\n")


def read_ply(path) -> PointCloud:
    with open(path, encoding="utf-8") as f:
        text = f.read().splitlines()
    if not text or text[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    frame = "world"
    props: list[str] = []
    count = 0
    i = 1
    while i < len(text):
        tok = text[i].split()
        i += 1
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise ValueError("only ASCII PLY is supported")
        if tok[0] == "comment" and len(tok) >= 3 and tok[1] == "frame":
            frame = tok[2]
        elif tok[0] == "element" and tok[1] == "vertex":
            count = int(tok[2])
        elif tok[0] == "property":
            props.append(tok[-1])
        elif tok[0] == "end_header":
            break
    rows = [line.split() for line in text[i:i + count]]
    if len(rows) != count:
        raise ValueError(f"{path}: expected {count} vertices, found {len(rows)}")
    data = np.array(rows, dtype=float).reshape(count, len(props))
    col = {p: j for j, p in enumerate(props)}
    pts = data[:, [col["x"], col["y"], col["z"]]]
    normals = data[:, [col["nx"], col["ny"], col["nz"]]] if "nx" in col else None
    labels = data[:, col["label"]].astype(np.int64) if "label" in col else None
    return PointCloud(pts, normals, labels, frame)


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM needs an HxWx3 uint8 image")
    h, w, _ = img.shape
    atomic_write(path, f"P6\n{w} {h}\n255\n".encode() + img.tobytes())


def write_pgm16(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint16 or img.ndim != 2:
        raise ValueError("PGM16 needs an HxW uint16 image")
    h, w = img.shape
    atomic_write(path, f"P5\n{w} {h}\n65535\n".encode() + img.astype(">u2").tobytes())


def _read_netpbm(path):
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos].decode())
    pos += 1
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    return magic, w, h, maxval, data[pos:]


def read_ppm(path) -> np.ndarray:
    magic, w, h, maxval, body = _read_netpbm(path)
    if magic != "P6" or maxval != 255:
        raise ValueError(f"{path}: expected 8-bit P6")
    return np.frombuffer(body[: w * h * 3], dtype=np.uint8).reshape(h, w, 3).copy()


def read_pgm16(path) -> np.ndarray:
    magic, w, h, maxval, body = _read_netpbm(path)
    if magic != "P5":
        raise ValueError(f"{path}: expected P5")
    if maxval < 256:
        return np.frombuffer(body[: w * h], dtype=np.uint8).reshape(h, w).astype(np.uint16)
    return np.frombuffer(body[: w * h * 2], dtype=">u2").reshape(h, w).astype(np.uint16)
