"""Raw-array, CSV and manifest writers shared by the harness."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ShapeError


def _sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_raw(path, arr, **meta):
    """Write ``arr`` as little-endian float64, C order, plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    a = np.ascontiguousarray(arr, dtype="<f8")
    path.write_bytes(a.tobytes(order="C"))
    side = {"shape": list(a.shape), "dtype": "f8", "order": "C", "endianness": "little"}
    side.update(meta)
    _sidecar_path(path).write_text(json.dumps(side, indent=2, default=_json_default) + "\n")
    return path


def read_raw(path):
    path = Path(path)
    side = json.loads(_sidecar_path(path).read_text())
    if side.get("dtype") != "f8" or side.get("endianness") != "little":
        raise ShapeError(f"{path}: unsupported sidecar {side}")
    a = np.frombuffer(path.read_bytes(), dtype="<f8")
    return a.reshape(side["shape"]).astype(float), side


def complex_to_interleaved(u):
    """(2, N2, N1) complex -> (N2, N1, 4) real with (Re u1, Im u1, Re u2, Im u2)."""
    out = np.empty(u.shape[1:] + (4,))
    out[..., 0] = u[0].real
    out[..., 1] = u[0].imag
    out[..., 2] = u[1].real
    out[..., 3] = u[1].imag
    return out


def interleaved_to_complex(a):
    if a.shape[-1] != 4:
        raise ShapeError(f"expected trailing dimension 4, got {a.shape}")
    return np.stack([a[..., 0] + 1j * a[..., 1], a[..., 2] + 1j * a[..., 3]])


def fmt(v):
    """Shortest round-trip text for a float (repr), ints unchanged."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = [r for r in rd]
    return header, rows


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(blob.encode()).hexdigest()


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(run_dir, cfg, extra=None):
    """List every file under ``run_dir`` (with shape for raw arrays) and the config hash."""
    run_dir = Path(run_dir)
    files = []
    for p in sorted(run_dir.rglob("*")):
        if not p.is_file() or p.name == "manifest.json":
            continue
        entry = {"path": str(p.relative_to(run_dir)), "bytes": p.stat().st_size,
                 "sha256": file_digest(p)}
        side = _sidecar_path(p)
        if side.exists():
            entry["shape"] = json.loads(side.read_text()).get("shape")
        files.append(entry)
    man = {"config_hash": config_hash(cfg), "files": files}
    if extra:
        man.update(extra)
    return write_json(run_dir / "manifest.json", man)
