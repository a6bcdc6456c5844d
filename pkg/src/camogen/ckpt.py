"""Checkpoint directories: ``meta.json`` plus a little-endian tensor blob.

``tensors.bin`` layout (all integers little-endian)::

    magic   8 bytes  b"CAMOTNSR"
    version u32
    count   u32
    then ``count`` records:
        name_len u16, name (utf-8)
        dtype_len u8, dtype (numpy str, e.g. "<f4")
        ndim u8, shape ndim x u64
        nbytes u64, raw data (C order)

Records are written in sorted name order. ``meta.json`` carries the format
version, network specs, epoch, seed, config, metrics, optimizer
hyperparameters and the sha256 of ``tensors.bin``.
"""
from __future__ import annotations

import hashlib
import json
import os
import shutil
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

FORMAT_VERSION = 1
MAGIC = b"CAMOTNSR"
META_FILE = "meta.json"
BLOB_FILE = "tensors.bin"


class CheckpointError(RuntimeError):
    pass


def _np_dtype(t: torch.Tensor) -> np.dtype:
    return np.dtype(str(t.numpy().dtype)).newbyteorder("<")


def write_tensors(path, tensors: dict[str, torch.Tensor]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<II", FORMAT_VERSION, len(tensors)))
        for name in sorted(tensors):
            t = tensors[name].detach().cpu().contiguous()
            arr = t.numpy()
            dt = _np_dtype(t)
            raw = arr.astype(dt, copy=False).tobytes(order="C")
            nb, db = name.encode(), dt.str.encode()
            f.write(struct.pack("<H", len(nb)) + nb + struct.pack("<B", len(db)) + db)
            f.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(struct.pack("<Q", len(raw)) + raw)


def read_tensors(path) -> dict[str, torch.Tensor]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    version, count = struct.unpack_from("<II", data, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 16
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, off); off += 2
        name = data[off:off + n].decode(); off += n
        (n,) = struct.unpack_from("<B", data, off); off += 1
        dt = np.dtype(data[off:off + n].decode()); off += n
        (ndim,) = struct.unpack_from("<B", data, off); off += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, off); off += 8 * ndim
        (nbytes,) = struct.unpack_from("<Q", data, off); off += 8
        arr = np.frombuffer(data, dtype=dt, count=nbytes // dt.itemsize, offset=off).reshape(shape)
        off += nbytes
        out[name] = torch.from_numpy(arr.astype(dt.newbyteorder("="), copy=True))
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Checkpoint:
    """Network weights, optimizer state and bookkeeping for one epoch."""

    networks: dict[str, dict[str, torch.Tensor]]
    specs: dict[str, dict]
    epoch: int = 0
    seed: int = 0
    config: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    optimizers: dict[str, dict] = field(default_factory=dict)

    def flat_tensors(self) -> dict[str, torch.Tensor]:
        flat = {f"net/{n}/{k}": v for n, sd in self.networks.items() for k, v in sd.items()}
        for n, osd in self.optimizers.items():
            for idx, st in osd["state"].items():
                for k, v in st.items():
                    flat[f"opt/{n}/{idx}/{k}"] = v if torch.is_tensor(v) else torch.tensor(v)
        return flat

    def meta(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "specs": self.specs,
            "epoch": self.epoch,
            "seed": self.seed,
            "config": self.config,
            "metrics": self.metrics,
            "param_groups": {n: osd["param_groups"] for n, osd in self.optimizers.items()},
        }

    def content_hash(self) -> str:
        with tempfile.TemporaryDirectory() as d:
            write_tensors(Path(d) / BLOB_FILE, self.flat_tensors())
            return sha256_file(Path(d) / BLOB_FILE)

    def save(self, path) -> Path:
        """Write atomically: build in a sibling temp dir, then rename."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
        try:
            write_tensors(tmp / BLOB_FILE, self.flat_tensors())
            meta = {**self.meta(), "content_hash": sha256_file(tmp / BLOB_FILE)}
            (tmp / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
            if path.exists():
                old = path.with_name(f".{path.name}.old")
                shutil.rmtree(old, ignore_errors=True)
                os.replace(path, old)
                os.replace(tmp, path)
                shutil.rmtree(old, ignore_errors=True)
            else:
                os.replace(tmp, path)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        return path

    @classmethod
    def load(cls, path, verify: bool = True) -> "Checkpoint":
        path = Path(path)
        if not (path / META_FILE).is_file() or not (path / BLOB_FILE).is_file():
            raise CheckpointError(f"{path} is not a checkpoint directory")
        meta = json.loads((path / META_FILE).read_text())
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format {meta.get('format_version')}")
        if verify and sha256_file(path / BLOB_FILE) != meta["content_hash"]:
            raise CheckpointError(f"{path}: content hash mismatch")
        networks: dict[str, dict] = {}
        opt_state: dict[str, dict] = {}
        for name, t in read_tensors(path / BLOB_FILE).items():
            kind, owner, rest = name.split("/", 2)
            if kind == "net":
                networks.setdefault(owner, {})[rest] = t
            else:
                idx, key = rest.split("/", 1)
                opt_state.setdefault(owner, {}).setdefault(int(idx), {})[key] = t
        optimizers = {
            n: {"state": opt_state.get(n, {}), "param_groups": groups}
            for n, groups in meta["param_groups"].items()
        }
        # state_dict order follows the original network definitions
        return cls(networks, meta["specs"], meta["epoch"], meta["seed"], meta["config"],
                   meta["metrics"], optimizers)

    def network(self, name: str) -> torch.nn.Module:
        from .netarch import network_from_spec

        net = network_from_spec(self.specs[name])
        net.load_state_dict(self.networks[name])
        return net
