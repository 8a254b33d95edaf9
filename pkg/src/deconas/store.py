"""Named parameter storage, Adam updates and checkpoint files."""

from __future__ import annotations

import json
import struct
import time

import numpy as np

from .autograd import Tensor
from .errors import FormatError, GradientError, ValidationError

CHECKPOINT_MAGIC = b"DCNSCKPT"
CHECKPOINT_VERSION = 1


def variance_scaled(rng: np.random.Generator, shape, fan_in: int,
                    scale: float = 0.02, dtype=np.float32) -> np.ndarray:
    """Fan-in variance scaling: normal with variance scale/fan_in."""
    std = np.sqrt(scale / max(1, fan_in))
    return rng.normal(0.0, std, size=shape).astype(dtype)


class ParamStore:
    """Uniquely named trainable tensors plus per-parameter Adam state."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.adam_t: dict[str, int] = {}

    def create(self, name: str, values: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValidationError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(values, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        self.adam_m[name] = np.zeros(t.data.shape, dtype=self.dtype)
        self.adam_v[name] = np.zeros(t.data.shape, dtype=self.dtype)
        self.adam_t[name] = 0
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def value_count(self, names=None) -> int:
        names = self.params if names is None else names
        return sum(self.params[n].data.size for n in names)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def adam_step(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8, names=None):
        """One bias-corrected Adam update.

        By default only parameters that received a gradient are touched (keys
        inactive in the sampled architecture keep their state).  Passing
        ``names`` makes a missing gradient an error.
        """
        if names is None:
            todo = [n for n, t in self.params.items() if t.grad is not None]
        else:
            todo = list(names)
            for n in todo:
                if self.params[n].grad is None:
                    raise GradientError(f"parameter {n!r} has no gradient")
        for n in todo:
            p = self.params[n]
            g = np.asarray(p.grad, dtype=self.dtype)
            self.adam_t[n] += 1
            t = self.adam_t[n]
            m = self.adam_m[n]
            v = self.adam_v[n]
            m += (1 - beta1) * (g - m)
            v += (1 - beta2) * (g * g - v)
            m_hat = m / (1 - beta1 ** t)
            v_hat = v / (1 - beta2 ** t)
            p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(self.dtype)

    # -- persistence --------------------------------------------------------

    def save(self, path, deterministic: bool = False):
        """Write a versioned binary container with a JSON manifest.

        Layout: magic, u32 version, u64 manifest length, manifest JSON,
        then raw little-endian tensor bytes at the manifest's offsets.
        """
        entries = []
        blobs = []
        offset = 0
        for kind, table in (("param", {n: t.data for n, t in self.params.items()}),
                            ("adam_m", self.adam_m), ("adam_v", self.adam_v)):
            for name in sorted(table):
                arr = np.ascontiguousarray(table[name], dtype=table[name].dtype.newbyteorder("<"))
                raw = arr.tobytes()
                entries.append({
                    "name": name,
                    "kind": kind,
                    "shape": list(arr.shape),
                    "dtype": arr.dtype.str,
                    "offset": offset,
                    "nbytes": len(raw),
                })
                blobs.append(raw)
                offset += len(raw)
        manifest = {
            "version": CHECKPOINT_VERSION,
            "created": None if deterministic else time.strftime("%Y-%m-%dT%H:%M:%S"),
            "dtype": self.dtype.str,
            "adam_t": {n: self.adam_t[n] for n in sorted(self.adam_t)},
            "entries": entries,
        }
        mbytes = json.dumps(manifest, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(mbytes)))
            fh.write(mbytes)
            for raw in blobs:
                fh.write(raw)

    @classmethod
    def load(cls, path) -> "ParamStore":
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise FormatError(f"{path}: not a checkpoint file")
            version, mlen = struct.unpack("<IQ", fh.read(12))
            if version != CHECKPOINT_VERSION:
                raise FormatError(f"{path}: unsupported checkpoint version {version}")
            manifest = json.loads(fh.read(mlen).decode())
            body = fh.read()
        store = cls(dtype=np.dtype(manifest["dtype"]))
        arrays: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}}
        for e in manifest["entries"]:
            raw = body[e["offset"]:e["offset"] + e["nbytes"]]
            arr = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
            arrays[e["kind"]][e["name"]] = arr
        for name, data in arrays["param"].items():
            store.create(name, data)
            store.adam_m[name] = arrays["adam_m"][name]
            store.adam_v[name] = arrays["adam_v"][name]
            store.adam_t[name] = manifest["adam_t"][name]
        return store

    def load_values_from(self, other: "ParamStore"):
        """Copy values and Adam state for identically named parameters."""
        for name, t in self.params.items():
            if name in other.params:
                t.data = other.params[name].data.astype(self.dtype).reshape(t.data.shape)
                self.adam_m[name] = other.adam_m[name].astype(self.dtype).reshape(t.data.shape)
                self.adam_v[name] = other.adam_v[name].astype(self.dtype).reshape(t.data.shape)
                self.adam_t[name] = other.adam_t[name]
