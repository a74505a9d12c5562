"""Binary checkpoint format: magic "IATT", versioned JSON header, raw
little-endian float64 payloads, and a trailing SHA-256 over everything.

Round-trips are bit-exact; loads validate magic, version, checksum, and
variant tag and fail naming the offending field.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict

import numpy as np

from ..agents import BundleMeta, IWNet, PolicyBundle
from ..errors import CheckpointError
from ..gradfield import NoiseSchedule, ScoreNet

MAGIC = b"IATT"
VERSION = 1

BUNDLE_VARIANTS = ("mlp_baseline", "self_att", "inverse_att")


def _arrays_of(obj) -> tuple[str, dict, dict[str, np.ndarray]]:
    if isinstance(obj, PolicyBundle):
        meta = asdict(obj.meta)
        arrays = {}
        for name, t in obj.store.params.items():
            arrays[name] = t.data
        gf_meta = {}
        for key, net in obj.nets.items():
            gf_meta[key] = _score_net_meta(net)
            for name, t in net.store.params.items():
                arrays[f"gf_{key}.{name}"] = t.data
        meta["gf"] = gf_meta
        if obj.iw is not None:
            meta["iw"] = obj.iw.meta()
            for name, t in obj.iw.store.params.items():
                arrays[f"iw.{name}"] = t.data
        return obj.variant, meta, arrays
    if isinstance(obj, ScoreNet):
        return "score_net", _score_net_meta(obj), {
            n: t.data for n, t in obj.store.params.items()
        }
    if isinstance(obj, IWNet):
        return "iw", obj.meta(), {n: t.data for n, t in obj.store.params.items()}
    raise CheckpointError(f"cannot checkpoint object of type {type(obj).__name__}")


def save_checkpoint(obj, path) -> None:
    variant, meta, arrays = _arrays_of(obj)
    names = sorted(arrays)
    header = {
        "variant": variant,
        "meta": meta,
        "arrays": [
            {"name": n, "shape": list(arrays[n].shape), "dtype": "<f8"} for n in names
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    blob += struct.pack("<Q", len(header_bytes))
    blob += header_bytes
    for n in names:
        blob += np.ascontiguousarray(arrays[n], dtype="<f8").tobytes()
    blob += hashlib.sha256(bytes(blob)).digest()
    with open(path, "wb") as f:
        f.write(bytes(blob))


def _read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4 + 4 + 8 + 32 or blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic in {path}: not an IATT checkpoint")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"checksum mismatch in {path}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} in {path}")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    arrays = {}
    offset = 16 + header_len
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * 8
        arr = np.frombuffer(body[offset : offset + nbytes], dtype="<f8")
        if arr.size != count:
            raise CheckpointError(
                f"truncated payload for array {spec['name']!r} in {path}"
            )
        arrays[spec["name"]] = arr.reshape(spec["shape"]).astype(np.float64)
        offset += nbytes
    return header, arrays


def _score_net_meta(net: ScoreNet) -> dict:
    return {
        "dim": net.dim,
        "kind": net.kind,
        "hidden": net.hidden,
        "sigma0": net.schedule.sigma0,
        "t_max": net.schedule.t_max,
        "epsilon": net.schedule.epsilon,
    }


def _build_score_net(meta: dict, arrays: dict[str, np.ndarray]) -> ScoreNet:
    schedule = NoiseSchedule(
        sigma0=meta["sigma0"], t_max=meta["t_max"], epsilon=meta["epsilon"]
    )
    net = ScoreNet(
        dim=meta["dim"], kind=meta["kind"], hidden=meta["hidden"], schedule=schedule
    )
    net.store.load_state(arrays)
    return net


def _build_iw(meta: dict, arrays: dict[str, np.ndarray]) -> IWNet:
    iw = IWNet(hidden=meta["hidden"])
    iw.store.load_state(arrays)
    return iw


def _split_prefix(arrays: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {n[len(prefix) :]: a for n, a in arrays.items() if n.startswith(prefix)}


def load_checkpoint(path):
    """Load any checkpoint; returns a PolicyBundle, ScoreNet, or IWNet."""
    header, arrays = _read_checkpoint(path)
    variant = header["variant"]
    meta = header["meta"]
    if variant == "score_net":
        return _build_score_net(meta, arrays)
    if variant == "iw":
        return _build_iw(meta, arrays)
    if variant not in BUNDLE_VARIANTS:
        raise CheckpointError(f"unknown variant tag {variant!r} in {path}")
    gf_meta = meta.pop("gf")
    iw_meta = meta.pop("iw", None)
    nets = {
        key: _build_score_net(m, _split_prefix(arrays, f"gf_{key}."))
        for key, m in gf_meta.items()
    }
    iw = _build_iw(iw_meta, _split_prefix(arrays, "iw.")) if iw_meta else None
    bmeta = BundleMeta(**meta)
    bundle = PolicyBundle(bmeta, nets, iw=iw)
    own = {
        n: a
        for n, a in arrays.items()
        if not n.startswith(("gf_", "iw."))
    }
    bundle.store.load_state(own)
    return bundle


def load_policy_bundle(path) -> PolicyBundle:
    obj = load_checkpoint(path)
    if not isinstance(obj, PolicyBundle):
        raise CheckpointError(
            f"variant tag mismatch: {path} holds a "
            f"{getattr(obj, 'VARIANT', type(obj).__name__)} checkpoint, not a policy bundle"
        )
    return obj


def load_score_net(path) -> ScoreNet:
    obj = load_checkpoint(path)
    if not isinstance(obj, ScoreNet):
        raise CheckpointError(f"variant tag mismatch: {path} is not a score net")
    return obj


def load_iw(path) -> IWNet:
    obj = load_checkpoint(path)
    if not isinstance(obj, IWNet):
        raise CheckpointError(f"variant tag mismatch: {path} is not an inverse network")
    return obj
