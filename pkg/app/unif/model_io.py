"""
Model files
"UNIF-1" container: magic line, one JSON header line, then the float64
little-endian parameter blob. Writing the same model twice gives identical
bytes.
"""
import json
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Tuple

import numpy as np
import torch

from app.core.config import TrainConfig
from app.core.exceptions import MalformedFileError
from app.unif.deform import DTYPE
from app.unif.neural_sdf import UnifModel
from app.unif.skeleton import Pose, Skeleton

if TYPE_CHECKING:
    from app.unif.trainer import AdamState

MAGIC = b"UNIF-1\n"


def _write(path: Path, header: Dict[str, Any], tensors: List[Tuple[str, torch.Tensor]]) -> None:
    entries, blobs, offset = [], [], 0
    for name, tensor in tensors:
        data = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype="<f8")
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        blobs.append(data.tobytes())
        offset += data.nbytes
    header = {**header, "format": MAGIC.decode().strip(), "tensors": entries, "blob_bytes": offset}
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n")
        for blob in blobs:
            f.write(blob)
    tmp.replace(path)


def _read(path: Path) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    if not path.exists():
        raise MalformedFileError(path, "file not found")
    raw = path.read_bytes()
    if not raw.startswith(MAGIC):
        raise MalformedFileError(path, "missing UNIF-1 magic", "offset 0")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise MalformedFileError(path, "header line not terminated", f"offset {len(MAGIC)}")
    try:
        header = json.loads(raw[len(MAGIC):end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedFileError(path, f"bad header: {e}", "line 2") from e

    blob = raw[end + 1:]
    if len(blob) != header.get("blob_bytes"):
        raise MalformedFileError(
            path, f"parameter blob has {len(blob)} bytes, header declares {header.get('blob_bytes')}",
            f"offset {end + 1}",
        )
    arrays = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays[entry["name"]] = np.frombuffer(blob, dtype="<f8", count=count,
                                              offset=entry["offset"]).reshape(entry["shape"]).copy()
    return header, arrays


def _model_header(model: UnifModel, kind: str) -> Dict[str, Any]:
    return {
        "kind": kind,
        "skeleton": model.skeleton.to_dict(),
        "rest_pose": model.rest_pose.to_dict(),
        "config": model.config.model_dump(mode="json"),
        "part_shapes": [
            {name: list(p.shape) for name, p in part.named_parameters()} for part in model.parts
        ],
    }


def _model_from(path: Path, header: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> UnifModel:
    try:
        skeleton = Skeleton.from_dict(header["skeleton"])
        rest_pose = Pose.from_dict(header["rest_pose"])
        config = TrainConfig(**header["config"])
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedFileError(path, f"invalid model header: {e}", "line 2") from e
    model = UnifModel(skeleton, rest_pose, config, init=False)
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name not in arrays:
                raise MalformedFileError(path, f"missing tensor '{name}'")
            if tuple(arrays[name].shape) != tuple(param.shape):
                raise MalformedFileError(path, f"tensor '{name}' has shape {arrays[name].shape}, expected {tuple(param.shape)}")
            param.copy_(torch.as_tensor(arrays[name], dtype=DTYPE))
    return model


def save_model(path: str | Path, model: UnifModel) -> None:
    """Write network parameters, rigidness matrices, skeleton, rest pose and config"""
    _write(Path(path), _model_header(model, "model"), list(model.named_parameters()))


def load_model(path: str | Path) -> UnifModel:
    path = Path(path)
    header, arrays = _read(path)
    return _model_from(path, header, arrays)


def save_checkpoint(path: str | Path, model: UnifModel, adam_state: "AdamState", epoch: int) -> None:
    """Model file plus Adam moments/step and the last finished epoch"""
    header = _model_header(model, "checkpoint")
    header["epoch"] = int(epoch)
    header["adam"] = {"step": adam_state.step, "beta1": adam_state.beta1, "beta2": adam_state.beta2,
                      "eps": adam_state.eps}
    tensors = list(model.named_parameters()) + [("adam.m", adam_state.m), ("adam.v", adam_state.v)]
    _write(Path(path), header, tensors)


def load_checkpoint(path: str | Path) -> Tuple[UnifModel, "AdamState", int]:
    """
    Read a checkpoint

    Returns:
        (model, adam_state, epoch)
    """
    from app.unif.trainer import AdamState

    path = Path(path)
    header, arrays = _read(path)
    if header.get("kind") != "checkpoint":
        raise MalformedFileError(path, f"expected a checkpoint, found kind '{header.get('kind')}'")
    model = _model_from(path, header, arrays)
    adam = header["adam"]
    state = AdamState(
        m=torch.as_tensor(arrays["adam.m"], dtype=DTYPE),
        v=torch.as_tensor(arrays["adam.v"], dtype=DTYPE),
        step=int(adam["step"]),
        beta1=float(adam["beta1"]),
        beta2=float(adam["beta2"]),
        eps=float(adam["eps"]),
    )
    return model, state, int(header["epoch"])
