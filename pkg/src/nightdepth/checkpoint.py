"""Versioned single-file checkpoints for the depth, pose and discriminator networks.

An archive holds a format tag, a JSON-compatible manifest (network configs,
ablation toggles, frozen flags) and one flat tensor mapping keyed by module
path, e.g. ``depth_net.encoder.0.0.conv.weight``.
"""

import json
from collections.abc import Mapping
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import torch
from torch import nn

from .networks import (
    DepthNet,
    DepthNetConfig,
    PoseNet,
    PoseNetConfig,
    freeze,
    is_frozen,
)
from .splb import SequenceDiscriminator, SPLBConfig

CHECKPOINT_FORMAT = "nightdepth-checkpoint/1"
FORMAT_PREFIX = "nightdepth-checkpoint/"


class CheckpointError(RuntimeError):
    """Raised for archives with a foreign or unsupported format tag."""


def config_dict(config: Any) -> dict[str, Any]:
    """Dataclass config as a JSON-compatible mapping (tuples become lists)."""
    return json.loads(json.dumps(asdict(config)))


def _config_from_dict(config_type: type, payload: Mapping[str, Any]) -> Any:
    values = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in payload.items()
    }
    return config_type(**values)


def save_checkpoint(
    path: Path, modules: Mapping[str, nn.Module], manifest: Mapping[str, Any]
) -> Path:
    """Write ``modules`` and ``manifest`` to one archive.

    Args:
        path: Target file; parent directories are created.
        modules: Networks keyed by the name used as tensor-key prefix.
        manifest: JSON-compatible metadata (configs, toggles, run info).

    Returns:
        The written path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors: dict[str, torch.Tensor] = {}
    for name, module in modules.items():
        for key, tensor in module.state_dict().items():
            tensors[f"{name}.{key}"] = tensor.detach().cpu().clone()
    full_manifest = json.loads(json.dumps(dict(manifest)))
    full_manifest["modules"] = list(modules)
    full_manifest["frozen"] = {
        name: is_frozen(module) for name, module in modules.items()
    }
    payload = {
        "format": CHECKPOINT_FORMAT,
        "manifest": full_manifest,
        "tensors": tensors,
    }
    torch.save(payload, path)
    return path


StateDicts = dict[str, dict[str, torch.Tensor]]


def load_checkpoint(path: Path) -> tuple[dict[str, Any], StateDicts]:
    """Read an archive written by :func:`save_checkpoint`.

    Returns:
        ``(manifest, state_dicts)`` with one state dict per stored module.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        CheckpointError: If the format tag is missing, foreign or newer.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint '{path}' does not exist")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises several unpickling error types
        raise CheckpointError(
            f"'{path}' is not a nightdepth checkpoint: {exc}"
        ) from exc
    tag = payload.get("format") if isinstance(payload, dict) else None
    if not isinstance(tag, str) or not tag.startswith(FORMAT_PREFIX):
        raise CheckpointError(
            f"'{path}' is not a nightdepth checkpoint (format {tag!r})"
        )
    if tag != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"'{path}' uses format {tag!r}; this version reads {CHECKPOINT_FORMAT!r}"
        )

    manifest = payload["manifest"]
    states: StateDicts = {name: {} for name in manifest["modules"]}
    for key, tensor in payload["tensors"].items():
        name, _, rest = key.partition(".")
        if name not in states:
            raise CheckpointError(
                f"'{path}' holds tensor '{key}' for an unknown module"
            )
        states[name][rest] = tensor
    return manifest, states


@dataclass
class RestoredModels:
    """Networks rebuilt from an archive; absent modules are ``None``."""

    manifest: dict[str, Any]
    depth_net: DepthNet | None = None
    pose_net: PoseNet | None = None
    discriminator: SequenceDiscriminator | None = None


def restore_models(path: Path) -> RestoredModels:
    """Rebuild every stored network with its config and frozen flag.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        CheckpointError: On format problems or a manifest without the config of
            a stored module.
    """
    manifest, states = load_checkpoint(path)
    restored = RestoredModels(manifest=manifest)
    frozen = manifest.get("frozen", {})
    try:
        for name, state in states.items():
            module: nn.Module
            if name == "depth_net":
                depth_config = _config_from_dict(DepthNetConfig, manifest["depth_net"])
                module = DepthNet(depth_config)
            elif name == "pose_net":
                pose_config = _config_from_dict(PoseNetConfig, manifest["pose_net"])
                module = PoseNet(pose_config)
            elif name == "discriminator":
                toggles = manifest.get("toggles", {})
                module = SequenceDiscriminator(
                    _config_from_dict(SPLBConfig, manifest["splb"]),
                    use_stlm=bool(toggles.get("use_stlm", True)),
                    use_aslm=bool(toggles.get("use_aslm", True)),
                )
            else:
                raise CheckpointError(f"'{path}' stores unknown module '{name}'")
            module.load_state_dict(state)
            if frozen.get(name, False):
                freeze(module)
            else:
                module.eval()
            setattr(restored, name, module)
    except KeyError as exc:
        raise CheckpointError(f"'{path}' manifest lacks the config {exc}") from exc
    return restored
