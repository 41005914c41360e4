"""Reduced ResNet-18 feature extractor.

The slimmed variant common in online continual learning codebases: a
3x3 stem with no max-pool, four stages of two basic blocks each, and
channel widths cut to nf/2nf/4nf/8nf with nf=20. Features are the
global average pool of the last block's output, which sits after a
rectified activation, so every coordinate is >= 0. No classifier head
is attached; head weights found in a checkpoint are ignored.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

ARCH_ID = "reduced-resnet18-nf20"

# classifier parameters some training recipes leave in the state dict
_HEAD_PREFIXES = ("linear.", "fc.", "head.", "classifier.")


class CheckpointMismatchError(RuntimeError):
    """Checkpoint tensors do not fit the backbone architecture."""


def _conv3x3(in_planes: int, planes: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_planes, planes, kernel_size=3, stride=stride,
                     padding=1, bias=False)


class BasicBlock(nn.Module):
    def __init__(self, in_planes: int, planes: int, stride: int = 1):
        super().__init__()
        self.conv1 = _conv3x3(in_planes, planes, stride)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = _conv3x3(planes, planes)
        self.bn2 = nn.BatchNorm2d(planes)
        self.shortcut = nn.Sequential()
        if stride != 1 or in_planes != planes:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_planes, planes, kernel_size=1, stride=stride,
                          bias=False),
                nn.BatchNorm2d(planes),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        out = out + self.shortcut(x)
        return F.relu(out)


class ReducedResNet18(nn.Module):
    """Backbone only; `forward` returns pooled features of size 8*nf."""

    def __init__(self, nf: int = 20):
        super().__init__()
        self.nf = nf
        self.conv1 = _conv3x3(3, nf)
        self.bn1 = nn.BatchNorm2d(nf)
        self.layer1 = self._stage(nf, nf, stride=1)
        self.layer2 = self._stage(nf, 2 * nf, stride=2)
        self.layer3 = self._stage(2 * nf, 4 * nf, stride=2)
        self.layer4 = self._stage(4 * nf, 8 * nf, stride=2)
        self.feature_dim = 8 * nf

    @staticmethod
    def _stage(in_planes: int, planes: int, stride: int) -> nn.Sequential:
        return nn.Sequential(BasicBlock(in_planes, planes, stride),
                             BasicBlock(planes, planes, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.layer1(out)
        out = self.layer2(out)
        out = self.layer3(out)
        out = self.layer4(out)
        # global average pool of post-relu maps keeps coordinates >= 0
        out = F.adaptive_avg_pool2d(out, 1)
        return out.flatten(1)


def load_backbone(ckpt_path: str | None, device: str = "cpu",
                  seed: int = 0) -> tuple[ReducedResNet18, str]:
    """Build the backbone and return it with its architecture id.

    With no checkpoint the weights are randomly initialized from `seed`
    (permitted for plumbing; the arch id is suffixed accordingly).
    Checkpoints may be a bare state dict or a dict with "state_dict"
    and an optional "arch" string, which is echoed into the sidecar.
    """
    torch.manual_seed(seed)
    model = ReducedResNet18()
    arch = ARCH_ID
    if ckpt_path is None:
        arch = ARCH_ID + "/random-init"
    else:
        try:
            payload = torch.load(ckpt_path, map_location="cpu",
                                 weights_only=True)
        except OSError:
            raise
        except Exception as exc:
            raise CheckpointMismatchError(
                f"cannot load checkpoint {ckpt_path}: {exc}") from exc
        state = payload
        if isinstance(payload, dict) and "state_dict" in payload:
            state = payload["state_dict"]
            if isinstance(payload.get("arch"), str):
                arch = payload["arch"]
        if not isinstance(state, dict):
            raise CheckpointMismatchError("checkpoint is not a state dict")
        state = {k: v for k, v in state.items()
                 if not k.startswith(_HEAD_PREFIXES)}
        try:
            model.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise CheckpointMismatchError(
                f"checkpoint does not match {ARCH_ID}: {exc}") from exc
    model.to(device)
    model.eval()
    return model, arch
