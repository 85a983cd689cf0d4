"""Train a torch classifier while capturing per-sample training dynamics.

The model only has to return class logits and contain a final linear layer;
a forward hook on that layer captures the penultimate representation. Each
epoch ends with an order-stable eval pass (shuffling disabled) recording
per-sample correctness; at the reference epoch the pass also snapshots
softmax, losses, error vectors (softmax minus one-hot) and penultimate
features, and everything is written as a DCTF artifact directory. The
penultimate representation doubles as the artifact's feature matrix, so
geometric and submodular selection run in the learned embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, Dataset

from .dctf import write_artifact_dir


class ExtractionError(RuntimeError):
    pass


@dataclass
class ExtractConfig:
    epochs: int = 10
    reference_epoch: int = 10
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    layer: str | None = None  # explicit head name for nonstandard models
    device: str = "cpu"
    num_workers: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ExtractionError(f"epochs must be >= 1, got {self.epochs}")
        if not 1 <= self.reference_epoch <= self.epochs:
            raise ExtractionError(
                f"reference_epoch {self.reference_epoch} outside [1, {self.epochs}]"
            )


def find_classifier_head(model: nn.Module, sample: torch.Tensor,
                         layer: str | None = None) -> nn.Linear:
    """Locate the final linear layer (the one producing class logits).

    With ``layer`` given, that named module is used. Otherwise every linear
    module is instrumented for one forward pass and the last one to fire
    wins, which follows execution order rather than declaration order.
    """
    if layer is not None:
        named = dict(model.named_modules())
        if layer not in named:
            raise ExtractionError(f"no module named {layer!r}")
        head = named[layer]
        if not isinstance(head, nn.Linear):
            raise ExtractionError(f"module {layer!r} is not a linear layer")
        return head

    fired: list[nn.Linear] = []
    handles = [
        mod.register_forward_hook(lambda m, i, o: fired.append(m))
        for mod in model.modules() if isinstance(mod, nn.Linear)
    ]
    if not handles:
        raise ExtractionError("model has no linear layer to treat as the classifier head")
    try:
        model.eval()
        with torch.no_grad():
            model(sample)
    finally:
        for handle in handles:
            handle.remove()
    if not fired:
        raise ExtractionError("no linear layer fired during the probe forward pass")
    return fired[-1]


class _HeadInputCapture:
    """Forward pre-hook collecting the classifier head's input batch."""

    def __init__(self, head: nn.Linear):
        self.buffer: list[torch.Tensor] = []
        self.width: int | None = None
        self.handle = head.register_forward_pre_hook(self._grab)

    def _grab(self, module, inputs):
        x = inputs[0].detach()
        if x.dim() != 2:
            x = x.reshape(x.shape[0], -1)
        if self.width is None:
            self.width = x.shape[1]
        elif x.shape[1] != self.width:
            raise ExtractionError(
                f"penultimate width drifted from {self.width} to {x.shape[1]}"
            )
        self.buffer.append(x.cpu())

    def take(self) -> torch.Tensor:
        out = torch.cat(self.buffer, dim=0)
        self.buffer.clear()
        return out

    def close(self):
        self.handle.remove()


def _eval_pass(model, head_capture, loader, device, want_snapshot):
    """Order-stable full pass: correctness row, optionally the full snapshot."""
    model.eval()
    correct, prob_rows, label_rows = [], [], []
    with torch.no_grad():
        for x, y in loader:
            logits = model(x.to(device))
            if logits.dim() != 2:
                raise ExtractionError(f"model output must be (batch, C) logits, got {tuple(logits.shape)}")
            pred = logits.argmax(dim=1).cpu()
            correct.append((pred == y).to(torch.uint8))
            if want_snapshot:
                prob_rows.append(torch.softmax(logits.double(), dim=1).cpu())
                label_rows.append(y)
    row = torch.cat(correct).numpy()
    if not want_snapshot:
        head_capture.buffer.clear()
        return row, None
    probs = torch.cat(prob_rows).numpy()
    labels = torch.cat(label_rows).numpy()
    softmax32 = probs.astype(np.float32)
    onehot = np.eye(probs.shape[1], dtype=np.float32)[labels]
    snapshot = {
        "softmax": softmax32,
        "losses": -np.log(np.maximum(probs[np.arange(len(labels)), labels],
                                     1e-30)).astype(np.float32),
        "error_vectors": softmax32 - onehot,
        "penultimate": head_capture.take().numpy().astype(np.float32),
    }
    return row, snapshot


def extract(model: nn.Module, dataset: Dataset, cfg: ExtractConfig, out_dir):
    """Train ``model`` on ``dataset`` and write the dynamics artifact.

    Returns the artifact directory path. The dataset must be map-style with
    a stable iteration order and yield (input tensor, integer label) pairs.
    """
    cfg.validate()
    torch.manual_seed(cfg.seed)
    device = torch.device(cfg.device)
    model = model.to(device)

    probe_x, _ = dataset[0]
    head = find_classifier_head(model, probe_x.unsqueeze(0).to(device), cfg.layer)

    gen = torch.Generator().manual_seed(cfg.seed)
    train_loader = DataLoader(dataset, batch_size=cfg.batch_size, shuffle=True,
                              generator=gen, num_workers=cfg.num_workers)
    # capture passes must see samples in dataset order
    capture_loader = DataLoader(dataset, batch_size=cfg.batch_size, shuffle=False,
                                num_workers=cfg.num_workers)

    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.lr,
                                momentum=cfg.momentum,
                                weight_decay=cfg.weight_decay)
    criterion = nn.CrossEntropyLoss()
    capture = _HeadInputCapture(head)

    labels_all = torch.as_tensor([int(dataset[i][1]) for i in range(len(dataset))])
    rows = []
    snapshot = None
    try:
        for epoch in range(1, cfg.epochs + 1):
            model.train()
            for x, y in train_loader:
                capture.buffer.clear()  # training batches are not captured
                optimizer.zero_grad()
                loss = criterion(model(x.to(device)), y.to(device))
                loss.backward()
                optimizer.step()
            capture.buffer.clear()
            row, snap = _eval_pass(model, capture, capture_loader, device,
                                   want_snapshot=epoch == cfg.reference_epoch)
            rows.append(row)
            if snap is not None:
                snapshot = snap
    finally:
        capture.close()

    n = len(dataset)
    num_classes = snapshot["softmax"].shape[1]
    if int(labels_all.max()) >= num_classes:
        raise ExtractionError(
            f"label {int(labels_all.max())} outside the model's {num_classes} classes"
        )
    penultimate = snapshot["penultimate"]
    tensors = {
        "features.dctf": penultimate,  # learned embedding doubles as features
        "labels.dctf": labels_all.numpy().astype(np.int32),
        "correctness.dctf": np.stack(rows, axis=0),
        "softmax.dctf": snapshot["softmax"],
        "losses.dctf": snapshot["losses"],
        "error_vectors.dctf": snapshot["error_vectors"],
        "penultimate.dctf": penultimate,
    }
    return write_artifact_dir(out_dir, tensors, n=n, d=penultimate.shape[1],
                              c=num_classes, h=penultimate.shape[1],
                              e=cfg.epochs, reference_epoch=cfg.reference_epoch)
