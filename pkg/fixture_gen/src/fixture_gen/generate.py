"""Train the tiny fixture classifier and export it as ONNX + manifest.

The dataset is synthetic: oriented sinusoidal gratings with class-specific
orientation and color tint, plus noise. A two-conv CNN separates the ten
classes to well above the 0.80 holdout target within a few seeded epochs,
keeping the whole run to seconds on CPU.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from . import onnx_writer as ow

MEAN = 0.5
STD = 0.25


@dataclass(frozen=True)
class FixtureSpec:
    input_size: int = 32
    class_count: int = 10
    max_model_bytes: int = 5 * 1024 * 1024
    target_accuracy: float = 0.80
    seed: int = 0
    n_train: int = 2400
    n_holdout: int = 600
    epochs: int = 12


def class_labels(spec: FixtureSpec) -> list[str]:
    return [f"class{i:02d}" for i in range(spec.class_count)]


def make_dataset(spec: FixtureSpec, n: int, rng: np.random.Generator):
    """Class-k images: gratings at angle k*pi/K with a class tint, noised."""
    size = spec.input_size
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) / size
    images = np.empty((n, size, size, 3), dtype=np.float32)
    labels = rng.integers(0, spec.class_count, size=n)
    tint_rng = np.random.default_rng(spec.seed + 7)
    tints = 0.4 + 0.6 * tint_rng.random((spec.class_count, 3))
    for i in range(n):
        k = int(labels[i])
        theta = math.pi * k / spec.class_count
        freq = 3.0 + (k % 3)
        phase = rng.uniform(0, 2 * math.pi)
        wave = np.sin(2 * math.pi * freq * (xs * math.cos(theta) + ys * math.sin(theta))
                      + phase)
        base = 0.5 + 0.35 * wave[:, :, None] * tints[k][None, None, :]
        noisy = base + rng.normal(0, 0.08, size=(size, size, 3))
        images[i] = np.clip(noisy, 0.0, 1.0)
    return images, labels.astype(np.int64)


class TinyCnn(nn.Module):
    def __init__(self, classes: int):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 8, 3, padding=1)
        self.conv2 = nn.Conv2d(8, 16, 3, padding=1)
        self.pool = nn.MaxPool2d(2, 2)
        self.relu = nn.ReLU()
        self.fc1 = nn.Linear(16 * 8 * 8, 32)
        self.fc2 = nn.Linear(32, classes)

    def forward(self, x):
        x = self.pool(self.relu(self.conv1(x)))
        x = self.pool(self.relu(self.conv2(x)))
        x = torch.flatten(x, 1)
        x = self.relu(self.fc1(x))
        return torch.softmax(self.fc2(x), dim=1)


def _to_batch(images: np.ndarray) -> torch.Tensor:
    x = (images - MEAN) / STD
    return torch.from_numpy(x.transpose(0, 3, 1, 2).astype(np.float32))


def train_model(spec: FixtureSpec):
    torch.manual_seed(spec.seed)
    rng = np.random.default_rng(spec.seed)
    train_x, train_y = make_dataset(spec, spec.n_train, rng)
    hold_x, hold_y = make_dataset(spec, spec.n_holdout, rng)

    model = TinyCnn(spec.class_count)
    optimizer = torch.optim.Adam(model.parameters(), lr=3e-3)
    loss_fn = nn.NLLLoss()
    xb_all = _to_batch(train_x)
    yb_all = torch.from_numpy(train_y)
    batch = 128
    order_rng = np.random.default_rng(spec.seed + 1)
    model.train()
    for _ in range(spec.epochs):
        order = order_rng.permutation(spec.n_train)
        for start in range(0, spec.n_train, batch):
            idx = order[start : start + batch]
            optimizer.zero_grad()
            probs = model(xb_all[idx])
            loss = loss_fn(torch.log(probs + 1e-9), yb_all[idx])
            loss.backward()
            optimizer.step()

    model.eval()
    with torch.no_grad():
        def accuracy(x, y):
            pred = model(_to_batch(x)).argmax(dim=1).numpy()
            return float((pred == y).mean())

        train_acc = accuracy(train_x, train_y)
        hold_acc = accuracy(hold_x, hold_y)
    return model, train_acc, hold_acc, (hold_x, hold_y)


def export_onnx(model: TinyCnn, spec: FixtureSpec, path: Path) -> None:
    def w(t: torch.Tensor) -> np.ndarray:
        return t.detach().numpy()

    size = spec.input_size
    conv_attrs = [ow.attr_ints("kernel_shape", [3, 3]),
                  ow.attr_ints("strides", [1, 1]),
                  ow.attr_ints("pads", [1, 1, 1, 1])]
    pool_attrs = [ow.attr_ints("kernel_shape", [2, 2]),
                  ow.attr_ints("strides", [2, 2])]
    nodes = [
        ow.node("Conv", ["input", "c1w", "c1b"], ["c1"], attrs=conv_attrs),
        ow.node("Relu", ["c1"], ["r1"]),
        ow.node("MaxPool", ["r1"], ["p1"], attrs=pool_attrs),
        ow.node("Conv", ["p1", "c2w", "c2b"], ["c2"], attrs=conv_attrs),
        ow.node("Relu", ["c2"], ["r2"]),
        ow.node("MaxPool", ["r2"], ["p2"], attrs=pool_attrs),
        ow.node("Flatten", ["p2"], ["flat"], attrs=[ow.attr_int("axis", 1)]),
        ow.node("Gemm", ["flat", "f1w", "f1b"], ["h1"]),
        ow.node("Relu", ["h1"], ["h1r"]),
        ow.node("Gemm", ["h1r", "f2w", "f2b"], ["logits"]),
        ow.node("Softmax", ["logits"], ["prob"], attrs=[ow.attr_int("axis", 1)]),
    ]
    initializers = [
        ow.tensor_f32("c1w", w(model.conv1.weight)),
        ow.tensor_f32("c1b", w(model.conv1.bias)),
        ow.tensor_f32("c2w", w(model.conv2.weight)),
        ow.tensor_f32("c2b", w(model.conv2.bias)),
        # Gemm computes A @ B + C with A (batch, in): store B as (in, out)
        ow.tensor_f32("f1w", w(model.fc1.weight).T),
        ow.tensor_f32("f1b", w(model.fc1.bias)),
        ow.tensor_f32("f2w", w(model.fc2.weight).T),
        ow.tensor_f32("f2b", w(model.fc2.bias)),
    ]
    blob = ow.model(
        "fixture_cnn",
        nodes,
        initializers,
        [ow.value_info("input", (1, 3, size, size))],
        [ow.value_info("prob", (1, spec.class_count))],
    )
    path.write_bytes(blob)


def verify_export(model: TinyCnn, spec: FixtureSpec, model_path: Path,
                  holdout) -> float | None:
    """Max |cv2 - torch| probability gap on holdout samples; None if cv2 absent."""
    try:
        import cv2
    except ImportError:
        return None
    net = cv2.dnn.readNetFromONNX(str(model_path))
    hold_x, _ = holdout
    worst = 0.0
    with torch.no_grad():
        for i in range(0, min(32, len(hold_x))):
            xb = _to_batch(hold_x[i : i + 1])
            ref = model(xb).numpy().ravel()
            net.setInput(xb.numpy())
            got = np.asarray(net.forward()).ravel()
            worst = max(worst, float(np.abs(got - ref).max()))
    return worst


def generate_fixture(spec: FixtureSpec, out_dir) -> dict:
    """Train, export and verify; returns the accuracy report payload."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, train_acc, hold_acc, holdout = train_model(spec)

    model_path = out_dir / "model.onnx"
    export_onnx(model, spec, model_path)
    manifest = {
        "input_w": spec.input_size,
        "input_h": spec.input_size,
        "mean": [MEAN, MEAN, MEAN],
        "std": [STD, STD, STD],
        "labels": class_labels(spec),
        "model_id": f"fixture-cnn-v1-seed{spec.seed}",
    }
    with (out_dir / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    export_gap = verify_export(model, spec, model_path, holdout)
    report = {
        "seed": spec.seed,
        "train_accuracy": train_acc,
        "holdout_accuracy": hold_acc,
        "target_accuracy": spec.target_accuracy,
        "model_bytes": model_path.stat().st_size,
        "max_model_bytes": spec.max_model_bytes,
        "export_max_probability_gap": export_gap,
        "n_train": spec.n_train,
        "n_holdout": spec.n_holdout,
    }
    with (out_dir / "accuracy.json").open("w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Train and export the tiny ONNX classifier fixture.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="fixtures", help="output directory")
    parser.add_argument("--epochs", type=int, default=12)
    args = parser.parse_args(argv)
    spec = FixtureSpec(seed=args.seed, epochs=args.epochs)
    report = generate_fixture(spec, args.out)
    print(json.dumps(report, indent=2, sort_keys=True))
    ok = (report["holdout_accuracy"] >= spec.target_accuracy
          and report["model_bytes"] <= spec.max_model_bytes)
    if not ok:
        print("fixture failed its targets; artifacts kept for inspection",
              file=sys.stderr)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
