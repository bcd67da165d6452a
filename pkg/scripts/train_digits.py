#!/usr/bin/env python3
"""Train a small binary (or ternary) MLP on the 8x8 sklearn digits and export it.

    python scripts/train_digits.py --out tests/data            # BNN
    python scripts/train_digits.py --out tests/data --ternary  # TNN

Writes ``digits_{bnn,tnn}.json`` + ``.bin`` and ``digits_test.xbt`` (the
held-out split used for accuracy).  Needs torch and scikit-learn; the
simulator itself does not.
"""
import argparse
from pathlib import Path

import numpy as np
import torch
import torch.nn as tnn
from sklearn.datasets import load_digits
from sklearn.model_selection import train_test_split

from xbarsim.nn import Affine, QuantDense, Quantize, QuantizedModel, host_accuracy, save_dataset, save_model

ACT_DELTA = 0.5  # ternary activation threshold after batch norm


class SignSTE(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return torch.where(x >= 0, torch.ones_like(x), -torch.ones_like(x))

    @staticmethod
    def backward(ctx, g):
        (x,) = ctx.saved_tensors
        return g * (x.abs() <= 1).to(g.dtype)


class TernarySTE(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, delta):
        ctx.save_for_backward(x)
        return (x > delta).to(x.dtype) - (x < -delta).to(x.dtype)

    @staticmethod
    def backward(ctx, g):
        (x,) = ctx.saved_tensors
        return g * (x.abs() <= 1).to(g.dtype), None


def weight_threshold(w):
    # ternary weight network rule: 0.7 * mean |w|
    return 0.7 * w.abs().mean()


def quant_w(w, ternary):
    if ternary:
        return TernarySTE.apply(w, weight_threshold(w).detach())
    return SignSTE.apply(w)


def quant_a(x, ternary):
    return TernarySTE.apply(x, ACT_DELTA) if ternary else SignSTE.apply(x)


class QLinear(tnn.Linear):
    def __init__(self, i, o, ternary):
        super().__init__(i, o, bias=False)
        self.ternary = ternary

    def forward(self, x):
        return x @ quant_w(self.weight, self.ternary).t()


class Net(tnn.Module):
    def __init__(self, widths, ternary):
        super().__init__()
        self.ternary = ternary
        self.fcs = tnn.ModuleList(QLinear(a, b, ternary) for a, b in zip(widths[:-1], widths[1:]))
        self.bns = tnn.ModuleList(tnn.BatchNorm1d(b) for b in widths[1:])

    def forward(self, x):
        h = quant_a(x, self.ternary)
        for k, (fc, bn) in enumerate(zip(self.fcs, self.bns)):
            h = bn(fc(h))
            if k < len(self.fcs) - 1:
                h = quant_a(h, self.ternary)
        return h


def export(net: Net, pixel_mean: np.ndarray, ternary: bool) -> QuantizedModel:
    net.eval()
    q = Quantize("ternary", ACT_DELTA) if ternary else Quantize("sign")
    # Input pixels are centred on their training mean, then quantized.
    layers = [Affine(np.ones(64, np.float32), (-pixel_mean).astype(np.float32)), q]
    with torch.no_grad():
        for k, (fc, bn) in enumerate(zip(net.fcs, net.bns)):
            w = quant_w(fc.weight, ternary).numpy().astype(np.int8)
            scale = (bn.weight / torch.sqrt(bn.running_var + bn.eps)).numpy()
            shift = (bn.bias - bn.running_mean * bn.weight / torch.sqrt(bn.running_var + bn.eps)).numpy()
            layers += [QuantDense(w), Affine(scale.astype(np.float32), shift.astype(np.float32))]
            if k < len(net.fcs) - 1:
                layers.append(q)
    return QuantizedModel((64,), layers, "ternary" if ternary else "binary")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("tests/data"))
    ap.add_argument("--ternary", action="store_true")
    ap.add_argument("--hidden", type=int, default=256)
    ap.add_argument("--epochs", type=int, default=150)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    digits = load_digits()
    x_tr, x_te, y_tr, y_te = train_test_split(
        digits.data.astype(np.float32), digits.target, test_size=0.2, random_state=args.seed, stratify=digits.target
    )
    pixel_mean = x_tr.mean(axis=0)
    xt = torch.tensor(x_tr - pixel_mean)
    yt = torch.tensor(y_tr)

    net = Net([64, args.hidden, args.hidden, 10], args.ternary)
    opt = torch.optim.Adam(net.parameters(), lr=5e-3)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, args.epochs)
    for epoch in range(args.epochs):
        net.train()
        perm = torch.randperm(len(xt))
        for s in range(0, len(xt), 64):
            idx = perm[s : s + 64]
            loss = tnn.functional.cross_entropy(net(xt[idx]), yt[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            with torch.no_grad():
                for fc in net.fcs:
                    fc.weight.clamp_(-1, 1)
        sched.step()

    model = export(net, pixel_mean, args.ternary)
    acc = host_accuracy(model, x_te, y_te)
    name = "digits_tnn" if args.ternary else "digits_bnn"
    args.out.mkdir(parents=True, exist_ok=True)
    save_model(model, args.out / f"{name}.json")
    save_dataset(args.out / "digits_test.xbt", x_te.astype(np.float32), y_te)
    print(f"{name}: host test accuracy {acc:.4f} on {len(y_te)} samples -> {args.out}")


if __name__ == "__main__":
    main()
