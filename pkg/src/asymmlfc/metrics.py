"""Precision / recall / F1 at a 0.5 threshold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def compute_metrics(predictions, labels, threshold: float = 0.5) -> Scores:
    """Binary scores; precision is 0 when nothing is predicted positive and
    F1 is 0 whenever ``P + R = 0``."""
    p = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if p.size == 0:
        raise EmptyInput("no predictions")
    if p.shape != y.shape:
        raise ValueError(f"{p.size} predictions vs {y.size} labels")
    pred = p >= threshold
    pos = y >= 0.5
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return Scores(prec, rec, f1, tp, fp, fn)


def summarize(runs) -> dict:
    """Aggregate ``[{name: Scores}, ...]`` over repeats into mean/std of F1."""
    names = sorted(set().union(*(r.keys() for r in runs))) if runs else []
    out = {}
    for name in names:
        s = [r[name] for r in runs if name in r]
        f1 = np.array([x.f1 for x in s])
        out[name] = {
            "precision": float(np.mean([x.precision for x in s])),
            "recall": float(np.mean([x.recall for x in s])),
            "f1": float(f1.mean()),
            "mean": float(f1.mean()),
            "std": float(f1.std()),
        }
    return out
