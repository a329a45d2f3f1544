"""Independent reference implementations used as test oracles."""

import numpy as np
import pytest


def naive_dft(x, n):
    """O(n^2) DFT of x zero-padded to n points, bins 0..n/2."""
    x = np.concatenate([np.asarray(x, dtype=np.float64), np.zeros(n - len(x))])
    t = np.arange(n)
    out = np.zeros(n // 2 + 1, dtype=complex)
    for k in range(n // 2 + 1):
        # reduce k*t mod n first so the phase stays exact
        phase = 2 * np.pi * ((k * t) % n) / n
        out[k] = np.dot(x, np.cos(phase)) - 1j * np.dot(x, np.sin(phase))
    return out


def naive_conv2d(x, w, b, padding):
    """Cross-correlation by explicit loops. x: (N, Cin, H, W), w: (Cout, Cin, kh, kw)."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ph, pw = padding
    xp = np.zeros((n, cin, h + 2 * ph, wd + 2 * pw))
    xp[:, :, ph : ph + h, pw : pw + wd] = x
    ho, wo = h + 2 * ph - kh + 1, wd + 2 * pw - kw + 1
    out = np.zeros((n, cout, ho, wo))
    for a in range(n):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    s = 0.0 if b is None else b[o]
                    for c in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                s += xp[a, c, i + u, j + v] * w[o, c, u, v]
                    out[a, o, i, j] = s
    return out


def numeric_grad(f, x, h=1e-5):
    """Central finite differences of a scalar function with respect to array x (in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))


def brute_metrics(counts):
    """Metrics from a 4x4 confusion matrix by plain loops over Python ints."""
    n = len(counts)
    total = sum(sum(r) for r in counts)
    tp = [counts[c][c] for c in range(n)]
    row = [sum(counts[c][j] for j in range(n)) for c in range(n)]
    col = [sum(counts[i][c] for i in range(n)) for c in range(n)]
    rec = [tp[c] / row[c] if row[c] else 0.0 for c in range(n)]
    prec = [tp[c] / col[c] if col[c] else 0.0 for c in range(n)]
    f1 = [2 * prec[c] * rec[c] / (prec[c] + rec[c]) if prec[c] + rec[c] else 0.0 for c in range(n)]
    return {
        "accuracy": sum(tp) / total,
        "recall": rec,
        "precision": prec,
        "f1": f1,
        "weighted_accuracy": sum(rec) / n,
        "macro_precision": sum(prec) / n,
        "macro_f1": sum(f1) / n,
    }


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
