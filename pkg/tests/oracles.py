"""Slow, loop-based reference implementations used only by the tests."""

import math


def confusion(y_true, y_pred, C):
    cm = [[0] * C for _ in range(C)]
    for t, p in zip(y_true, y_pred):
        cm[t][p] += 1
    return cm


def argmax_lowest(row):
    best = 0
    for j in range(1, len(row)):
        if row[j] > row[best]:
            best = j
    return best


def per_class_prf(cm):
    C = len(cm)
    out = []
    for c in range(C):
        tp = cm[c][c]
        predicted = sum(cm[r][c] for r in range(C))
        actual = sum(cm[c])
        p = tp / predicted if predicted else 0.0
        r = tp / actual if actual else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        out.append((p, r, f, actual))
    return out


def pair_auc(pos_scores, neg_scores):
    total = 0.0
    for a in pos_scores:
        for b in neg_scores:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos_scores) * len(neg_scores))


def macro_auc(y_true, scores):
    C = len(scores[0])
    vals = []
    for c in range(C):
        pos = [s[c] for s, t in zip(scores, y_true) if t == c]
        neg = [s[c] for s, t in zip(scores, y_true) if t != c]
        if pos and neg:
            vals.append(pair_auc(pos, neg))
    return sum(vals) / len(vals)


def mae_rmse(y_true, scores):
    abs_sum = sq_sum = 0.0
    n = 0
    for s, t in zip(scores, y_true):
        for c, v in enumerate(s):
            e = v - (1.0 if c == t else 0.0)
            abs_sum += abs(e)
            sq_sum += e * e
            n += 1
    return abs_sum / n, math.sqrt(sq_sum / n)


def full_report(y_true, scores):
    C = len(scores[0])
    pred = [argmax_lowest(s) for s in scores]
    cm = confusion(y_true, pred, C)
    prf = per_class_prf(cm)
    mae, rmse = mae_rmse(y_true, scores)
    return {
        "confusion": cm,
        "accuracy": sum(cm[c][c] for c in range(C)) / len(y_true),
        "precision_macro": sum(x[0] for x in prf) / C,
        "recall_macro": sum(x[1] for x in prf) / C,
        "f1_macro": sum(x[2] for x in prf) / C,
        "per_class": prf,
        "auc_macro": macro_auc(y_true, scores),
        "mae": mae,
        "rmse": rmse,
    }
