"""Smoke test for the pyqfsru extension.

Build and install first:

    pip install --no-build-isolation -e crates/python

then run `python crates/python/python/smoke_test.py`.
"""

import math
import os
import tempfile

import pyqfsru as q


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL: {what}")
    print(f"ok   {what}")


def main():
    bins = q.rfft([1.0, 2.0, 3.0, 4.0])
    check(bins == [(10.0, 0.0), (-2.0, 2.0), (-2.0, 0.0)], "rfft of [1,2,3,4]")
    back = q.irfft(bins, 4)
    check(max(abs(a - b) for a, b in zip(back, [1, 2, 3, 4])) < 1e-12, "irfft inverts rfft")
    check(len(q.to_freq_feature([0.5] * 768)) == 1026, "768-d feature has 1026 entries")

    a, b = [1.0, 2.0, -0.5], [-3.0, 0.25, 4.0]
    cos = sum(x * y for x, y in zip(a, b)) / math.hypot(*a) / math.hypot(*b)
    check(abs(q.quantum_similarity(a, b) - cos * cos) < 1e-12, "quantum similarity is squared cosine")

    m = q.prf1(93, 312, 19, 26)
    check(abs(m["precision"] - 0.8304) < 5e-5 and abs(m["accuracy"] - 0.9) < 5e-5, "prf1 example counts")
    check(q.roc_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75, "roc_auc")
    loss, grad = q.focal_loss([0.5, 0.5], 0, gamma=0.0, epsilon=0.0)
    check(abs(loss - math.log(2)) < 1e-15 and abs(sum(grad)) < 1e-15, "focal loss reduces to cross-entropy")
    folds = q.stratified_folds([0, 1] * 10, k=5, seed=1)
    check(sorted(folds.count(f) for f in range(5)) == [4] * 5, "stratified folds")

    data, kb = q.synth(n=60, d_t=16, d_v=32, d_k=16, n_knowledge=8, seed=3)
    check(len(data) == 60 and len(kb) == 8, "synth sizes")
    hits = kb.top_k(data.text_embedding(1), k=2)
    check(kb.payloads[hits[0][0]] == "class 1 prototype", "retrieval finds the class prototype")

    cfg = {"epochs": 20, "proj_dim": 16}
    model = q.train(data, kb, cfg)
    check(len(model.history["epochs"]) == 20, "train records history")
    probs = model.predict_proba(data, kb)
    check(len(probs) == 60 and all(0.0 <= p <= 1.0 for p in probs), "predict_proba")
    metrics = model.evaluate(data, kb)
    check(metrics["accuracy"] >= 0.9, f"training-set accuracy {metrics['accuracy']:.3f}")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.qfmp")
        model.save(path)
        loaded = q.Model.load(path)
        check(loaded.predict_proba(data, kb) == probs, "checkpoint round-trip")
        data.save(os.path.join(tmp, "d.qfse"))
        check(q.Dataset.load(os.path.join(tmp, "d.qfse")).labels == data.labels, "dataset round-trip")

    report = q.cross_validate(data, kb, folds=3, config=cfg)
    check(len(report["folds"]) == 3, f"cross-validation, avg accuracy {report['average']['accuracy']:.3f}")

    try:
        q.train(data, kb, {"epochz": 1})
        check(False, "unknown option rejected")
    except KeyError:
        check(True, "unknown option rejected")
    try:
        q.Dataset.load("/nonexistent/file.qfse")
        check(False, "missing file raises OSError")
    except OSError:
        check(True, "missing file raises OSError")
    print("smoke test passed")


if __name__ == "__main__":
    main()
