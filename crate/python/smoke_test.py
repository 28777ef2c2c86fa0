"""Smoke test for the pyweaksup extension.

Build first:
    cargo build --release -p weaksup-py --features extension-module
then run:
    python3 python/smoke_test.py

If pyweaksup is not installed, the freshly built library under
target/release is copied to a temporary directory and imported from there.
"""

import json
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_module():
    try:
        import pyweaksup

        return pyweaksup
    except ImportError:
        pass
    for name in ("libpyweaksup.so", "libpyweaksup.dylib", "pyweaksup.dll"):
        built = os.path.join(ROOT, "target", "release", name)
        if os.path.exists(built):
            tmp = tempfile.mkdtemp()
            ext = ".pyd" if name.endswith(".dll") else ".so"
            shutil.copy(built, os.path.join(tmp, "pyweaksup" + ext))
            sys.path.insert(0, tmp)
            import pyweaksup

            return pyweaksup
    sys.exit("pyweaksup not built; see the module docstring")


def load_toy():
    path = os.path.join(ROOT, "fixtures", "toy", "docs.jsonl")
    with open(path) as f:
        docs = [json.loads(line) for line in f if line.strip()]
    with open(os.path.join(ROOT, "fixtures", "toy", "rules.txt")) as f:
        rules = f.read()
    return docs, rules


def main():
    ws = import_module()
    docs, source = load_toy()

    rules = ws.parse_rules(source, ["POS", "NEG"])
    assert rules.names == ["great", "awful", "short"], rules.names
    assert len(rules) == 3

    rows = rules.weak_labels(docs)
    assert rows[0] == [0, -1, -1] and rows[4] == [-1, -1, -1], rows
    matched, unmatched = ws.partition(rows, 1)
    assert (len(matched), len(unmatched)) == (4, 4)

    assert ws.majority_vote([0, 0, 1], 2) == 0
    assert ws.weighted_vote([0, 0, 1], [0.1074, 0.1074, 0.2482], 2) == 1
    p = ws.softmax([1.0, 2.0, 3.0])
    assert abs(sum(p) - 1.0) < 1e-12 and p[2] > p[1] > p[0]

    try:
        ws.parse_rules("rule x : HAS([\"a\"]) => MAYBE", ["POS", "NEG"])
        raise AssertionError("unknown class accepted")
    except ValueError:
        pass

    cfg = ws.TrainConfig(max_epochs=20, hidden=16, seed=3)
    assert (cfg.c1, cfg.c2, cfg.c3, cfg.alpha) == (0.2, 0.7, 0.1, 0.6)
    try:
        ws.TrainConfig(alpha=2.0)
        raise AssertionError("alpha outside [0, 1) accepted")
    except ValueError:
        pass

    # Embeddings: a class-dependent direction plus a per-document offset.
    emb = []
    for i, d in enumerate(docs):
        sign = 1.0 if d.get("label") == "POS" else -1.0
        emb.append([sign, 0.1 * i, -sign, math.sin(i)])
    model = ws.train(docs, emb, rules, cfg)
    assert 1 <= model.best_epoch <= model.epochs_run <= 20
    rel = model.reliability
    assert set(rel) == {"great", "awful", "short"}
    assert all(v >= 0.0 for v in rel.values())
    ranking = model.ranking()
    assert [v for _, v in ranking] == sorted(rel.values(), reverse=True)

    label, conf, origin = model.predict(emb[4], rows[4])
    assert label in ("POS", "NEG") and 0.5 <= conf <= 1.0
    assert origin == "classifier"  # no rule fired on this document

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.wsm")
        model.save(path)
        again = ws.Model.load(path)
        assert again.reliability == rel
        assert again.predict(emb[0], rows[0]) == model.predict(emb[0], rows[0])
        assert again.config.seed == 3

    print("pyweaksup smoke test passed")


if __name__ == "__main__":
    main()
