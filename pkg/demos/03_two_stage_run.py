"""
A complete two-stage run on the bundled fixtures
================================================

Stage 1 is a forest that flags attacks; stage 2 is the BiGRU + Transformer
network that re-decides only the flagged rows. The settings here are
shrunk so the whole run takes seconds.
"""
import json
import sys
import tempfile
from pathlib import Path

from trailgate import pipeline
from trailgate.config import load_config

DATA = Path(__file__).parents[1] / "tests" / "data"
task = sys.argv[1] if len(sys.argv) > 1 else "multi"

config = load_config(DATA / "small.cfg", task=task)
out = Path(tempfile.mkdtemp(prefix="trailgate_demo_"))
pipe, reports = pipeline.run(DATA / "fixture_train.txt", [DATA / "fixture_test.txt"], config, out)

names = pipe.schema.names
print("stage 1 features:", [names[j] for j in pipe.stage1.features])
print("stage 2 features:", [names[j] for j in pipe.stage2.features])

rep = reports["fixture_test"]
print("\naccuracy %.4f  macro F1 %.4f  macro FAR %.4f" % (rep["accuracy"], rep["macro_f1"], rep["macro_far"]))
print("%d of %d test rows went to stage 2" % (rep["stage1_flagged"], rep["n_samples"]))
print(json.dumps(rep["per_class"], indent=1)[:600], "...")

print("\nrun directory:", out)
for p in sorted(out.rglob("*")):
    if p.is_file():
        print("  ", p.relative_to(out))
