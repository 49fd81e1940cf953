"""
Ranking traffic features by information gain
============================================

Score every column of a small NSL-KDD-shaped file, then drop the weaker
member of each highly correlated pair.
"""
from pathlib import Path

import numpy as np

from trailgate.dataset import BINARY, load_split
from trailgate.ranking import entropy, select_features

FIXTURE = Path(__file__).parents[1] / "tests" / "data" / "fixture_train.txt"

table, labels, schema = load_split(FIXTURE, scheme=BINARY)
print(table.n_rows, "rows,", schema.n_features, "features")
print("label entropy: %.4f bits" % entropy(labels))

# gains for discrete columns use the category partition; continuous ones the best midpoint split
record = select_features(table, labels, pcc_threshold=0.7)
print("\ntop ten by gain")
for j in record.order[:10]:
    thr = record.thresholds[j]
    where = "" if np.isnan(thr) else "  split at %.4f" % thr
    print("  %-28s %.4f%s" % (schema.names[j], record.gains[j], where))

# correlation pruning walks the ranking and keeps the first of each correlated pair
dropped = [schema.names[j] for j in record.order if j not in record.survivors]
print("\n%d survivors, %d dropped as redundant" % (len(record.survivors), len(dropped)))
print("dropped:", ", ".join(dropped[:8]), "..." if len(dropped) > 8 else "")
