"""
Finding suspicious labels with confident learning
=================================================

Out-of-fold forest probabilities give each class a confidence threshold.
Rows whose confident class disagrees with their given label are the
"abnormal" samples later fed back into feature selection.
"""
from pathlib import Path

import numpy as np

from trailgate.dataset import MULTI5, load_split
from trailgate.forest import ForestClassifier
from trailgate.noise import noise_report, oof_probabilities

FIXTURE = Path(__file__).parents[1] / "tests" / "data" / "fixture_train.txt"

table, labels, _ = load_split(FIXTURE, scheme=MULTI5)
probs = oof_probabilities(table, labels, k=5,
                          model_factory=lambda s: ForestClassifier(n_estimators=30, seed=s, n_classes=5))
report, assign = noise_report(probs, labels)

print("class thresholds:")
for name, a in zip(labels.class_names, report.thresholds):
    print("  %-7s %.3f" % (name, a))

# rows are given labels, columns confident classes
print("\nconfident joint C")
print(report.counting)
print("\ncalibrated joint D (sums to %.6f)" % report.joint.sum())
print(np.round(report.joint, 4))

print("\n%d abnormal rows, %d unconfident" % (report.abnormal_indices.size, report.unconfident_indices.size))
for i in report.abnormal_indices[:5]:
    print("  row %3d given %-6s looks like %s" % (i, labels.class_names[labels.labels[i]],
                                                   labels.class_names[assign[i]]))
