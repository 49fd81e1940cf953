"""Deterministic NSL-KDD-shaped traffic for fixtures and demos.

The generator plants signal in a handful of columns (protocol, service, flag,
byte counts, connection counts and rates) and leaves the rest as weak noise or
constants, so selection has something to find. A small share of labels is
flipped to give the noise estimator real work.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import FEATURE_NAMES

# (sub-type, share, protocol weights tcp/udp/icmp, preferred services, preferred flags)
PROFILES = {
    "normal": (0.46, (0.8, 0.15, 0.05), ("http", "smtp", "ftp_data", "domain_u"), ("SF",)),
    "neptune": (0.20, (1.0, 0.0, 0.0), ("private", "http", "telnet"), ("S0", "REJ")),
    "smurf": (0.08, (0.0, 0.0, 1.0), ("ecr_i",), ("SF",)),
    "portsweep": (0.06, (0.9, 0.0, 0.1), ("private", "other"), ("RSTR", "REJ")),
    "satan": (0.06, (0.7, 0.2, 0.1), ("other", "private"), ("REJ", "S0")),
    "guess_passwd": (0.05, (1.0, 0.0, 0.0), ("telnet", "ftp"), ("SF", "RSTO")),
    "warezclient": (0.04, (1.0, 0.0, 0.0), ("ftp_data", "ftp"), ("SF",)),
    "buffer_overflow": (0.03, (1.0, 0.0, 0.0), ("telnet",), ("SF",)),
    "rootkit": (0.02, (0.8, 0.2, 0.0), ("telnet", "ftp_data"), ("SF",)),
}
PROTOCOLS = ("tcp", "udp", "icmp")
SERVICES = ("http", "smtp", "ftp_data", "domain_u", "private", "telnet", "ecr_i", "other", "ftp")
FLAGS = ("SF", "S0", "REJ", "RSTR", "RSTO")

# log-scale centres for src_bytes / dst_bytes and typical connection counts
_BYTES = {
    "normal": (6.0, 7.5, 8, 0.9), "neptune": (0.0, 0.0, 200, 0.05), "smurf": (6.9, 0.0, 400, 1.0),
    "portsweep": (0.5, 0.5, 2, 0.3), "satan": (0.5, 1.0, 60, 0.1), "guess_passwd": (3.5, 4.5, 1, 1.0),
    "warezclient": (8.5, 2.0, 1, 1.0), "buffer_overflow": (7.0, 8.0, 1, 1.0), "rootkit": (5.0, 6.5, 1, 1.0),
}


def _choice(rng, options, weights=None):
    return options[rng.choice(len(options), p=weights)]


def generate_rows(n, seed=0, noise_rate=0.02, extra_services=()):
    """Return ``n`` NSL-KDD lines (without trailing newline) as strings."""
    rng = np.random.default_rng(seed)
    names = list(PROFILES)
    shares = np.array([PROFILES[k][0] for k in names])
    picks = rng.choice(len(names), size=n, p=shares / shares.sum())
    services = SERVICES + tuple(extra_services)
    lines = []
    for i in range(n):
        label = names[picks[i]]
        _, proto_w, svc, flags = PROFILES[label]
        src_c, dst_c, count_c, same = _BYTES[label]
        row = dict.fromkeys(FEATURE_NAMES, "0")
        row["protocol_type"] = _choice(rng, PROTOCOLS, proto_w)
        if extra_services and rng.random() < 0.1:
            row["service"] = _choice(rng, tuple(extra_services))
        elif rng.random() < 0.85:
            row["service"] = _choice(rng, svc)
        else:
            row["service"] = _choice(rng, services[:len(SERVICES)])
        row["flag"] = _choice(rng, flags) if rng.random() < 0.9 else _choice(rng, FLAGS)
        row["duration"] = str(int(rng.exponential(2.0 if label != "warezclient" else 40.0)))
        row["src_bytes"] = str(int(np.expm1(max(0.0, rng.normal(src_c, 0.8)))))
        row["dst_bytes"] = str(int(np.expm1(max(0.0, rng.normal(dst_c, 0.8)))))
        row["logged_in"] = "1" if label in ("normal", "guess_passwd", "warezclient", "buffer_overflow",
                                            "rootkit") and rng.random() < 0.9 else "0"
        row["hot"] = str(int(rng.poisson(3.0 if label in ("warezclient", "buffer_overflow") else 0.1)))
        row["num_failed_logins"] = str(int(label == "guess_passwd" and rng.random() < 0.7))
        row["root_shell"] = str(int(label in ("buffer_overflow", "rootkit") and rng.random() < 0.6))
        row["num_file_creations"] = str(int(rng.poisson(1.0 if label == "rootkit" else 0.05)))
        count = max(1, int(rng.normal(count_c, max(1.0, 0.2 * count_c))))
        row["count"] = str(min(count, 511))
        row["srv_count"] = str(min(511, max(1, int(count * rng.uniform(0.2, 1.0)))))
        serror = 0.95 if label == "neptune" else 0.02
        row["serror_rate"] = f"{np.clip(rng.normal(serror, 0.05), 0, 1):.2f}"
        row["srv_serror_rate"] = f"{np.clip(rng.normal(serror, 0.05), 0, 1):.2f}"
        rerror = 0.8 if label in ("portsweep", "satan") else 0.03
        row["rerror_rate"] = f"{np.clip(rng.normal(rerror, 0.1), 0, 1):.2f}"
        same_rate = np.clip(rng.normal(same, 0.08), 0, 1)
        row["same_srv_rate"] = f"{same_rate:.2f}"
        row["diff_srv_rate"] = f"{np.clip(1 - same_rate + rng.normal(0, 0.05), 0, 1):.2f}"
        row["dst_host_count"] = str(int(rng.integers(1, 256)))
        row["dst_host_srv_count"] = str(max(1, int(255 * np.clip(rng.normal(same, 0.2), 0, 1))))
        row["dst_host_same_srv_rate"] = f"{np.clip(rng.normal(same, 0.15), 0, 1):.2f}"
        row["dst_host_diff_srv_rate"] = f"{np.clip(rng.normal(1 - same, 0.15), 0, 1):.2f}"
        row["dst_host_serror_rate"] = f"{np.clip(rng.normal(serror, 0.1), 0, 1):.2f}"
        row["dst_host_srv_serror_rate"] = f"{np.clip(rng.normal(serror, 0.1), 0, 1):.2f}"
        row["dst_host_rerror_rate"] = f"{np.clip(rng.normal(rerror, 0.1), 0, 1):.2f}"
        if rng.random() < noise_rate:
            label = names[rng.integers(len(names))]
        difficulty = int(rng.integers(5, 22))
        lines.append(",".join(row[f] for f in FEATURE_NAMES) + f",{label},{difficulty}")
    return lines


def write_fixture(path, n, seed=0, **kwargs):
    lines = generate_rows(n, seed, **kwargs)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def shifted_tables(n_train=400, n_test=400, n_informative=4, n_noise=20, train_attack_share=0.1,
                   test_attack_share=0.5, seed=0):
    """Plain binary tables with prior shift between train and test plus irrelevant columns.

    Attack rows sit in a shifted blob over the informative columns; the noise
    columns are uniform for both classes. Returns ``(train, y_train, test, y_test)``.
    """
    from .dataset import BINARY, BINARY_CLASSES, CONTINUOUS, FeatureTable, LabelVector, Schema

    rng = np.random.default_rng(seed)
    d = n_informative + n_noise
    names = tuple(f"f{j}" for j in range(n_informative)) + tuple(f"noise{j}" for j in range(n_noise))
    schema = Schema(names, (CONTINUOUS,) * d, {}, ((0.0, 1.0),) * d)

    def draw(n, share):
        y = (rng.random(n) < share).astype(np.int64)
        X = rng.random((n, d))
        centre = np.where(y[:, None] == 1, 0.62, 0.38)
        X[:, :n_informative] = np.clip(centre + rng.normal(0, 0.12, (n, n_informative)), 0, 1)
        return FeatureTable(schema, X), LabelVector(BINARY, y, BINARY_CLASSES)

    tr, ytr = draw(n_train, train_attack_share)
    te, yte = draw(n_test, test_attack_share)
    return tr, ytr, te, yte
