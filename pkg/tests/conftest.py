import os
from pathlib import Path

import pytest

from trailgate.config import PipelineConfig

DATA = Path(__file__).parent / "data"
FIXTURE_TRAIN = DATA / "fixture_train.txt"
FIXTURE_TEST = DATA / "fixture_test.txt"
SMALL_CONFIG = DATA / "small.cfg"

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def small_config(**changes):
    """Seconds-scale settings for fixture runs."""
    base = dict(
        forest_n_estimators=20, cl_folds=3, cl_n_estimators=10, ifs_forest_n_estimators=10,
        ifs_net_epochs=1, ifs_net_embed_dim=8, ifs_net_gru_hidden=8, ifs_net_ffn_dim=16,
        net_embed_dim=8, net_gru_hidden=8, net_heads=2, net_ffn_dim=16, net_fc_dim=8,
        net_epochs=3, net_k_folds=1, net_batch_size=64,
    )
    base.update(changes)
    return PipelineConfig(**base)


def nslkdd_dir():
    return Path(os.environ.get("TRAILGATE_NSLKDD_DIR", Path(__file__).parents[1] / "data" / "nsl-kdd"))


@pytest.fixture(scope="session")
def binary_run(tmp_path_factory):
    from trailgate import pipeline
    out = tmp_path_factory.mktemp("binary_run")
    pipe, reports = pipeline.run(FIXTURE_TRAIN, [FIXTURE_TEST], small_config(task="binary"), out)
    return out, pipe, reports


@pytest.fixture(scope="session")
def multi_run(tmp_path_factory):
    from trailgate import pipeline
    out = tmp_path_factory.mktemp("multi_run")
    pipe, reports = pipeline.run(FIXTURE_TRAIN, [FIXTURE_TEST], small_config(task="multi"), out)
    return out, pipe, reports


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
