"""Shared fixtures: shipped presets, assembled models and reductions."""

import csv
from pathlib import Path

import numpy as np
import pytest

from netmor.config import build_model, parse_config, preset_path, tirka_config
from netmor.dae import linearize
from netmor.mor import reduce

GOLDEN = Path(__file__).parent / "golden"


def read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def numeric_columns(path):
    header, rows = read_table(path)
    return header, np.array([[float(v) for v in r] for r in rows])


@pytest.fixture(scope="session")
def table1_cfg():
    return parse_config(preset_path("table1_gas.cfg"))


@pytest.fixture(scope="session")
def table1_dae(table1_cfg):
    return build_model(table1_cfg)


@pytest.fixture(scope="session")
def table1_lin(table1_dae):
    return linearize(table1_dae)


@pytest.fixture(scope="session")
def table1_reduced(table1_cfg, table1_dae):
    return reduce(table1_dae, tirka_config(table1_cfg))


@pytest.fixture(scope="session")
def fork_cfg():
    return parse_config(preset_path("fork_gas.cfg"))


@pytest.fixture(scope="session")
def fork_dae(fork_cfg):
    return build_model(fork_cfg)


@pytest.fixture(scope="session")
def fork_reduced(fork_cfg, fork_dae):
    return reduce(fork_dae, tirka_config(fork_cfg))
