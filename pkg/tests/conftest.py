"""Shared fixtures: small datasets for fast tests, and the full-scale
dataset/model pair used by the acceptance suite (built once per session,
only when a test asks for them)."""

import time
from pathlib import Path

import numpy as np
import pytest

from egohand.features import FeatureConfig
from egohand.synth import SynthConfig, generate_dataset, load_manifest
from egohand.training import train_from_manifest
from egohand.cli import _grasp_corpus

ACCEPT_TRAIN_SEED = 100
ACCEPT_TEST_SEED = 999
ACCEPT_K = 16
ACCEPT_LEVELS = 4
ACCEPT_M = 3


@pytest.fixture(scope="session")
def timings():
    return {}


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """60-sample dataset for unit tests (all 8 default grasps)."""
    out = tmp_path_factory.mktemp("small_ds")
    cfg = SynthConfig(n=60, seed=21, background_scenes=4)
    manifest = generate_dataset(cfg, out)
    return out, manifest


@pytest.fixture(scope="session")
def small_model(small_dataset):
    """Quickly trained model over the small dataset (K=4)."""
    out, manifest = small_dataset
    result = train_from_manifest(manifest, out, k=4, levels=3, m=3,
                                 epochs=8, seed=3)
    return result


@pytest.fixture(scope="session")
def acceptance_train_dataset(tmp_path_factory, timings):
    """1600 samples over 16 grasps (8 with objects, 8 bare)."""
    out = tmp_path_factory.mktemp("accept_train")
    t0 = time.time()
    cfg = SynthConfig(n=1600, seed=ACCEPT_TRAIN_SEED,
                      grasps=_grasp_corpus("both"), background_scenes=16)
    manifest = generate_dataset(cfg, out)
    timings["synth_train_s"] = time.time() - t0
    return out, manifest


@pytest.fixture(scope="session")
def acceptance_test_dataset(tmp_path_factory, timings):
    """200 held-out samples from a disjoint seed."""
    out = tmp_path_factory.mktemp("accept_test")
    t0 = time.time()
    cfg = SynthConfig(n=200, seed=ACCEPT_TEST_SEED,
                      grasps=_grasp_corpus("both"), background_scenes=0)
    manifest = generate_dataset(cfg, out)
    timings["synth_test_s"] = time.time() - t0
    return out, manifest


@pytest.fixture(scope="session")
def acceptance_train_result(acceptance_train_dataset, timings):
    out, manifest = acceptance_train_dataset
    t0 = time.time()
    result = train_from_manifest(manifest, out, k=ACCEPT_K,
                                 levels=ACCEPT_LEVELS, m=ACCEPT_M, seed=5)
    timings["train_s"] = time.time() - t0
    return result


@pytest.fixture(scope="session")
def acceptance_model_path(acceptance_train_result, tmp_path_factory):
    from egohand.cascade import save_model
    path = tmp_path_factory.mktemp("accept_model") / "model.json"
    save_model(acceptance_train_result.model, path)
    return path
