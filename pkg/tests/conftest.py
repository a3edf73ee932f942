"""Shared fixtures: small corpora and trained systems reused across test modules.

Training fixtures are session-scoped because even the miniature encoder takes
a few seconds to fit; everything downstream of them is deterministic.
"""

import numpy as np
import pytest
import torch

from advsal import (
    SpeakerEncoder,
    TargetSystem,
    enroll,
    load_split,
    make_corpus,
)

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_manifest():
    # 4 speakers x 5 utterances splits into 3/1/1 per speaker.
    return make_corpus(4, 5, 0.5, corpus_seed=11)


@pytest.fixture(scope="session")
def tiny_train(tiny_manifest):
    return load_split(tiny_manifest, "train-target")


@pytest.fixture(scope="session")
def tiny_encoder(tiny_train):
    X, y, _ = tiny_train
    return SpeakerEncoder(embedding_dim=16, epochs=8, seed=0).fit(X, y)


@pytest.fixture(scope="session")
def tiny_db(tiny_encoder, tiny_train):
    X, y, _ = tiny_train
    return enroll(tiny_encoder, X, y)


@pytest.fixture(scope="session")
def csi_system(tiny_encoder, tiny_db):
    return TargetSystem(encoder=tiny_encoder, db=tiny_db, task="csi")


@pytest.fixture(scope="session")
def osi_system(tiny_encoder, tiny_db):
    return TargetSystem(encoder=tiny_encoder, db=tiny_db, task="osi", theta=0.5)


@pytest.fixture(scope="session")
def two_speaker_manifest():
    return make_corpus(2, 10, 0.5, corpus_seed=23)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
