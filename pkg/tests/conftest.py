import time

import numpy as np
import pytest

from segcoref import net
from segcoref.train import TrainConfig, fit, generate_probe, generate_synthetic, train
from segcoref.window import Vocab

# Desk-scale settings shared by the overfit fixtures.
OVERFIT_CFG = TrainConfig(seed=0, lr=3e-3, max_steps=1500, batch_size=16,
                          dim=32, heads=4, layers=2, ff=64, log_every=0)
PROBE_CFG = TrainConfig(seed=0, lr=3e-3, max_steps=400, batch_size=16,
                        dim=32, heads=4, layers=2, ff=64, log_every=0)
PROBE_DISTANCES = (5, 60, 150, 250, 300, 380)


@pytest.fixture(scope="session")
def overfit_corpus():
    return generate_synthetic(seed=7, n_docs=20, vocab_size=50, doc_len=60, n_entities=4)


TIMINGS = {}


@pytest.fixture(scope="session")
def overfit_models(overfit_corpus):
    start = time.perf_counter()
    result = train(overfit_corpus, OVERFIT_CFG)
    TIMINGS["overfit_train"] = time.perf_counter() - start
    return result


@pytest.fixture(scope="session")
def probe_corpus():
    return generate_probe(seed=3, distances=PROBE_DISTANCES, doc_len=400)


@pytest.fixture(scope="session")
def probe_resolver(probe_corpus):
    vocab = Vocab.from_documents(probe_corpus)
    model = net.init_params(0, PROBE_CFG.dims(len(vocab)))
    fit(model, probe_corpus, vocab, PROBE_CFG, False, np.random.default_rng(0))
    return model, vocab


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
