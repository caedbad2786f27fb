import sys

import pytest

from hintgen._seeding import derive_seed
from hintgen.engine import SimulatedEngine
from hintgen.evalharness import make_splits
from hintgen.genmodel import train
from hintgen.traindata import collect_candidates, pairs_for_queries
from hintgen.workload import gen_schema, gen_workload


class TinySetup:
    """A 5-table workload with one quickly trained model per base-query fold."""

    def __init__(self, seed=0):
        self.seed = seed
        self.schema = gen_schema(seed, 5, 0.3)
        self.workload = gen_workload(self.schema, seed, 4, 3, 3)
        self.engine = SimulatedEngine()
        self.candidates = collect_candidates(self.schema, self.workload.queries(), 24,
                                             derive_seed(seed, "cand"), self.engine)
        self.splits = make_splits(self.workload, "base_query", seed)
        self.models = {}
        for sp in self.splits:
            qs = [self.workload.query(i) for i in sp.train_ids]
            pairs = pairs_for_queries(self.schema, qs, self.candidates, 0.025, seed, 0.5)
            st = train(pairs, latent_dim=4, hidden=(16,), learning_rate=3e-3, batch_size=32,
                       epochs=3, seed=seed)
            st.meta["schema_hash"] = self.schema.fingerprint()
            st.meta["train_ids"] = list(sp.train_ids)
            self.models[sp.fold] = st


@pytest.fixture(scope="session")
def tiny():
    return TinySetup()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
