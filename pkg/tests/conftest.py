import pytest

from evodb import ColumnDef, DType, Engine


class StubTxn:
    """Minimal transaction stand-in for core-level chain tests."""

    def __init__(self, txn_id: int, begin_ts: int):
        self.txn_id = txn_id
        self.begin_ts = begin_ts
        self.write_set = []

    def iter_log_writes(self):
        for table_id, _array, rid, version in self.write_set:
            yield table_id, rid, version


@pytest.fixture
def engine():
    eng = Engine()
    yield eng
    eng.close()


INT3 = [ColumnDef("c0", DType.INT64, default=0),
        ColumnDef("c1", DType.INT64, default=0),
        ColumnDef("c2", DType.INT64, default=0)]


@pytest.fixture
def table3(engine):
    """A committed 3-int-column table preloaded with 20 rows (i, 2i, 3i)."""
    t = engine.create_table("t3", INT3)
    engine.load_rows(t, ((i, 2 * i, 3 * i) for i in range(20)))
    engine.drain_now()
    return t
