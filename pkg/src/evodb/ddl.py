"""Schema-evolution execution under four policies.

* blocking  - table-level writer lock, migrate in place (baseline)
* basic     - strict per-record snapshot-isolation writes with full
              write-set tracking on the shared array; aborts on any
              write-write conflict with concurrent DML
* relaxed   - out-of-place scan/transform/install into a fresh
              indirection array with inherited commit timestamps, change
              data capture from the redo log, a pending schema state at
              the pre-commit timestamp, and the overlap ("sneak peek")
              admission rules for early access
* lazy      - commit the schema immediately, migrate records on access
              and in the background (copy-only changes)
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from . import core_store, verifier
from .catalog import (
    CATALOG_TABLE_ID,
    ColumnDef,
    ConstraintDef,
    ConstraintKind,
    DdlKind,
    SchemaState,
    SchemaVersion,
)
from .core_store import (
    TOMBSTONE,
    DType,
    IndirectionArray,
    KeyIndex,
    Rid,
    TableHandle,
    Version,
    is_tombstone,
)
from .txn import Engine, TxnContext, TxnStatus, encode_key

INCOMPATIBLE = object()

SCAN_CHUNK = 512


class Policy(Enum):
    BLOCKING = "blocking"
    LAZY = "lazy"
    BASIC = "basic"
    RELAXED = "relaxed"


class DdlOp(Enum):
    ADD_COLUMN = "add_column"
    DROP_COLUMN = "drop_column"
    MODIFY_COLUMN = "modify_column"
    ADD_CONSTRAINT = "add_constraint"
    ADD_COLUMN_WITH_CONSTRAINT = "add_column_with_constraint"
    CREATE_INDEX = "create_index"
    CREATE_TABLE_AS = "create_table_as"
    SPLIT_TABLE = "split_table"
    PREAGGREGATE = "preaggregate"
    JOIN_TABLE = "join_table"
    CREATE_TABLE = "create_table"
    DROP_TABLE = "drop_table"


class Phase(Enum):
    INSTALLING = "installing"
    SCANNING = "scanning"
    CDC = "cdc"
    FINALIZING = "finalizing"
    DONE = "done"
    ABORTED = "aborted"


@dataclass
class DdlSpec:
    """Declarative description of one schema-evolution operation."""

    kind: DdlOp
    table: str = ""
    column: Optional[ColumnDef] = None          # add/modify target
    drop_column: str = ""
    constraints: tuple[ConstraintDef, ...] = ()
    index_cols: tuple[str, ...] = ()
    index_name: str = "primary"
    out_table: str = ""                         # create_table_as / join
    out_split: tuple[tuple[str, tuple[str, ...]], ...] = ()
    select_cols: tuple[str, ...] = ()
    source_table: str = ""                      # join / preaggregate
    local_keys: tuple[str, ...] = ()
    foreign_keys: tuple[str, ...] = ()
    agg_source_col: str = ""                    # preaggregate summed column
    join_cols: tuple[str, ...] = ()
    columns: tuple[ColumnDef, ...] = ()         # create_table definition

    def classify(self) -> DdlKind:
        if self.kind in (DdlOp.ADD_COLUMN, DdlOp.DROP_COLUMN,
                         DdlOp.CREATE_TABLE_AS, DdlOp.SPLIT_TABLE,
                         DdlOp.PREAGGREGATE, DdlOp.JOIN_TABLE):
            return DdlKind.COPY_ONLY
        if self.kind is DdlOp.ADD_CONSTRAINT:
            return DdlKind.VERIFY_ONLY
        if self.kind in (DdlOp.MODIFY_COLUMN, DdlOp.ADD_COLUMN_WITH_CONSTRAINT,
                         DdlOp.CREATE_INDEX):
            return DdlKind.COPY_AND_VERIFY
        return DdlKind.METADATA_ONLY


@dataclass
class DdlResult:
    status: str                  # "committed" | "aborted"
    reason: str = ""
    commit_ts: Optional[int] = None
    job: Optional["DdlJob"] = None

    @property
    def committed(self) -> bool:
        return self.status == "committed"


class DdlJob:
    """Mutable state of one running schema-evolution operation."""

    def __init__(self, engine: Engine, spec: DdlSpec, policy: Policy,
                 scan_workers: int, cdc_workers: int) -> None:
        self.engine = engine
        self.spec = spec
        self.policy = policy
        self.scan_workers = max(1, scan_workers)
        self.cdc_workers = max(1, cdc_workers)
        self.relaxed = policy is Policy.RELAXED
        self.txn: Optional[TxnContext] = None
        self.table: Optional[TableHandle] = None
        self.old_schema: Optional[SchemaVersion] = None
        self.pending_schema: Optional[SchemaVersion] = None
        self.old_array: Optional[IndirectionArray] = None
        self.new_array: Optional[IndirectionArray] = None
        self.scan_bound: int = 0
        self.cdc_start_lsn: int = 0
        self.cdc_end_lsn: Optional[int] = None
        # per-chunk scan progress; change data capture skips records the
        # scan has not reached (their latest version gets migrated there)
        self.chunk_started: bytearray = bytearray()
        self.t_pre: Optional[int] = None
        self.wall_pre: Optional[float] = None
        self.commit_ts: Optional[int] = None
        self.phase = Phase.INSTALLING
        self.scan_visits = 0
        self.cdc_installs = 0
        self.diagnostics: list[str] = []
        self.failure: Optional[str] = None
        self._fail_lock = threading.Lock()
        self.resolved = threading.Event()
        self.outcome: Optional[str] = None
        self.sweep_done = threading.Event()
        self.index_builder: Optional[_IndexBuilder] = None
        self.out_tables: list[TableHandle] = []
        self.out_schemas: list[SchemaVersion] = []

    def fail(self, reason: str) -> None:
        with self._fail_lock:
            if self.failure is None:
                self.failure = reason

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def resolve(self, outcome: str) -> None:
        self.outcome = outcome
        self.phase = Phase.DONE if outcome == "committed" else Phase.ABORTED
        self.resolved.set()
        self.engine.kick_drainer()


class LookupContext:
    """Latest-committed keyed access to foreign tables, used by
    cross-table constraint checks and aggregate/join transforms."""

    def __init__(self, engine: Engine) -> None:
        self.engine = engine

    def _table(self, name: str) -> tuple[TableHandle, SchemaVersion]:
        handle = self.engine.catalog.handle_by_name(name)
        schema = self.engine.catalog.latest_committed_schema(handle.table_id)
        if schema is None:
            raise LookupError(f"table {name} has no committed schema")
        return handle, schema

    def latest_by_key(self, table_name: str, key_values: tuple
                      ) -> Optional[tuple[tuple, SchemaVersion]]:
        handle, schema = self._table(table_name)
        index = handle.indexes.get("primary")
        if index is None:
            return None
        rid = index.lookup(encode_key(key_values))
        if rid is None:
            return None
        v = core_store.latest_committed(schema.data_array, rid)
        if v is None or v.is_tombstone:
            return None
        return v.payload, schema

    def sum_probe(self, table_name: str, prefix_values: tuple,
                  value_col: str) -> float:
        """Sum ``value_col`` over rows whose primary key is the prefix
        plus a 1..n counter (contiguous line numbers)."""
        handle, schema = self._table(table_name)
        value_idx = schema.col_index(value_col)
        total = 0.0
        n = 1
        while True:
            got = self.latest_by_key(table_name, prefix_values + (n,))
            if got is None:
                return total
            payload, _ = got
            if value_idx < len(payload) and payload[value_idx] is not None:
                total += payload[value_idx]
            n += 1


_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def verify_record(payload: tuple, schema: SchemaVersion,
                  constraints: tuple[ConstraintDef, ...],
                  lookup_ctx: Optional[LookupContext]) -> bool:
    """True iff the payload satisfies every constraint. Null operands and
    unresolvable foreign keys count as violations."""
    for c in constraints:
        if c.kind is ConstraintKind.NOT_NULL:
            if payload[schema.col_index(c.column)] is None:
                return False
            continue
        val = payload[schema.col_index(c.column)]
        if c.kind is ConstraintKind.COLUMN_VS_CONST:
            if val is None or not _OPS[c.op](val, c.const):
                return False
        elif c.kind is ConstraintKind.COLUMN_VS_COLUMN:
            other = payload[schema.col_index(c.other_column)]
            if val is None or other is None or not _OPS[c.op](val, other):
                return False
        else:  # CROSS_TABLE_LOOKUP
            if lookup_ctx is None:
                return False
            key = tuple(payload[schema.col_index(k)] for k in c.local_key_cols)
            got = lookup_ctx.latest_by_key(c.foreign_table, key)
            if got is None:
                return False
            foreign_payload, foreign_schema = got
            target = foreign_payload[foreign_schema.col_index(c.foreign_col)]
            if val is None or target is None or not _OPS[c.op](val, target):
                return False
    return True


def _convert(value: Any, dtype: DType) -> Any:
    if value is None:
        return None
    try:
        if dtype is DType.INT64:
            if isinstance(value, float):
                if not value.is_integer():
                    return INCOMPATIBLE
                return int(value)
            return int(value)
        if dtype is DType.FLOAT64:
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        return INCOMPATIBLE


def transform_record(payload: tuple, old_schema: SchemaVersion,
                     new_schema: SchemaVersion, spec: DdlSpec,
                     lookup_ctx: Optional[LookupContext] = None) -> Any:
    """Convert one record from the old format to the new one; returns
    INCOMPATIBLE when the data cannot be represented."""
    kind = spec.kind
    if kind in (DdlOp.ADD_COLUMN, DdlOp.ADD_COLUMN_WITH_CONSTRAINT):
        return payload + (spec.column.default,)
    if kind is DdlOp.DROP_COLUMN:
        i = old_schema.col_index(spec.drop_column)
        return payload[:i] + payload[i + 1:]
    if kind is DdlOp.MODIFY_COLUMN:
        i = old_schema.col_index(spec.column.name)
        converted = _convert(payload[i], spec.column.dtype)
        if converted is INCOMPATIBLE:
            return INCOMPATIBLE
        return payload[:i] + (converted,) + payload[i + 1:]
    if kind is DdlOp.PREAGGREGATE:
        if lookup_ctx is None:
            return INCOMPATIBLE
        prefix = tuple(payload[old_schema.col_index(k)] for k in spec.local_keys)
        total = lookup_ctx.sum_probe(spec.source_table, prefix, spec.agg_source_col)
        return payload + (total,)
    if kind is DdlOp.CREATE_TABLE_AS:
        return tuple(payload[old_schema.col_index(c)] for c in spec.select_cols)
    if kind is DdlOp.JOIN_TABLE:
        if lookup_ctx is None:
            return INCOMPATIBLE
        key = tuple(payload[old_schema.col_index(k)] for k in spec.local_keys)
        got = lookup_ctx.latest_by_key(spec.source_table, key)
        if got is None:
            extra = tuple(None for _ in spec.join_cols)
        else:
            fpayload, fschema = got
            extra = tuple(fpayload[fschema.col_index(c)] for c in spec.join_cols)
        return payload + extra
    # verify-only / index kinds keep the payload as is
    return payload


def build_new_schema(old: SchemaVersion, spec: DdlSpec,
                     data_array: IndirectionArray) -> SchemaVersion:
    kind = spec.kind
    columns = old.columns
    constraints = old.constraints
    if kind in (DdlOp.ADD_COLUMN, DdlOp.ADD_COLUMN_WITH_CONSTRAINT):
        columns = old.columns + (spec.column,)
    elif kind is DdlOp.DROP_COLUMN:
        columns = tuple(c for c in old.columns if c.name != spec.drop_column)
    elif kind is DdlOp.MODIFY_COLUMN:
        columns = tuple(spec.column if c.name == spec.column.name else c
                        for c in old.columns)
    elif kind is DdlOp.PREAGGREGATE:
        columns = old.columns + (spec.column,)
    if kind in (DdlOp.ADD_CONSTRAINT, DdlOp.ADD_COLUMN_WITH_CONSTRAINT):
        constraints = old.constraints + spec.constraints
    return SchemaVersion(old.table_id, old.table_name, columns, constraints,
                         state=SchemaState.COMMITTED, data_array=data_array,
                         ddl_kind=spec.classify())


class OverlapVerdict(Enum):
    PROCEED = "proceed"
    ABORT = "abort"
    USE_OLD = "use_old"


class AccessMode(Enum):
    READ = "read"
    BLIND_WRITE = "blind_write"
    READ_MODIFY_WRITE = "read_modify_write"


def overlap_check(txn: TxnContext, table: TableHandle, rid: Rid,
                  access: AccessMode) -> OverlapVerdict:
    """The relaxed-admission rule for one record access under a pending
    schema with out-of-place migration (the engine's read path applies
    the same rule fused with the read)."""
    job = table.active_ddl
    if job is None or job.t_pre is None or txn.begin_ts <= job.t_pre:
        return OverlapVerdict.USE_OLD
    if job.new_array is None:
        return OverlapVerdict.PROCEED
    if access is AccessMode.BLIND_WRITE:
        return OverlapVerdict.PROCEED
    new_v = core_store.latest_committed(job.new_array, rid) \
        if job.new_array.covers(rid) else None
    old_v = core_store.latest_committed(job.old_array, rid) \
        if job.old_array.covers(rid) else None
    if new_v is None:
        return OverlapVerdict.PROCEED if old_v is None else OverlapVerdict.ABORT
    if old_v is not None and old_v.commit_ts > new_v.commit_ts:
        return OverlapVerdict.ABORT
    return OverlapVerdict.PROCEED


class _IndexBuilder:
    """Timestamp-ordered staging map for online index construction.

    Scan workers and the (single) CDC consumer apply entries with
    newest-wins semantics; a second live row claiming an existing key is
    a uniqueness violation.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._map: dict[bytes, tuple[int, Rid, bool]] = {}

    def apply(self, key: bytes, ts: int, rid: Rid, live: bool) -> Optional[str]:
        with self._lock:
            cur = self._map.get(key)
            if cur is None:
                self._map[key] = (ts, rid, live)
                return None
            cur_ts, cur_rid, cur_live = cur
            if ts < cur_ts:
                return None  # stale replay
            if live and cur_live and cur_rid != rid:
                return f"duplicate key for rids {cur_rid} and {rid}"
            self._map[key] = (ts, rid, live)
            return None

    def materialize(self, name: str, key_cols: tuple[int, ...]) -> KeyIndex:
        index = KeyIndex(name, key_cols)
        with self._lock:
            for key, (_ts, rid, live) in self._map.items():
                if live:
                    index.insert(key, rid)
        return index


# ---------------------------------------------------------------------------


def execute_ddl(engine: Engine, spec: DdlSpec, policy: Policy, *,
                scan_workers: Optional[int] = None,
                cdc_workers: Optional[int] = None,
                total_workers: Optional[int] = None) -> DdlResult:
    """Run one schema-evolution operation to completion under ``policy``.

    When only ``total_workers`` is given, the default split assigns
    ceil(3w/8) workers to the scan phase and the rest to change data
    capture.
    """
    if total_workers is not None and scan_workers is None:
        scan_workers = max(1, math.ceil(3 * total_workers / 8))
        cdc_workers = max(1, total_workers - scan_workers)
    job = DdlJob(engine, spec, policy, scan_workers or 1, cdc_workers or 1)

    if spec.kind is DdlOp.CREATE_TABLE:
        return _run_create_table(job)
    if spec.kind is DdlOp.DROP_TABLE:
        return _run_drop_table(job)

    table = engine.catalog.handle_by_name(spec.table)
    job.table = table
    if not _register(engine, table, job):
        return DdlResult("aborted", "concurrent_ddl", job=job)
    try:
        if policy is Policy.BLOCKING:
            return _run_blocking(job)
        if policy is Policy.BASIC:
            return _run_basic(job)
        if policy is Policy.LAZY:
            return _run_lazy(job)
        return _run_relaxed(job)
    finally:
        if table.active_ddl is job:
            table.active_ddl = None
        if not job.resolved.is_set():
            job.resolve("aborted" if job.outcome != "committed" else "committed")


_registry_lock = threading.Lock()


def _register(engine: Engine, table: TableHandle, job: DdlJob) -> bool:
    with _registry_lock:
        if table.active_ddl is not None:
            return False
        table.active_ddl = job
        return True


def _abort_job(job: DdlJob, reason: str) -> DdlResult:
    engine = job.engine
    if job.pending_schema is not None and job.pending_schema.pending_ts is not None \
            and job.table is not None:
        with engine._commit_mutex:
            engine.catalog.revoke_pending(job.table.table_id)
            if engine.trace:
                engine.trace.emit(verifier.SCHEMA_REVOKE, table=job.table.table_id,
                                  schema_version=job.pending_schema.version_no)
    if job.txn is not None and job.txn.status is TxnStatus.ACTIVE:
        engine._abort_internal(job.txn)
    job.new_array = None
    if job.table is not None and job.table.active_ddl is job:
        job.table.active_ddl = None
    job.resolve("aborted")
    return DdlResult("aborted", reason, job=job)


# -- metadata-only kinds ------------------------------------------------------


def _run_create_table(job: DdlJob) -> DdlResult:
    engine = job.engine
    handle = engine.create_table(job.spec.out_table or job.spec.table,
                                 job.spec.columns, job.spec.constraints)
    job.out_tables.append(handle)
    head = engine.catalog.head_version(handle.table_id)
    job.commit_ts = head.commit_ts
    job.resolve("committed")
    return DdlResult("committed", commit_ts=job.commit_ts, job=job)


def _run_drop_table(job: DdlJob) -> DdlResult:
    engine = job.engine
    table = engine.catalog.handle_by_name(job.spec.table)
    old = engine.catalog.latest_committed_schema(table.table_id)
    txn = engine.begin()
    job.txn = txn
    dropped = SchemaVersion(table.table_id, table.name, old.columns,
                            old.constraints, data_array=old.data_array,
                            ddl_kind=DdlKind.METADATA_ONLY, dropped=True)
    if not engine.catalog.install_schema_version(txn, table.table_id, dropped):
        return _abort_job(job, "conflict")
    status = engine.commit(txn)
    if status is TxnStatus.ABORTED:
        return _abort_job(job, "conflict")
    job.commit_ts = txn.commit_ts
    job.resolve("committed")
    return DdlResult("committed", commit_ts=txn.commit_ts, job=job)


# -- blocking -----------------------------------------------------------------


def _run_blocking(job: DdlJob) -> DdlResult:
    engine = job.engine
    spec = job.spec
    table = job.table
    table.rwlock.acquire_write()
    try:
        txn = engine.begin()
        job.txn = txn
        old = engine.catalog.latest_committed_schema(table.table_id)
        job.old_schema = old
        arr = table.live_array
        job.old_array = arr
        if spec.kind in (DdlOp.SPLIT_TABLE, DdlOp.CREATE_TABLE_AS,
                         DdlOp.JOIN_TABLE):
            new_schema = None
            _prepare_out_tables(job, txn, old)
            if job.failed:
                return _abort_job(job, job.failure)
        else:
            new_schema = build_new_schema(old, spec, arr)
            if not engine.catalog.install_schema_version(txn, table.table_id,
                                                         new_schema):
                return _abort_job(job, "conflict")
        ctx = LookupContext(engine)
        bound = table.next_rid
        builder = _IndexBuilder() if spec.kind is DdlOp.CREATE_INDEX else None
        key_positions = (tuple(old.col_index(c) for c in spec.index_cols)
                         if spec.kind is DdlOp.CREATE_INDEX else ())
        job.phase = Phase.SCANNING
        for rid in range(bound):
            if not arr.covers(rid):
                continue
            v = core_store.latest_committed(arr, rid)
            job.scan_visits += 1
            if v is None or v.is_tombstone:
                continue
            if spec.kind is DdlOp.CREATE_INDEX:
                key = encode_key(tuple(v.payload[i] for i in key_positions))
                err = builder.apply(key, v.commit_ts, rid, True)
                if err:
                    return _abort_job(job, "incompatible_data")
                continue
            if spec.kind in (DdlOp.SPLIT_TABLE, DdlOp.CREATE_TABLE_AS,
                             DdlOp.JOIN_TABLE):
                if not _emit_out_rows(job, rid, v, ctx):
                    return _abort_job(job, "incompatible_data")
                continue
            new_payload = transform_record(v.payload, old, new_schema, spec, ctx)
            if new_payload is INCOMPATIBLE:
                return _abort_job(job, "incompatible_data")
            if new_schema.constraints and not verify_record(
                    new_payload, new_schema, new_schema.constraints, ctx):
                return _abort_job(job, "incompatible_data")
            if spec.classify() in (DdlKind.COPY_ONLY, DdlKind.COPY_AND_VERIFY):
                nv = Version(new_payload, owner_txn=txn.txn_id)
                if not core_store.install_version(txn, arr, rid, nv,
                                                  table.table_id):
                    return _abort_job(job, "conflict")
        job.phase = Phase.FINALIZING
        status = engine.commit(txn)
        if status is TxnStatus.ABORTED:
            return _abort_job(job, txn.abort_reason or "conflict")
        if builder is not None:
            table.indexes[spec.index_name] = builder.materialize(
                spec.index_name, key_positions)
        _sync_out_tables(job)
        _emit_schema_commit(job, new_schema, txn.commit_ts)
        job.commit_ts = txn.commit_ts
        job.resolve("committed")
        return DdlResult("committed", commit_ts=txn.commit_ts, job=job)
    finally:
        table.rwlock.release_write()


# -- basic --------------------------------------------------------------------


def _run_basic(job: DdlJob) -> DdlResult:
    engine = job.engine
    spec = job.spec
    table = job.table
    txn = engine.begin()
    job.txn = txn
    old = engine.catalog.latest_committed_schema(table.table_id)
    job.old_schema = old
    arr = table.live_array
    job.old_array = arr
    new_schema = build_new_schema(old, spec, arr)
    if not engine.catalog.install_schema_version(txn, table.table_id, new_schema):
        return _abort_job(job, "conflict")
    ctx = LookupContext(engine)
    verify_only = spec.classify() is DdlKind.VERIFY_ONLY
    bound = table.next_rid
    job.phase = Phase.SCANNING
    for rid in range(bound):
        if not arr.covers(rid):
            continue
        job.scan_visits += 1
        if verify_only:
            v = core_store.latest_committed(arr, rid)
            if v is None or v.is_tombstone:
                continue
            if not verify_record(v.payload, old, spec.constraints, ctx):
                return _abort_job(job, "incompatible_data")
            continue
        found = core_store.read_visible(txn.begin_ts, arr, rid)
        head = core_store.latest_committed(arr, rid)
        if found is None:
            if head is not None:
                # a concurrent writer committed a version we cannot see
                return _abort_job(job, "conflict")
            continue
        v, _ = found
        if v.is_tombstone:
            continue
        new_payload = transform_record(v.payload, old, new_schema, spec, ctx)
        if new_payload is INCOMPATIBLE:
            return _abort_job(job, "incompatible_data")
        if new_schema.constraints and not verify_record(
                new_payload, new_schema, new_schema.constraints, ctx):
            return _abort_job(job, "incompatible_data")
        nv = Version(new_payload, owner_txn=txn.txn_id)
        if not core_store.install_version(txn, arr, rid, nv, table.table_id):
            return _abort_job(job, "conflict")
    job.phase = Phase.FINALIZING
    status = engine.commit(txn)
    if status is TxnStatus.ABORTED:
        return _abort_job(job, txn.abort_reason or "conflict")
    _emit_schema_commit(job, new_schema, txn.commit_ts)
    job.commit_ts = txn.commit_ts
    job.resolve("committed")
    return DdlResult("committed", commit_ts=txn.commit_ts, job=job)


# -- lazy ---------------------------------------------------------------------


class LazyState:
    """Per-table lazy-migration adapter: transforms records on access and
    via background sweep workers, each record at most once."""

    def __init__(self, job: DdlJob, old_schema: SchemaVersion,
                 schema: SchemaVersion) -> None:
        self.job = job
        self.old_schema = old_schema
        self.schema = schema
        self.array = schema.data_array
        self.migrated = 0
        self._lock = threading.Lock()

    def migrate_on_access(self, rid: Rid, version: Version) -> Optional[tuple]:
        if version.is_tombstone:
            return None
        new_payload = transform_record(version.payload, self.old_schema,
                                       self.schema, self.job.spec,
                                       LookupContext(self.job.engine))
        if new_payload is INCOMPATIBLE:
            self.job.diagnostics.append(
                f"rid {rid}: incompatible record found after lazy schema change")
            return None
        if core_store.replace_in_place(self.array, rid, version, new_payload):
            with self._lock:
                self.migrated += 1
        return new_payload

    def sweep(self, bound: int, workers: int = 1) -> None:
        def run(offset: int) -> None:
            for rid in range(offset, bound, workers):
                if not self.array.covers(rid):
                    continue
                v = core_store.latest_committed(self.array, rid)
                if v is None or v.is_tombstone:
                    continue
                if len(v.payload) == self.schema.ncols:
                    continue
                self.migrate_on_access(rid, v)

        threads = [threading.Thread(target=run, args=(i,), daemon=True)
                   for i in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        self.job.sweep_done.set()


def _run_lazy(job: DdlJob) -> DdlResult:
    engine = job.engine
    spec = job.spec
    table = job.table
    if spec.kind not in (DdlOp.ADD_COLUMN, DdlOp.DROP_COLUMN):
        return _abort_job(job, "unsupported_lazy_kind")
    txn = engine.begin()
    job.txn = txn
    old = engine.catalog.latest_committed_schema(table.table_id)
    job.old_schema = old
    new_schema = build_new_schema(old, spec, table.live_array)
    if not engine.catalog.install_schema_version(txn, table.table_id, new_schema):
        return _abort_job(job, "conflict")
    bound = table.next_rid
    status = engine.commit(txn)
    if status is TxnStatus.ABORTED:
        return _abort_job(job, txn.abort_reason or "conflict")
    _emit_schema_commit(job, new_schema, txn.commit_ts)
    job.commit_ts = txn.commit_ts
    state = LazyState(job, old, new_schema)
    table.lazy_state = state
    table.active_ddl = None
    job.resolve("committed")
    sweeper = threading.Thread(target=state.sweep,
                               args=(bound, job.scan_workers), daemon=True)
    sweeper.start()
    return DdlResult("committed", commit_ts=txn.commit_ts, job=job)


# -- relaxed ------------------------------------------------------------------


def _prepare_out_tables(job: DdlJob, txn: TxnContext,
                        old: SchemaVersion) -> None:
    """Create hidden output tables (split/join/create-as) whose schema
    records stay uncommitted until the job finalizes."""
    engine = job.engine
    spec = job.spec
    targets: list[tuple[str, tuple[ColumnDef, ...]]] = []
    if spec.kind is DdlOp.SPLIT_TABLE:
        for name, cols in spec.out_split:
            targets.append((name, tuple(old.columns[old.col_index(c)]
                                        for c in cols)))
    elif spec.kind is DdlOp.CREATE_TABLE_AS:
        targets.append((spec.out_table,
                        tuple(old.columns[old.col_index(c)]
                              for c in spec.select_cols)))
    elif spec.kind is DdlOp.JOIN_TABLE:
        src_schema = engine.catalog.latest_committed_schema(
            engine.catalog.handle_by_name(spec.source_table).table_id)
        joined = old.columns + tuple(
            src_schema.columns[src_schema.col_index(c)] for c in spec.join_cols)
        targets.append((spec.out_table, joined))
    for name, cols in targets:
        handle = engine.catalog.new_table_handle(name)
        schema = SchemaVersion(handle.table_id, name, cols,
                               data_array=handle.live_array,
                               ddl_kind=spec.classify())
        if not engine.catalog.install_schema_version(txn, handle.table_id, schema):
            job.fail("conflict")
            return
        job.out_tables.append(handle)
        job.out_schemas.append(schema)


def _emit_out_rows(job: DdlJob, rid: Rid, v: Version,
                   ctx: LookupContext) -> bool:
    """Project one source record into the output tables (inherited ts).

    Output arrays are written only by this job, so plain newest-wins
    ordering applies (no admitted-era boundary)."""
    spec = job.spec
    old = job.old_schema
    if spec.kind is DdlOp.SPLIT_TABLE:
        for handle, (name, cols) in zip(job.out_tables, spec.out_split):
            sub = tuple(v.payload[old.col_index(c)] for c in cols)
            core_store.install_migrated(handle.live_array, rid, sub,
                                        v.commit_ts)
            if rid >= handle.live_array.logical_size:
                handle.live_array.logical_size = rid + 1
        return True
    payload = transform_record(v.payload, old, None, spec, ctx)
    if payload is INCOMPATIBLE:
        return False
    handle = job.out_tables[0]
    core_store.install_migrated(handle.live_array, rid, payload, v.commit_ts)
    if rid >= handle.live_array.logical_size:
        handle.live_array.logical_size = rid + 1
    return True


def _run_relaxed(job: DdlJob) -> DdlResult:
    engine = job.engine
    spec = job.spec
    table = job.table
    kind = spec.classify()
    txn = engine.begin()
    job.txn = txn
    old = engine.catalog.latest_committed_schema(table.table_id)
    job.old_schema = old
    job.old_array = table.live_array

    out_table_kind = spec.kind in (DdlOp.SPLIT_TABLE, DdlOp.CREATE_TABLE_AS,
                                   DdlOp.JOIN_TABLE)
    index_kind = spec.kind is DdlOp.CREATE_INDEX
    copies = kind in (DdlKind.COPY_ONLY, DdlKind.COPY_AND_VERIFY) \
        and not out_table_kind and not index_kind
    new_schema: Optional[SchemaVersion] = None

    if out_table_kind:
        _prepare_out_tables(job, txn, old)
        if job.failed:
            return _abort_job(job, job.failure)
    else:
        job.new_array = IndirectionArray() if copies else None
        data_array = job.new_array if copies else table.live_array
        new_schema = build_new_schema(old, spec, data_array)
        if not engine.catalog.install_schema_version(txn, table.table_id,
                                                     new_schema):
            return _abort_job(job, "conflict")
        job.pending_schema = new_schema
    if index_kind:
        job.index_builder = _IndexBuilder()

    # scan bookmarks: the log position first, then the array size, so an
    # insert between the two snapshots is covered by change data capture
    job.cdc_start_lsn = engine.log.current_lsn()
    job.scan_bound = table.snapshot_size()
    job.chunk_started = bytearray((job.scan_bound + SCAN_CHUNK - 1) // SCAN_CHUNK)
    job.phase = Phase.SCANNING

    ctx = LookupContext(engine)
    drain_to_tail = index_kind or out_table_kind
    # index builds need ordered replay; a single change-data consumer
    ncdc = 1 if index_kind else job.cdc_workers
    job._worker_pos = [job.cdc_start_lsn] * ncdc
    cdc_stop = threading.Event()
    cdc_threads = [
        threading.Thread(target=_cdc_worker,
                         args=(job, i, ctx, cdc_stop, drain_to_tail),
                         daemon=True)
        for i in range(ncdc)
    ]
    for t in cdc_threads:
        t.start()

    scan_threads = [threading.Thread(target=_scan_worker, args=(job, i, ctx),
                                     daemon=True)
                    for i in range(job.scan_workers)]
    for t in scan_threads:
        t.start()
    for t in scan_threads:
        t.join()
    if job.failed:
        cdc_stop.set()
        for t in cdc_threads:
            t.join()
        return _abort_job(job, job.failure)

    # scan complete: acquire the pre-commit timestamp and expose the new
    # schema in the pending state inside the commit critical section
    with engine._commit_mutex:
        t_pre = engine.clock.reserve()
        job.t_pre = t_pre
        job.wall_pre = time.monotonic()
        if new_schema is not None:
            engine.catalog.set_pending(table.table_id, t_pre)
            if engine.trace:
                engine.trace.emit(verifier.SCHEMA_PENDING, table=table.table_id,
                                  ts=t_pre, schema_version=new_schema.version_no,
                                  ncols=new_schema.ncols)
        if not drain_to_tail:
            job.cdc_end_lsn = engine.log.current_lsn()
        engine.clock.publish(t_pre)
    job.phase = Phase.CDC

    if drain_to_tail:
        # let workers catch up with the live tail, then stop them at a
        # snapshot; the finalize section drains the remainder inline
        while not job.failed:
            tail = engine.log.current_lsn()
            if all(p >= tail for p in job_worker_pos(job)):
                break
            time.sleep(0.001)
        job.cdc_end_lsn = engine.log.current_lsn()
    cdc_stop.set()
    for t in cdc_threads:
        t.join()
    if job.failed:
        return _abort_job(job, job.failure)

    # finalize
    job.phase = Phase.FINALIZING
    with engine._commit_mutex:
        if job.failed:
            pass
        else:
            if drain_to_tail:
                _drain_inline(job, ctx, engine.log.current_lsn())
            if not job.failed:
                cts = engine.clock.reserve()
                txn.commit_ts = cts
                for _tid, _arr, _rid, version in txn.write_set:
                    version.commit_ts = cts
                if new_schema is not None:
                    engine.catalog.finalize_schema(table.table_id, cts)
                    if job.new_array is not None:
                        table.swap_array(job.new_array)
                _sync_out_tables(job)
                if index_kind:
                    key_positions = tuple(old.col_index(c)
                                          for c in spec.index_cols)
                    table.indexes[spec.index_name] = \
                        job.index_builder.materialize(spec.index_name,
                                                      key_positions)
                engine.log.append_commit(txn)
                if engine.trace:
                    engine.trace.emit(verifier.COMMIT, txn=txn.txn_id, ts=cts)
                txn.status = TxnStatus.PRE_COMMITTED
                engine._enqueue_precommitted(txn)
                job.commit_ts = cts
                engine.clock.publish(cts)
    if job.failed:
        return _abort_job(job, job.failure)
    _emit_schema_commit(job, new_schema, job.commit_ts)
    engine._deactivate(txn)
    table.active_ddl = None
    job.resolve("committed")
    return DdlResult("committed", commit_ts=job.commit_ts, job=job)


def job_worker_pos(job: DdlJob) -> list[int]:
    return getattr(job, "_worker_pos", [])


def _scan_worker(job: DdlJob, idx: int, ctx: LookupContext) -> None:
    """Chunked round-robin pass over RIDs [0, S) migrating the latest
    committed version of each record with its inherited timestamp.

    Workers yield briefly between chunks so foreground transaction
    threads keep their scheduler share while the migration runs."""
    spec = job.spec
    old = job.old_schema
    new_schema = job.pending_schema
    arr = job.old_array
    visits = 0
    verify_constraints = spec.constraints if spec.constraints else ()
    key_positions = (tuple(old.col_index(c) for c in spec.index_cols)
                     if spec.kind is DdlOp.CREATE_INDEX else ())
    first = True
    for chunk in range(idx * SCAN_CHUNK, job.scan_bound,
                       job.scan_workers * SCAN_CHUNK):
        if job.failed:
            break
        if not first:
            # a timed yield per chunk keeps each work burst under one
            # scheduler slice, so foreground transactions are not starved
            time.sleep(0.0008)
        first = False
        job.chunk_started[chunk >> 9] = 1  # SCAN_CHUNK == 512
        for rid in range(chunk, min(chunk + SCAN_CHUNK, job.scan_bound)):
            visits += 1
            if not arr.covers(rid):
                continue
            v = core_store.latest_committed(arr, rid)
            if v is None:
                continue
            if v.is_tombstone:
                if job.new_array is not None:
                    core_store.install_migrated(job.new_array, rid, TOMBSTONE,
                                                v.commit_ts,
                                                newer_than=job.t_pre)
                continue
            if spec.kind is DdlOp.CREATE_INDEX:
                key = encode_key(tuple(v.payload[i] for i in key_positions))
                err = job.index_builder.apply(key, v.commit_ts, rid, True)
                if err:
                    job.fail("incompatible_data")
                    return
                continue
            if job.out_tables:
                if not _emit_out_rows(job, rid, v, ctx):
                    job.fail("incompatible_data")
                    return
                continue
            payload = transform_record(v.payload, old, new_schema, spec, ctx)
            if payload is INCOMPATIBLE:
                job.fail("incompatible_data")
                return
            if verify_constraints and new_schema is not None and \
                    not verify_record(payload, new_schema, verify_constraints, ctx):
                job.fail("incompatible_data")
                return
            if job.new_array is not None:
                core_store.install_migrated(job.new_array, rid, payload,
                                            v.commit_ts, newer_than=job.t_pre)
        with job._fail_lock:
            job.scan_visits += visits
            visits = 0
    with job._fail_lock:
        job.scan_visits += visits


def _cdc_worker(job: DdlJob, idx: int, ctx: LookupContext,
                stop: threading.Event, drain_to_tail: bool) -> None:
    """Consume the redo log from the job's bookmark, transforming and
    installing concurrent updates (newest-wins, stale replays discarded).
    Runs concurrently with the scan phase."""
    engine = job.engine
    nworkers = len(job._worker_pos)
    pos = job.cdc_start_lsn
    while True:
        end = job.cdc_end_lsn
        tail = engine.log.current_lsn()
        bound = tail if end is None else min(end, tail)
        progressed = False
        consumed = 0
        while pos < bound:
            rec = engine.log.record(pos)
            pos += 1
            progressed = True
            consumed += 1
            if consumed % 256 == 0 and job.t_pre is None:
                # while overlapped with the scan, keep foreground threads
                # scheduled; after t_pre, completion speed gates admitted
                # transactions and runs unthrottled
                time.sleep(0.0008)
            if rec.table_id != job.table.table_id or rec.lsn % nworkers != idx:
                continue
            if job.t_pre is not None and not drain_to_tail \
                    and rec.commit_ts > job.t_pre:
                continue
            if rec.rid < job.scan_bound \
                    and not job.chunk_started[rec.rid >> 9]:
                continue  # an unstarted scan chunk will migrate it fresher
            _replay_record(job, rec, ctx)
            if job.failed:
                break
        job._worker_pos[idx] = pos
        if job.failed:
            return
        if end is not None and pos >= end:
            return
        if stop.is_set() and not progressed and pos >= engine.log.current_lsn():
            return
        if not progressed:
            time.sleep(0.0005)


def _replay_record(job: DdlJob, rec, ctx: LookupContext) -> None:
    """Replay one redo record into the migration target. The source
    version is re-located on the old chain so records whose transaction
    was cascade-aborted after logging are skipped."""
    spec = job.spec
    old = job.old_schema
    arr = job.old_array
    if job.new_array is not None and job.new_array.covers(rec.rid):
        # cheap staleness pre-check: the scan (or an earlier replay) may
        # already have installed something at least as fresh beneath the
        # migration boundary (admitted-era versions do not count)
        head = job.new_array.head(rec.rid)
        for v in (head.chain() if head is not None else ()):
            if not v.is_committed:
                continue
            if job.t_pre is not None and v.commit_ts > job.t_pre:
                continue
            if v.commit_ts >= rec.commit_ts:
                return
            break
    source = None
    if arr.covers(rec.rid):
        head = arr.head(rec.rid)
        for v in (head.chain() if head is not None else ()):
            if v.is_committed:
                if v.commit_ts == rec.commit_ts:
                    source = v
                    break
                if v.commit_ts < rec.commit_ts:
                    break
    if source is None:
        return
    if spec.kind is DdlOp.CREATE_INDEX:
        key_positions = tuple(old.col_index(c) for c in spec.index_cols)
        if source.is_tombstone:
            prior = next((v for v in source.chain()
                          if v.is_committed and not v.is_tombstone
                          and v.commit_ts < source.commit_ts), None)
            if prior is not None:
                key = encode_key(tuple(prior.payload[i] for i in key_positions))
                job.index_builder.apply(key, source.commit_ts, rec.rid, False)
            return
        key = encode_key(tuple(source.payload[i] for i in key_positions))
        err = job.index_builder.apply(key, source.commit_ts, rec.rid, True)
        if err:
            job.fail("incompatible_data")
        job.cdc_installs += 1
        return
    if job.out_tables:
        if source.is_tombstone:
            for handle in job.out_tables:
                core_store.install_migrated(handle.live_array, rec.rid,
                                            TOMBSTONE, source.commit_ts)
        elif not _emit_out_rows(job, rec.rid, source, ctx):
            job.fail("incompatible_data")
        job.cdc_installs += 1
        return
    new_schema = job.pending_schema
    if source.is_tombstone:
        payload = TOMBSTONE
    else:
        payload = transform_record(source.payload, old, new_schema, spec, ctx)
        if payload is INCOMPATIBLE:
            job.fail("incompatible_data")
            return
        if spec.constraints and new_schema is not None and \
                not verify_record(payload, new_schema, spec.constraints, ctx):
            job.fail("incompatible_data")
            return
    if job.new_array is not None:
        if core_store.install_migrated(job.new_array, rec.rid, payload,
                                       source.commit_ts, newer_than=job.t_pre):
            job.cdc_installs += 1


def _drain_inline(job: DdlJob, ctx: LookupContext, tail: int) -> None:
    """Consume any log remainder inside the finalize critical section
    (index builds and new-table kinds publish an up-to-the-tail state)."""
    pos = min(job_worker_pos(job), default=job.cdc_start_lsn)
    engine = job.engine
    while pos < tail:
        rec = engine.log.record(pos)
        pos += 1
        if rec.table_id != job.table.table_id:
            continue
        _replay_record(job, rec, ctx)
        if job.failed:
            return


def _sync_out_tables(job: DdlJob) -> None:
    """Output tables mirror the source's RID space; align their
    allocators and logical sizes at publication."""
    if not job.out_tables or job.table is None:
        return
    bound = job.table.next_rid
    for handle in job.out_tables:
        handle.live_array.ensure(max(bound - 1, 0))
        if bound > handle.live_array.logical_size:
            handle.live_array.logical_size = bound
        with handle._alloc_lock:
            if bound > handle._next_rid:
                handle._next_rid = bound


def _emit_schema_commit(job: DdlJob, schema: Optional[SchemaVersion],
                        commit_ts: Optional[int]) -> None:
    engine = job.engine
    if engine.trace is None:
        return
    if schema is not None:
        engine.trace.emit(verifier.SCHEMA_COMMIT, table=schema.table_id,
                          ts=commit_ts, schema_version=schema.version_no,
                          ncols=schema.ncols)
    for out in job.out_schemas:
        engine.trace.emit(verifier.SCHEMA_INIT, table=out.table_id,
                          ts=commit_ts, schema_version=out.version_no,
                          ncols=out.ncols)


# -- text form ----------------------------------------------------------------


_KIND_TOKENS = {op.value: op for op in DdlOp}


def parse_ddl_spec(text: str) -> tuple[DdlSpec, Policy, int, int]:
    """Parse the line-oriented DDL form, e.g.::

        ddl add_column table=ycsb col=c4:int64 default=0 policy=relaxed \
            scan_threads=3 cdc_threads=5
    """
    parts = text.split()
    if parts and parts[0] == "ddl":
        parts = parts[1:]
    if not parts or parts[0] not in _KIND_TOKENS:
        raise ValueError(f"unknown ddl operation in {text!r}")
    kind = _KIND_TOKENS[parts[0]]
    kv: dict[str, str] = {}
    for part in parts[1:]:
        key, _, val = part.partition("=")
        kv[key] = val
    spec = DdlSpec(kind=kind, table=kv.get("table", ""))
    if "col" in kv:
        name, _, dtype = kv["col"].partition(":")
        dt = DType(dtype or "int64")
        default: Any = kv.get("default")
        if default is not None:
            default = float(default) if dt is DType.FLOAT64 else (
                int(default) if dt is DType.INT64 else default)
        spec.column = ColumnDef(name, dt, default=default)
    if "drop" in kv:
        spec.drop_column = kv["drop"]
    if "constraint" in kv:
        spec.constraints = (parse_constraint(kv["constraint"]),)
    if "index_cols" in kv:
        spec.index_cols = tuple(kv["index_cols"].split(","))
    policy = Policy(kv.get("policy", "relaxed"))
    return (spec, policy, int(kv.get("scan_threads", 1)),
            int(kv.get("cdc_threads", 1)))


def parse_constraint(text: str) -> ConstraintDef:
    """Parse ``col<100``-style column-vs-constant forms and
    ``notnull:col``."""
    if text.startswith("notnull:"):
        return ConstraintDef(ConstraintKind.NOT_NULL, column=text[8:])
    for op in ("<=", ">=", "==", "!=", "<", ">"):
        if op in text:
            col, _, raw = text.partition(op)
            const: Any = float(raw) if "." in raw else int(raw)
            return ConstraintDef(ConstraintKind.COLUMN_VS_CONST, column=col,
                                 op=op, const=const)
    raise ValueError(f"cannot parse constraint {text!r}")
