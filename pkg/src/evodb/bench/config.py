"""Benchmark configuration.

Desk-scale defaults; the paper-scale parameters (1e8 rows, tens of
threads) are reachable through the same knobs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional


@dataclass
class WorkloadConfig:
    benchmark: str = "micro"            # micro | tpccd
    rows: int = 1_000_000               # micro preload size
    warehouses: int = 2
    dml_threads: int = 4
    ddl_threads: int = 2
    scan_threads: Optional[int] = None  # default split: ceil(3w/8) scan
    cdc_threads: Optional[int] = None
    ddl_op: str = ""                    # empty = NoDDL baseline
    ddl_start_sec: float = 2.0
    duration_sec: float = 10.0
    policy: str = "relaxed"
    read_ops: int = 2
    write_ops: int = 8
    interval_ms: int = 100
    seed: int = 42
    out: str = ""
    # deterministic single-thread mode: fixed txn budget per worker and a
    # txn-indexed DDL trigger instead of wall-clock scheduling
    txn_limit: int = 0
    ddl_after_txns: int = 0
    retry_aborts: bool = False
    # micro add_constraint threshold; None = seeded default that passes
    constraint_threshold: Optional[int] = None
    stop_after_ddl: bool = False
    dump_log: str = ""  # write a binary redo-log dump here (debugging)

    def worker_split(self) -> tuple[int, int]:
        if self.scan_threads is not None:
            return self.scan_threads, self.cdc_threads or 1
        scan = max(1, math.ceil(3 * self.ddl_threads / 8))
        return scan, max(1, self.ddl_threads - scan)


_BOOL_FIELDS = {"retry_aborts", "stop_after_ddl"}
_FLOAT_FIELDS = {"ddl_start_sec", "duration_sec"}
_STR_FIELDS = {"benchmark", "ddl_op", "policy", "out", "dump_log"}


def apply_kv(cfg: WorkloadConfig, key: str, value: str) -> None:
    names = {f.name for f in fields(WorkloadConfig)}
    if key not in names:
        raise ValueError(f"unknown config key {key!r}")
    if key in _BOOL_FIELDS:
        setattr(cfg, key, value.lower() in ("1", "true", "yes"))
    elif key in _FLOAT_FIELDS:
        setattr(cfg, key, float(value))
    elif key in _STR_FIELDS:
        setattr(cfg, key, value)
    else:
        setattr(cfg, key, int(value))


def load_config_file(path: str, cfg: Optional[WorkloadConfig] = None
                     ) -> tuple[WorkloadConfig, list[str]]:
    """key=value lines configure the workload; ``ddl ...`` lines are
    returned verbatim for the DDL-spec parser."""
    cfg = cfg or WorkloadConfig()
    ddl_lines: list[str] = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("ddl "):
                ddl_lines.append(line)
                continue
            key, _, value = line.partition("=")
            apply_kv(cfg, key.strip(), value.strip())
    return cfg, ddl_lines
