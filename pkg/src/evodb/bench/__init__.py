from .config import WorkloadConfig, load_config_file
from .series import ThroughputSeries, emit
from .micro import run_micro
from .tpcc import run_tpccd

__all__ = ["WorkloadConfig", "load_config_file", "ThroughputSeries", "emit",
           "run_micro", "run_tpccd"]
