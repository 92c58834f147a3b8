from .cli import main
from .config import ConfigError, ExperimentConfig, bundled_configs, load_config, loads
from .experiment import build_experiment, evaluate, run_training, train
from .metrics import JsonlSink, MetricLogError, MetricRecord, log_metric, read_metric_log

__all__ = ["ConfigError", "ExperimentConfig", "JsonlSink", "MetricLogError", "MetricRecord", "build_experiment",
           "bundled_configs", "evaluate", "load_config", "loads", "log_metric", "main", "read_metric_log",
           "run_training", "train"]
