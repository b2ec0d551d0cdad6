from .config import ConfigError, ExperimentConfig, default_study, load_config, parse_config
from .io import (load_checkpoint, load_episode, policy_from_checkpoint, save_checkpoint,
                 save_episode)
from .metrics import AggregateTable, AggregationError, LearningCurve, aggregate, normalize
from .plotting import emit_plot
from .run import RunError, RunResult, normalization_anchors, run_ppb, run_study, train
