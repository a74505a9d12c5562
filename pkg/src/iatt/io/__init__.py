"""Configuration, checkpoints, metrics logging, and the play server."""

from .checkpoint import (
    load_checkpoint,
    load_iw,
    load_policy_bundle,
    load_score_net,
    save_checkpoint,
)
from .config import (
    EvalSettings,
    GFSettings,
    PlaySettings,
    RunConfig,
    ScenarioConfig,
    config_from_dict,
    config_to_dict,
    parse_config,
)
from .metrics import MetricsLogger
from .replay import replay_session, replay_session_file
from .server import (
    KEY_FORCES,
    PROTOCOL_VERSION,
    PlaySession,
    create_app,
    serve_play_session,
)

__all__ = [
    "load_checkpoint",
    "load_iw",
    "load_policy_bundle",
    "load_score_net",
    "save_checkpoint",
    "EvalSettings",
    "GFSettings",
    "PlaySettings",
    "RunConfig",
    "ScenarioConfig",
    "config_from_dict",
    "config_to_dict",
    "parse_config",
    "MetricsLogger",
    "replay_session",
    "replay_session_file",
    "KEY_FORCES",
    "PROTOCOL_VERSION",
    "PlaySession",
    "create_app",
    "serve_play_session",
]
