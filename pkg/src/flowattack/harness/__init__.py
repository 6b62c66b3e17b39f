from .checkpoint import checkpoint_load, checkpoint_save
from .cli import cli_dispatch, main
from .config import RunConfig, load_config, parse_config
from .images import dump_images, read_pgm, write_pgm
from .report import build_report, emit_report, load_report

__all__ = [
    "RunConfig", "build_report", "checkpoint_load", "checkpoint_save", "cli_dispatch",
    "dump_images", "emit_report", "load_config", "load_report", "main", "parse_config", "read_pgm",
    "write_pgm",
]
