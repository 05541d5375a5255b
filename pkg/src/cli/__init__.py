from src.cli.config import RunConfig, load_model, load_run_config

__all__ = ["RunConfig", "load_model", "load_run_config"]
