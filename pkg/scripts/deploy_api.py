import logging
import sys
from pathlib import Path

# Add the project root to Python path
project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

import click
import uvicorn

from src.api.main import create_app
from src.config import API_HOST, API_PORT, Config
from src.harness import scenario
from src.harness.pipeline import Pipeline
from src.utils.helpers import setup_logging

logger = logging.getLogger(__name__)


@click.command()
@click.option("--config", "config_path", default="default", show_default=True)
@click.option("--host", default=API_HOST, show_default=True)
@click.option("--port", default=API_PORT, show_default=True, type=int)
def main(config_path: str, host: str, port: int):
    """Run the scenario pipeline, then serve its chain and store over HTTP."""
    setup_logging(Config.LOG_LEVEL, Config.LOG_JSON)
    config = scenario.load(config_path)
    platform = Pipeline(config, out_dir=Config.DATA_DIR / "runs" / config.name)
    platform.run()
    logger.info(f"Serving scenario '{config.name}' on http://{host}:{port}")
    uvicorn.run(create_app(platform), host=host, port=port)


if __name__ == "__main__":
    main()
