"""
Entry point: `python run.py <subcommand> ...` for the command line,
`python run.py serve` for the HTTP API.
"""
import sys

import uvicorn

from vortwave.cli import configure_logging, main
from vortwave.config import get_settings

if __name__ == "__main__":
    if sys.argv[1:2] == ["serve"]:
        settings = get_settings()
        uvicorn.run(
            "vortwave.main:app",
            host=settings.VORTWAVE_API_HOST,
            port=settings.VORTWAVE_API_PORT,
            reload=True,
            log_level="info"
        )
    else:
        configure_logging()
        sys.exit(main())
