from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from datetime import datetime
from contextlib import asynccontextmanager
from pathlib import Path
import logging
import tempfile
import json

from vortwave import __version__
from vortwave.config import get_settings
from vortwave.errors import ConfigError, InvariantFailure, VortwaveError
from vortwave.models import RunConfig
from vortwave.tasks import COMMANDS, dispersion_table

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

settings = get_settings()


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Startup and shutdown events"""
    logger.info(f"🚀 Starting vortwave API (threads={settings.VORTWAVE_THREADS})...")
    yield
    logger.info("🛑 Shutting down...")


app = FastAPI(
    title="vortwave API",
    description="Dirichlet-Neumann operators and water-wave checks with constant vorticity",
    version=__version__,
    lifespan=lifespan
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def _parse(body: dict) -> RunConfig:
    try:
        return RunConfig.parse(body)
    except ConfigError as e:
        raise HTTPException(status_code=422, detail={'success': False, 'error': str(e)})


@app.get("/")
async def root():
    """Root endpoint"""
    return {
        "message": "vortwave API",
        "version": __version__,
        "docs": "/docs",
        "health": "/api/health",
        "commands": sorted(COMMANDS)
    }


@app.get("/api/health")
async def health_check():
    """Health check endpoint"""
    return {
        "status": "healthy",
        "timestamp": datetime.utcnow().isoformat(),
        "version": __version__,
        "threads": settings.VORTWAVE_THREADS
    }


@app.post("/api/dispersion")
def dispersion(body: dict):
    """Closed-form and eigen-oracle dispersion table"""
    config = _parse(body)
    try:
        rows = dispersion_table(config)
    except VortwaveError as e:
        raise HTTPException(status_code=500, detail={'success': False, 'error': str(e)})
    return {'count': len(rows), 'rows': rows}


@app.post("/api/checks/{command}")
def run_check(command: str, body: dict):
    """Run one subcommand into a scratch directory and return its report"""
    if command not in COMMANDS:
        raise HTTPException(status_code=404, detail={'error': f"unknown command '{command}'", 'commands': sorted(COMMANDS)})
    config = _parse(body)
    start_time = datetime.utcnow()
    logger.info(f"🚀 {command} triggered over HTTP")

    with tempfile.TemporaryDirectory() as out_dir:
        try:
            COMMANDS[command](config, out_dir)
        except ConfigError as e:
            raise HTTPException(status_code=422, detail={'success': False, 'error': str(e)})
        except InvariantFailure:
            pass
        except VortwaveError as e:
            duration = (datetime.utcnow() - start_time).total_seconds()
            logger.error(f"❌ {command} failed after {duration:.1f}s: {e}")
            raise HTTPException(
                status_code=500,
                detail={
                    'success': False,
                    'error': str(e),
                    'execution_time': f"{duration:.1f}s"
                }
            )
        report = json.loads((Path(out_dir) / "report.json").read_text())

    duration = (datetime.utcnow() - start_time).total_seconds()
    logger.info(f"✅ {command} finished in {duration:.1f}s")
    return {
        'success': report['status'] == 'success',
        'execution_time': f"{duration:.1f}s",
        'report': report
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=settings.VORTWAVE_API_HOST, port=settings.VORTWAVE_API_PORT)
