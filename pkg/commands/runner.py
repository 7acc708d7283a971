# Command runner: shared context, error mapping, manifest
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from config import settings
from exceptions import SolscopeError, StorageError
from schemas import Manifest, RunConfig
from services.config_service import config_service
from services.run_service import run_service
from services.storage_service import storage_service
from utils.run_utils import config_hash, format_timestamp, package_versions

logger = logging.getLogger(__name__)


@dataclass
class CommandContext:
    name: str
    config: RunConfig
    out: Path
    trajectory: Optional[Path] = None


Handler = Callable[[CommandContext], None]


def execute(name: str, handler: Handler, config: RunConfig, out: Path,
            trajectory: Optional[Path] = None) -> int:
    """
    Run one command and record its manifest

    Parameters:
        name: command name as typed on the command line
        handler: command body; raises SolscopeError on failure
        config: validated run configuration
        out: run directory
        trajectory: stored trajectory to reuse (decompose, observables)

    Returns:
        Process exit code (0 on success)
    """
    out = Path(out)
    storage_service.reset()
    started_at = format_timestamp()
    start = time.perf_counter()
    canonical = config_service.serialize_config(config)
    exit_code = 0
    logger.info(f"🚀 {name}: writing to {out}")
    try:
        run_service.configure_scattering(config)
        storage_service.write_config_echo(out, canonical)
        handler(CommandContext(name=name, config=config, out=out, trajectory=trajectory))
    except SolscopeError as e:
        logger.error(f"❌ {name} failed: {e.message}")
        exit_code = e.exit_code

    manifest = Manifest(
        schema=settings.SCHEMA_MANIFEST,
        command=name,
        config_hash=config_hash(canonical),
        seed=config.seed,
        versions=package_versions(),
        wall_time_seconds=time.perf_counter() - start,
        started_at=started_at,
        files=list(storage_service.written),
        exit_code=exit_code,
    )
    try:
        storage_service.write_manifest(out, manifest)
    except StorageError as e:
        logger.error(f"❌ Manifest not written: {e.message}")
        exit_code = exit_code or e.exit_code
    if exit_code == 0:
        logger.info(f"✅ {name} finished in {manifest.wall_time_seconds:.1f} s")
    return exit_code
