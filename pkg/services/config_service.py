# Config Service
import copy
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from exceptions import ConfigParseError, ConfigValidationError, StorageError
from schemas import RunConfig
from utils.config_utils import parse_flat_document, serialize_flat_document

logger = logging.getLogger(__name__)

# Top-level scalars live under this section in flat documents
RUN_SECTION = "run"


def _describe(error: Dict[str, Any]) -> str:
    location = ".".join(str(part) for part in error.get("loc", ()))
    if location.startswith(f"{RUN_SECTION}."):
        location = location[len(RUN_SECTION) + 1:]
    return f"{location}: {error.get('msg', 'invalid value')}" if location else error.get("msg", "invalid value")


def _drop(nested: Dict[str, Any], loc: Sequence[Any]) -> bool:
    """Remove the raw entry behind a pydantic error location; False when it cannot be found"""
    loc = list(loc)
    if len(loc) >= 4 and loc[:2] == ["nonlinearity", "terms"] and isinstance(loc[2], int):
        # terms are rebuilt from per-id sub-sections before validation
        block = nested.get("nonlinearity")
        names = block.get("terms") if isinstance(block, dict) else None
        names = names if isinstance(names, list) else [names]
        if block is None or loc[2] >= len(names):
            return False
        loc = ["nonlinearity", str(names[loc[2]])] + loc[3:]
    node = nested
    for part in loc[:-1]:
        if not isinstance(node, dict) or part not in node:
            return False
        node = node[part]
    if not isinstance(node, dict) or loc[-1] not in node:
        return False
    del node[loc[-1]]
    return True


class ConfigService:
    """Flat run documents to validated RunConfig and back"""

    def _nest(self, flat: Dict[str, Any]) -> Dict[str, Any]:
        nested = dict(flat)
        run_block = nested.pop(RUN_SECTION, {})
        if isinstance(run_block, dict):
            nested.update(run_block)
        return nested

    def _remaining_config(self, nested: Dict[str, Any], error: ValidationError) -> Optional[RunConfig]:
        """
        The document with every rejected entry removed, so cross-field rules
        can still run on what is left

        Rejected entries fall back to their defaults. Returns None when the
        rejected entries cannot be isolated.
        """
        remaining = copy.deepcopy(nested)
        for _ in range(3):
            if not all(_drop(remaining, e.get("loc", ())) for e in error.errors()):
                return None
            try:
                return RunConfig.model_validate(remaining)
            except ValidationError as again:
                error = again
        return None

    def parse_config(self, text: str) -> RunConfig:
        """
        Parse and validate a run document

        Args:
            text: "section.key = value" lines; comma lists for arrays

        Returns:
            Validated RunConfig

        Raises:
            ConfigParseError: malformed line (with line and column)
            ConfigValidationError: every failed field and cross-field rule
        """
        flat, _ = parse_flat_document(text)
        unknown = [key for key, value in flat.get(RUN_SECTION, {}).items() if key != "seed"] \
            if isinstance(flat.get(RUN_SECTION), dict) else []
        violations: List[str] = [f"{RUN_SECTION}.{key}: unknown key" for key in unknown]
        nested = self._nest(flat)
        try:
            config = RunConfig.model_validate(nested)
        except ValidationError as e:
            violations.extend(_describe(error) for error in e.errors())
            remaining = self._remaining_config(nested, e)
            if remaining is not None:
                violations.extend(remaining.cross_field_violations())
            else:
                logger.debug("Cross-field rules skipped: rejected entries could not be isolated")
            logger.error(f"❌ Config rejected with {len(violations)} violation(s)")
            raise ConfigValidationError(violations)
        violations.extend(config.cross_field_violations())
        if violations:
            logger.error(f"❌ Config rejected with {len(violations)} violation(s)")
            raise ConfigValidationError(violations)
        logger.debug(f"✅ Config parsed: n = {config.grid.n}, N = {config.grid.N}, seed = {config.seed}")
        return config

    def serialize_config(self, config: RunConfig) -> str:
        """Canonical echo: sorted keys, 17-digit floats, defaults included"""
        data = config.to_flat_dict()
        data[RUN_SECTION] = {"seed": data.pop("seed")}
        return serialize_flat_document(data)

    def load_config(self, path: Path) -> RunConfig:
        try:
            raw = Path(path).read_bytes()
        except OSError as e:
            raise StorageError(f"cannot read config {path}: {e}")
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            line = raw[:e.start].count(b"\n") + 1
            column = e.start - (raw.rfind(b"\n", 0, e.start) + 1) + 1
            raise ConfigParseError(f"config {path} is not valid UTF-8", line=line, column=column)
        logger.info(f"📄 Loading config {path}")
        return self.parse_config(text)


config_service = ConfigService()
