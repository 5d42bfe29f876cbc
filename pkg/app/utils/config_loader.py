"""
Experiment config loading: JSON files, dotted-path overrides, validation and
the canonical digest recorded in run manifests.
"""

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

from pydantic import ValidationError

from app.core.errors import ConfigurationError
from schemas import RunConfig


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and compact separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(config: RunConfig) -> str:
    """SHA-256 of the canonical form of the validated config."""
    return hashlib.sha256(canonical_json(config.model_dump(mode="json")).encode("utf-8")).hexdigest()


def parse_override(assignment: str) -> Tuple[str, Any]:
    """
    Split ``physics.p=3`` into its path and value. Values are parsed as JSON
    when possible (numbers, booleans, lists, objects), otherwise kept as text.
    """
    if "=" not in assignment:
        raise ConfigurationError(f"override '{assignment}' is not of the form KEY=VALUE")
    key, raw_value = assignment.split("=", 1)
    key = key.strip()
    if not key or any(not part for part in key.split(".")):
        raise ConfigurationError(f"override '{assignment}' has an empty key segment")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    return key, value


def apply_overrides(raw: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply dotted-path overrides in order to a raw config tree (in place)."""
    for assignment in overrides:
        key, value = parse_override(assignment)
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = {}
                node[part] = child
            elif not isinstance(child, dict):
                raise ConfigurationError(f"override '{key}': '{part}' is not a section")
            node = child
        node[parts[-1]] = value
    return raw


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def validate_config(raw: Dict[str, Any], source: str = "<config>") -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"{source}: {_format_validation_error(e)}") from e


def read_raw_config(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return raw


def load_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """
    Load a config file (defaults only when ``path`` is None), apply overrides
    and validate.
    """
    raw = read_raw_config(path) if path is not None else {}
    apply_overrides(raw, overrides)
    return validate_config(raw, str(path) if path is not None else "<defaults>")


def load_config_dict(raw: Dict[str, Any], overrides: Iterable[str] = ()) -> RunConfig:
    """Same as load_config for an already parsed tree (left unmodified)."""
    tree = copy.deepcopy(raw)
    apply_overrides(tree, overrides)
    return validate_config(tree, "<request>")
