"""
Plain-text run configuration: a TOML file validated into TrainConfig, with
`--set dotted.key=value` overrides applied on top.

A top-level `recipe = "<name>"` key starts from a named recipe; every other
key overrides it. Lists (such as [[stages]]) replace the recipe's list.
"""
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

from pydantic import ValidationError

from config.recipes import recipe
from models.config import TrainConfig
from utils.errors import ArtifactNotFoundError, ConfigError


def parse_override(item: str) -> Tuple[str, Any]:
    """'a.b=value' -> ('a.b', value); the value is read as a TOML literal, else kept as a string."""
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override '{item}' is not of the form key=value", key=key or item)
    raw = raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def set_dotted(tree: Dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    node = tree
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"'{part}' is not a table", key=key)
        node = child
    node[parts[-1]] = value


def merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


def validate_tree(tree: Dict[str, Any]) -> TrainConfig:
    try:
        return TrainConfig.model_validate(tree)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigError(first["msg"], key=key) from exc


def read_toml(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ArtifactNotFoundError(str(path), what="config file")
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", key="<file>") from exc


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Iterable[str] = (),
    recipe_name: Optional[str] = None,
) -> TrainConfig:
    """File (optional) + recipe (optional) + overrides -> validated TrainConfig."""
    tree = read_toml(path) if path is not None else {}
    name = tree.pop("recipe", None) or recipe_name
    base = recipe(name).model_dump(mode="json", by_alias=True) if name else {}
    tree = merge(base, tree)
    for item in overrides:
        key, value = parse_override(item)
        if key == "recipe":
            raise ConfigError("the recipe cannot be changed by an override", key=key)
        set_dotted(tree, key, value)
    return validate_tree(tree)


def dump_config(cfg: TrainConfig) -> Dict[str, Any]:
    """JSON-ready snapshot whose keys round-trip through load_config."""
    return cfg.model_dump(mode="json", by_alias=True)
