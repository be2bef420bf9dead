from config.settings import settings
from config.recipes import RECIPES, recipe
from config.loader import dump_config, load_config, parse_override

__all__ = [
    "settings",
    "RECIPES",
    "recipe",
    "dump_config",
    "load_config",
    "parse_override"
]
