"""
Configuration manager for twoport_fit.

Settings come from the packaged ``default_config.ini``, overlaid by an optional
user file. Values may reference environment variables with the
``${VAR:-default}`` syntax; a ``.env`` file in the working directory is loaded
first so those variables can live next to the project.
"""
import os
import re
import logging
import configparser
from typing import Dict, Optional

from dotenv import load_dotenv


DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(__file__), 'default_config.ini')

_ENV_PATTERN = re.compile(r'\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}')


def _expand_env(value: str) -> str:
    """
    Replace ``${VAR}`` and ``${VAR:-default}`` references with environment values.

    Args:
        value: Raw configuration value.

    Returns:
        The value with every reference substituted.
    """
    def replace(match: 're.Match[str]') -> str:
        name, default = match.group(1), match.group(2)
        env_value = os.environ.get(name)
        if env_value:
            return env_value
        return default if default is not None else ''

    return _ENV_PATTERN.sub(replace, value)


class ConfigManager:
    """
    Class to read and query twoport_fit settings.
    """
    def __init__(self, config_file: Optional[str] = None):
        """
        Initialize the configuration manager.

        Args:
            config_file: Path to a user configuration file. Keys it defines
                override the packaged defaults.
        """
        load_dotenv()
        self.logger = logging.getLogger('ConfigManager')
        self.config_file = config_file

        self.parser = configparser.ConfigParser(interpolation=None)
        self.parser.read(DEFAULT_CONFIG_PATH, encoding='utf-8')

        if config_file:
            if os.path.exists(config_file):
                self.parser.read(config_file, encoding='utf-8')
                self.logger.debug(f"Loaded configuration from {config_file}")
            else:
                self.logger.warning(f"Configuration file {config_file} not found, using defaults")

    def get(self, section: str, key: str, fallback: Optional[str] = None) -> Optional[str]:
        """
        Get a configuration value with environment references expanded.

        Args:
            section: Section name.
            key: Key inside the section.
            fallback: Value returned when the key is missing.

        Returns:
            The expanded string value, or the fallback.
        """
        raw = self.parser.get(section, key, fallback=None)
        if raw is None:
            return fallback
        return _expand_env(raw).strip()

    def getint(self, section: str, key: str, fallback: int = 0) -> int:
        value = self.get(section, key)
        return int(value) if value else fallback

    def getfloat(self, section: str, key: str, fallback: float = 0.0) -> float:
        value = self.get(section, key)
        return float(value) if value else fallback

    def getboolean(self, section: str, key: str, fallback: bool = False) -> bool:
        value = self.get(section, key)
        if not value:
            return fallback
        return value.lower() in ('1', 'true', 'yes', 'on')

    def get_section(self, section: str) -> Dict[str, str]:
        """
        Get all values in a section.

        Args:
            section: Section name.

        Returns:
            Dictionary of expanded values; empty if the section does not exist.
        """
        if not self.parser.has_section(section):
            return {}
        return {key: _expand_env(value).strip() for key, value in self.parser.items(section)}

    def set(self, section: str, key: str, value: str) -> None:
        """
        Override a value for the lifetime of this manager.

        Args:
            section: Section name, created if missing.
            key: Key inside the section.
            value: New value.
        """
        if not self.parser.has_section(section):
            self.parser.add_section(section)
        self.parser.set(section, key, str(value))
