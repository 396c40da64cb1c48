import configparser
import os
from typing import Dict, List, Optional

from src.core.exceptions import ConfigError, FileOperationError


class ConfigStore:
    """Store and retrieve run configuration as an INI file with one section per concern"""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file
        self.config = self._load_config()

    def _load_config(self) -> configparser.ConfigParser:
        """Load configuration from file"""
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        if not self.config_file:
            return parser
        if not os.path.exists(self.config_file):
            raise ConfigError(f"Config file not found: {self.config_file}")
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                parser.read_file(f)
        except configparser.Error as e:
            raise ConfigError(f"Malformed config file {self.config_file}: {e}")
        return parser

    def save(self, path: Optional[str] = None) -> str:
        """Write the configuration out, by default back to where it came from"""
        target = path or self.config_file
        if not target:
            raise ConfigError("No config file to save to")
        try:
            directory = os.path.dirname(target)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(target, 'w', encoding='utf-8') as f:
                self.config.write(f)
        except OSError as e:
            raise FileOperationError(f"Failed to save configuration: {str(e)}")
        return target

    def sections(self) -> List[str]:
        return self.config.sections()

    def get_section(self, section: str) -> Dict[str, str]:
        """Get a configuration section"""
        if not self.config.has_section(section):
            return {}
        return dict(self.config.items(section))

    def set_section(self, section: str, values: Dict[str, object]) -> None:
        """Replace a configuration section"""
        if self.config.has_section(section):
            self.config.remove_section(section)
        self.config.add_section(section)
        for key, value in values.items():
            self.config.set(section, key, str(value))
