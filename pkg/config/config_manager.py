"""
Central configuration management for the simulator.

Defaults are loaded from every YAML file in `config/defaults`, a named scenario
from `config/scenarios` is merged on top, then an optional user file and
finally explicit overrides (CLI flags). Later layers win.
"""

import os
import yaml
import logging
import glob
from typing import Dict, Any, Optional, Mapping
from copy import deepcopy

logger = logging.getLogger(__name__)


def _deep_merge(source: Dict[str, Any], destination: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge source dict into destination dict."""
    for key, value in source.items():
        if isinstance(value, dict):
            node = destination.setdefault(key, {})
            if not isinstance(node, dict):
                node = destination[key] = {}
            _deep_merge(value, node)
        else:
            destination[key] = value
    return destination


def expand_dotted_keys(flat: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Turn a flat key-value mapping with dotted keys into a nested dictionary.

    `{"sim.peer.cache_capacity": 10}` becomes
    `{"sim": {"peer": {"cache_capacity": 10}}}`. Nested values pass through.
    """
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        parts = str(key).split(".")
        node = nested
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        if isinstance(value, dict):
            value = expand_dotted_keys(value)
        if isinstance(value, dict) and isinstance(node.get(parts[-1]), dict):
            _deep_merge(value, node[parts[-1]])
        else:
            node[parts[-1]] = value
    return nested


class ConfigurationManager:
    """
    Manages experiment configuration by loading defaults and merging scenarios.

    Loads base configuration from YAML files in the defaults directory
    and allows merging specific scenario configurations, user files and
    overrides on top.
    """

    BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    CONFIG_DIR = os.path.join(BASE_DIR, "config")
    SCENARIOS_DIR = os.path.join(CONFIG_DIR, "scenarios")
    DEFAULTS_DIR = os.path.join(CONFIG_DIR, "defaults")

    def __init__(self, defaults_dir: Optional[str] = None, scenarios_dir: Optional[str] = None):
        """Initializes the ConfigurationManager by loading base defaults."""
        self.defaults_dir = defaults_dir or self.DEFAULTS_DIR
        self.scenarios_dir = scenarios_dir or self.SCENARIOS_DIR
        self.base_config: Dict[str, Any] = self._load_base_defaults()

    def _load_base_defaults(self) -> Dict[str, Any]:
        """Loads and merges all YAML files from the defaults directory."""
        base_config: Dict[str, Any] = {}
        default_files = sorted(glob.glob(os.path.join(self.defaults_dir, "*.yaml")))

        if not default_files:
            logger.warning(f"No default configuration files found in {self.defaults_dir}")
            return {}

        for file_path in default_files:
            logger.debug(f"Loading default config file: {file_path}")
            config_data = self.load_config_file(file_path)
            if config_data:
                base_config = _deep_merge(config_data, base_config)
            else:
                logger.warning(f"Failed to load or empty config file: {file_path}")

        logger.debug(f"Loaded {len(default_files)} default config files.")
        return base_config

    def scenario_path(self, scenario: str) -> str:
        """Resolve a scenario name ('indoor') or path to a YAML file path."""
        if os.path.isabs(scenario) or os.path.exists(scenario):
            return scenario
        file_name = scenario if scenario.endswith(".yaml") else f"{scenario}.yaml"
        return os.path.join(self.scenarios_dir, file_name)

    def get_config(self,
                   scenario: Optional[str] = None,
                   user_config_path: Optional[str] = None,
                   overrides: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
        """
        Build the merged configuration dictionary.

        Args:
            scenario: Scenario name or path merged onto the defaults.
            user_config_path: Optional user YAML file (flat dotted keys or nested).
            overrides: Final overrides, typically from CLI flags (dotted keys allowed).

        Returns:
            A dictionary containing the merged configuration.

        Raises:
            FileNotFoundError: If the scenario or user file does not exist.
            ValueError: If a file cannot be parsed.
        """
        final_config = deepcopy(self.base_config)

        if scenario is not None:
            path = self.scenario_path(scenario)
            scenario_data = self._load_required(path, "scenario")
            final_config = _deep_merge(expand_dotted_keys(scenario_data), final_config)
            logger.info(f"Merged scenario: {path}")

        if user_config_path is not None:
            user_data = self._load_required(user_config_path, "user config")
            final_config = _deep_merge(expand_dotted_keys(user_data), final_config)
            logger.info(f"Merged user config: {user_config_path}")

        if overrides:
            final_config = _deep_merge(expand_dotted_keys(overrides), final_config)
            logger.debug(f"Applied {len(overrides)} override(s)")

        return final_config

    def _load_required(self, path: str, kind: str) -> Dict[str, Any]:
        if not os.path.exists(path):
            logger.error(f"{kind.capitalize()} file not found: {path}")
            raise FileNotFoundError(f"{kind.capitalize()} file not found: {path}")
        data = self.load_config_file(path)
        if data is None:
            raise ValueError(f"Could not parse {kind} file: {path}")
        if not isinstance(data, dict):
            raise ValueError(f"{kind.capitalize()} file must contain a key-value mapping: {path}")
        return data

    def load_config_file(self, file_path: str) -> Optional[Dict[str, Any]]:
        """
        Load a configuration file (YAML) and return its contents.

        Args:
            file_path: Path to the configuration file

        Returns:
            Dictionary containing the configuration data or None if error
        """
        try:
            if not os.path.exists(file_path):
                logger.error(f"Configuration file not found: {file_path}")
                return None

            with open(file_path, 'r') as f:
                config_data = yaml.safe_load(f)

            if config_data is None:
                logger.warning(f"Configuration file is empty: {file_path}")
                return {}

            return config_data

        except yaml.YAMLError as e:
            logger.error(f"Error parsing YAML file {file_path}: {e}")
            return None

    def get_available_scenarios(self) -> Dict[str, str]:
        """
        Get the available scenario files.

        Returns:
            Dictionary mapping scenario names (the `name` field or file stem) to file paths
        """
        scenarios: Dict[str, str] = {}
        if not os.path.exists(self.scenarios_dir):
            logger.warning(f"Scenarios directory not found: {self.scenarios_dir}")
            return scenarios

        for file_name in sorted(os.listdir(self.scenarios_dir)):
            if not file_name.endswith('.yaml'):
                continue
            file_path = os.path.join(self.scenarios_dir, file_name)
            scenario_data = self.load_config_file(file_path)
            if scenario_data is None:
                continue
            name = scenario_data.get('name') or os.path.splitext(file_name)[0]
            if name in scenarios:
                logger.warning(f"Duplicate scenario name '{name}' in {file_name}; keeping {os.path.basename(scenarios[name])}")
                continue
            scenarios[name] = file_path
        return scenarios
