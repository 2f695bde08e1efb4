# Standard library imports
import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

# Third-party imports
import numpy as np
from pydantic import (
    BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
)
import yaml

# Application-specific imports
from config.constants import (
    DEFAULT_SLOT_LENGTH_S, MAPPING_SCHEMES, MIGRATION_NORMALIZATION_MODES,
    STRATEGY_IDS
)
from utils.conversions import slots_per_week
from config.config_manager import ConfigurationManager
from .errors import ConfigurationError
from .validators import (
    validate_choice, validate_in_range, validate_non_negative, validate_nonempty_range, validate_positive
)

logger = logging.getLogger(__name__)


# --- Component Models ---

class PeerParams(BaseModel):
    """Per-user replication resources: cache capacity B_u and upload capacity beta_u."""
    cache_capacity: int = Field(20, description="Replication capacity B_u in content items", ge=0)
    upload_capacity: int = Field(5, description="Upload capacity beta_u in uploads per slot", ge=0)
    cache_overrides: Dict[int, int] = Field(default_factory=dict, description="Per-user B_u overrides keyed by user id")
    upload_overrides: Dict[int, int] = Field(default_factory=dict, description="Per-user beta_u overrides keyed by user id")

    @field_validator('cache_overrides', 'upload_overrides')
    @classmethod
    def check_overrides_non_negative(cls, v: Dict[int, int]) -> Dict[int, int]:
        for user, value in v.items():
            validate_non_negative(value, f"override for user {user}")
        return v

    def cache_capacities(self, n_users: int) -> np.ndarray:
        """B_u for users 0..n_users-1."""
        capacities = np.full(n_users, self.cache_capacity, dtype=np.int64)
        for user, value in self.cache_overrides.items():
            if 0 <= user < n_users:
                capacities[user] = value
        return capacities

    def upload_capacities(self, n_users: int) -> np.ndarray:
        """beta_u for users 0..n_users-1."""
        capacities = np.full(n_users, self.upload_capacity, dtype=np.int64)
        for user, value in self.upload_overrides.items():
            if 0 <= user < n_users:
                capacities[user] = value
        return capacities


class SynthConfig(BaseModel):
    """Parameters of the synthetic social and mobility trace generators."""
    scenario: Literal["indoor", "outdoor"] = Field("indoor", description="Region layout preset")
    n_users: int = Field(1000, description="Number of users", ge=1)
    n_regions: int = Field(40, description="Number of edge-network regions", ge=1)
    avg_degree: float = Field(40.0, description="Mean number of social connections per user", gt=0)
    lambda_p_range: Tuple[float, float] = Field((0.001, 0.02), description="Range of per-user posting rates per slot")
    propagation_intensity: float = Field(1.0, description="Multiplier applied to lambda_p_range", ge=0)
    reshare_mean_latency_s: float = Field(36000.0, description="Mean reshare latency in seconds", gt=0)
    zipf_exponent_regions: float = Field(1.0, description="Zipf exponent of region base popularity")
    powerlaw_exponent_edges: float = Field(2.0, description="Power-law exponent of per-edge reshare probabilities")
    powerlaw_exponent_migration: float = Field(2.0, description="Power-law exponent of region-pair affinities")
    edge_prob_span: float = Field(100.0, description="Upper end of the bounded power law before renormalisation to [0,1]", gt=1)
    crowdedness_range: Tuple[float, float] = Field((0.0, 15.0), description="Allowed mean users per region")
    crowdedness: Optional[float] = Field(None, description="Target mean users per region (defaults to range midpoint)")
    horizon_slots: int = Field(500, description="Number of simulated slots", ge=1)
    slot_length_s: float = Field(DEFAULT_SLOT_LENGTH_S, description="Slot length in seconds")
    association_mean_s: float = Field(240.0, description="Mean association duration in seconds", gt=0)
    session_mean_s: float = Field(7200.0, description="Mean online session length in seconds", gt=0)
    favored_regions: Tuple[int, int] = Field((3, 8), description="Range of favored-region counts per user")
    explore_prob: float = Field(0.1, description="Probability of a move outside the favored regions", ge=0, le=1)
    stay_prob: float = Field(0.3, description="Probability that a new association stays in the same region", ge=0, le=1)
    seed: int = Field(1, description="Random seed", ge=0)

    @field_validator('lambda_p_range', 'crowdedness_range')
    @classmethod
    def check_ranges(cls, v, info):
        low, high = validate_nonempty_range(v, info.field_name)
        if low < 0:
            raise ValueError(f"{info.field_name} must be non-negative")
        return low, high

    @field_validator('favored_regions')
    @classmethod
    def check_favored(cls, v):
        low, high = validate_nonempty_range(v, 'favored_regions')
        if low < 1:
            raise ValueError("favored_regions must start at 1 or more")
        return int(low), int(high)

    @field_validator('zipf_exponent_regions', 'powerlaw_exponent_edges', 'powerlaw_exponent_migration', 'slot_length_s')
    @classmethod
    def check_positive(cls, v, info):
        return validate_positive(v, info.field_name)

    @model_validator(mode='after')
    def check_crowdedness_target(self) -> 'SynthConfig':
        if self.crowdedness is not None:
            low, high = self.crowdedness_range
            validate_in_range(self.crowdedness, 'crowdedness', low, high)
        return self

    @property
    def effective_lambda_range(self) -> Tuple[float, float]:
        low, high = self.lambda_p_range
        return low * self.propagation_intensity, high * self.propagation_intensity

    @property
    def target_crowdedness(self) -> float:
        if self.crowdedness is not None:
            return self.crowdedness
        low, high = self.crowdedness_range
        return (low + high) / 2.0

    @property
    def horizon_s(self) -> float:
        return self.horizon_slots * self.slot_length_s


class SimConfig(BaseModel):
    """Parameters of one simulation run."""
    slot_length_s: float = Field(DEFAULT_SLOT_LENGTH_S, description="Slot length in seconds")
    horizon_slots: Optional[int] = Field(None, description="Slots to simulate (defaults to the trace horizon)", ge=1)
    request_deadline_s: Optional[float] = Field(None, description="Delay budget of a request (defaults to one slot)", ge=0)
    server_latency_s: float = Field(1.0, description="Latency of a server download", ge=0)
    strategy: str = Field("proposed", description="Replication strategy id")
    peer: PeerParams = Field(default_factory=PeerParams)
    alpha: Union[float, str] = Field("learned", description="'learned' or a fixed value in [0,1]")
    migration_norm: str = Field("paper_column", description="Normalisation of the migration index")
    influence_window_slots: Optional[int] = Field(None, description="Window W of the influence index (None = full history)", ge=1)
    preference_window_slots: Optional[int] = Field(None, description="Window W' of the regional preference (None = one week)", ge=1)
    active_content_window_slots: int = Field(288, description="Slots a shared content stays a replication candidate", ge=1)
    retain_zero_gain_replicas: bool = Field(True, description="Keep previously held zero-gain items while room remains")
    social_candidates_only: bool = Field(True, description="Only contents with a positive social term are replication candidates")
    movement_copies: int = Field(3, description="Carriers requested per content by the movement baseline", ge=1)
    popularity_offers: int = Field(1, description="Offers per holder per slot in the popularity baseline", ge=0)
    top_content_fraction: float = Field(1.0, description="Fraction of most requested contents handled by D2D", gt=0, le=1)
    audit_directory: bool = Field(True, description="Check coordinator directory against caches every slot")
    dump_tables: bool = Field(False, description="Write per-slot model tables for diagnostics")
    dump_table_slots: List[int] = Field(default_factory=list, description="Slots to dump (empty = last slot only)")
    seed: int = Field(1, description="Random seed", ge=0)

    @field_validator('strategy')
    @classmethod
    def check_strategy(cls, v: str) -> str:
        return validate_choice(v, 'strategy', STRATEGY_IDS)

    @field_validator('migration_norm')
    @classmethod
    def check_migration_norm(cls, v: str) -> str:
        return validate_choice(v, 'migration_norm', MIGRATION_NORMALIZATION_MODES)

    @field_validator('slot_length_s')
    @classmethod
    def check_slot_length(cls, v: float) -> float:
        return validate_positive(v, 'slot_length_s')

    @field_validator('alpha', mode='before')
    @classmethod
    def check_alpha(cls, v):
        if isinstance(v, str):
            if v.strip().lower() == "learned":
                return "learned"
            try:
                v = float(v)
            except ValueError:
                raise ValueError("alpha must be 'learned' or a number in [0, 1]")
        return validate_in_range(float(v), 'alpha', 0.0, 1.0)

    @model_validator(mode='after')
    def check_latency_within_deadline(self) -> 'SimConfig':
        if self.server_latency_s > self.deadline_s:
            raise ValueError(f"server_latency_s ({self.server_latency_s}) must not exceed request_deadline_s ({self.deadline_s})")
        return self

    @property
    def deadline_s(self) -> float:
        return self.slot_length_s if self.request_deadline_s is None else self.request_deadline_s

    @property
    def alpha_is_learned(self) -> bool:
        return self.alpha == "learned"

    @property
    def preference_window(self) -> int:
        if self.preference_window_slots is not None:
            return self.preference_window_slots
        return slots_per_week(self.slot_length_s)


class SweepConfig(BaseModel):
    seeds: List[int] = Field(default_factory=lambda: [1], description="Seeds run for every sweep point")
    jobs: int = Field(1, description="Parallel sweep points", ge=1)
    long_format: bool = Field(True, description="Also write the whitespace-separated long format")

    @field_validator('seeds')
    @classmethod
    def check_seeds(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("seeds must not be empty")
        if any(s < 0 for s in v):
            raise ValueError("seeds must be non-negative")
        return v

# --- End Component Models ---


class ExperimentConfig(BaseModel):
    """A complete, validated experiment: trace synthesis, user mapping and simulation."""

    name: str = Field(default="indoor", description="Scenario name")
    description: Optional[str] = Field(None, description="Optional description")
    seed: int = Field(1, description="Master seed copied into synth and sim", ge=0)
    mapping: str = Field("independent", description="Social-to-mobility user mapping scheme")
    synth: SynthConfig = Field(default_factory=SynthConfig)
    sim: SimConfig = Field(default_factory=SimConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)

    model_config = ConfigDict(validate_assignment=True)

    @model_validator(mode='before')
    @classmethod
    def propagate_master_seed(cls, values: Any) -> Any:
        if isinstance(values, dict) and 'seed' in values:
            for section in ('synth', 'sim'):
                sub = values.get(section)
                if sub is None:
                    values[section] = {'seed': values['seed']}
                elif isinstance(sub, dict):
                    sub.setdefault('seed', values['seed'])
        return values

    @field_validator('mapping')
    @classmethod
    def check_mapping(cls, v: str) -> str:
        return validate_choice(v, 'mapping', MAPPING_SCHEMES)

    @model_validator(mode='after')
    def check_slot_lengths(self) -> 'ExperimentConfig':
        if self.synth.slot_length_s != self.sim.slot_length_s:
            raise ValueError(f"synth.slot_length_s ({self.synth.slot_length_s}) and sim.slot_length_s "
                             f"({self.sim.slot_length_s}) must match")
        return self

    @property
    def horizon_slots(self) -> int:
        return self.sim.horizon_slots or self.synth.horizon_slots

    def with_seed(self, seed: int) -> 'ExperimentConfig':
        """Copy of this experiment with the master, synth and sim seeds all set to `seed`."""
        return self.model_copy(update={
            'seed': seed,
            'synth': self.synth.model_copy(update={'seed': seed}),
            'sim': self.sim.model_copy(update={'seed': seed}),
        }, deep=True)

    def with_modifications(self, **sections: Dict[str, Any]) -> 'ExperimentConfig':
        """
        Creates a new experiment with nested modifications applied and revalidated.

        Example: `cfg.with_modifications(sim={'strategy': 'movement'})`.
        """
        data = self.to_dict()
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key].update(value)
            else:
                data[key] = value
        return build_experiment(data)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode='json')

    def digest(self) -> str:
        """sha256 over the canonical JSON form; covers every parameter that affects output."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    @classmethod
    def from_file(cls, filepath: str) -> 'ExperimentConfig':
        """Load an experiment from a YAML file (no defaults merged)."""
        logger.info(f"Loading experiment from: {filepath}")
        if not os.path.exists(filepath):
            logger.error(f"Experiment file not found: {filepath}")
            raise FileNotFoundError(f"Experiment file not found: {filepath}")
        try:
            with open(filepath, 'r') as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Error parsing experiment YAML file {filepath}: {e}") from e
        if data is None:
            raise ConfigurationError(f"YAML file is empty: {filepath}")
        return build_experiment(data)

    def to_file(self, filepath: str) -> None:
        """Save the experiment configuration to a YAML file."""
        directory = os.path.dirname(filepath)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(filepath, 'w') as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False, default_flow_style=False)
        logger.info(f"Saved experiment '{self.name}' to {filepath}")


def build_experiment(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a merged configuration dictionary into an ExperimentConfig.

    Raises:
        ConfigurationError: Wrapping the pydantic validation errors with their locations
    """
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        details = "; ".join(f"{'.'.join(map(str, err['loc'])) or 'config'}: {err['msg']}" for err in e.errors())
        raise ConfigurationError(f"Invalid configuration: {details}") from e


def load_experiment(scenario: Optional[str] = None,
                    user_config_path: Optional[str] = None,
                    overrides: Optional[Dict[str, Any]] = None,
                    manager: Optional[ConfigurationManager] = None) -> ExperimentConfig:
    """Merge defaults, scenario, user file and overrides, then validate."""
    manager = manager or ConfigurationManager()
    try:
        merged = manager.get_config(scenario=scenario, user_config_path=user_config_path, overrides=overrides)
    except (FileNotFoundError, ValueError) as e:
        raise ConfigurationError(str(e)) from e
    return build_experiment(merged)
