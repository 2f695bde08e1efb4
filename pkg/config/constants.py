"""
Constants used throughout the simulator.

This file contains all common constants to avoid magic numbers and strings in the codebase.
"""

# ===== General Constants =====
TOOL_NAME = "d2dsim"
DEFAULT_SCENARIO_NAME = "indoor"
SCENARIO_NAMES = ("indoor", "outdoor")

# ===== Time Constants =====
DEFAULT_SLOT_LENGTH_S = 300  # 5-minute slots
SECONDS_PER_HOUR = 3600
SECONDS_PER_DAY = 86400
SECONDS_PER_WEEK = 7 * SECONDS_PER_DAY

# ===== Geometry Constants =====
REGION_SIDE_M = 100.0  # regions are 100x100 m^2 cells
INDOOR_GRID_COLUMNS = 10
OUTDOOR_AREA_SIDE_M = 5000.0

# Friend-distance bin edges in metres; the last bin is open-ended.
FRIEND_DISTANCE_EDGES_M = (0.0, 500.0, 1500.0, 2500.0, 5000.0, float("inf"))
# Default average friend distances (metres) targeted by the mapping-driven distance sweep.
MAPPED_FRIEND_DISTANCE_TARGETS_M = (250.0, 1000.0, 2000.0, 3000.0)

# Default lower edges of the content popularity bins (total requests); the last bin is open-ended.
CONTENT_POPULARITY_BIN_EDGES = (1, 2, 5, 10, 20, 50)

# ===== Model Options =====
STRATEGY_IDS = ("proposed", "movement", "popularity")
MAPPING_SCHEMES = ("independent", "social_rank", "social_mobility_rank")
MIGRATION_NORMALIZATION_MODES = ("paper_column", "row")
SWEEP_AXES = (
    "propagation_intensity",
    "crowdedness",
    "friend_distance",
    "mapped_friend_distance",
    "mapping_scheme",
    "content_popularity_bin",
    "top_content_fraction",
)
EWMA_SMOOTHING = 0.5
ORACLE_MAX_CELLS = 24

# ===== Trace Format =====
TRACE_FIELD_SEPARATOR = ","
TRACE_ABSENT = "-"
SOCIAL_TRACE_FILE = "social.trace"
MOBILITY_TRACE_FILE = "mobility.trace"

# ===== Output Files =====
OUTCOME_LOG_FILE = "outcomes.log"
METRICS_FILE = "metrics.yaml"
SERIES_FILE = "series.csv"
CONTRIBUTION_FILE = "contribution.csv"
MANIFEST_FILE = "manifest.yaml"
TABLES_DIR = "tables"
SWEEP_FILE_TEMPLATE = "sweep_{axis}.csv"
SWEEP_REPLICATES_TEMPLATE = "sweep_{axis}_replicates.csv"
SWEEP_LONG_TEMPLATE = "sweep_{axis}.dat"

# ===== Exit Codes =====
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3

# ===== Logging =====
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
PROGRESS_LOG_EVERY_SLOTS = 50
