"""
Region migration index and per-user mobility index.

The migration index counts consecutive region pairs observed in the previous
slot and normalises them either over source regions into each destination
(`paper_column`) or over destinations out of each source (`row`). The
mobility index of a user is the migration row of its last known region
weighted by its regional preference and renormalised.
"""
# Standard library imports
import logging
from dataclasses import dataclass
from typing import Collection, Dict, Mapping, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np

# Application-specific imports
from config.constants import MIGRATION_NORMALIZATION_MODES
from .errors import UnknownOptionError
from .optimizations import timed
from .trace_model import AssociationEvent, migration_pairs

logger = logging.getLogger(__name__)


@dataclass
class MigrationMatrix:
    E: np.ndarray
    Ebar: np.ndarray
    mode: str

    @property
    def n_migrations(self) -> int:
        return int(self.E.sum())


@dataclass
class MobilityTable:
    Q: np.ndarray
    last_region: np.ndarray

    def row(self, u: int) -> Dict[int, float]:
        return {int(r): float(q) for r, q in enumerate(self.Q[u]) if q > 0}

    def has_support(self) -> np.ndarray:
        return self.Q.sum(axis=1) > 0


def normalize_migration(E: np.ndarray, mode: str) -> np.ndarray:
    """
    Normalise migration counts; empty rows or columns stay zero.

    Raises:
        UnknownOptionError: If mode is not 'paper_column' or 'row'
    """
    if mode not in MIGRATION_NORMALIZATION_MODES:
        raise UnknownOptionError("migration normalisation mode", mode, MIGRATION_NORMALIZATION_MODES)
    E = np.asarray(E, dtype=float)
    axis = 0 if mode == "paper_column" else 1
    sums = E.sum(axis=axis, keepdims=True)
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(sums > 0, E / sums, 0.0)


def migration_index(associations: Sequence[AssociationEvent], mode: str,
                    n_regions: Optional[int] = None) -> MigrationMatrix:
    """
    Migration counts and normalised index from the associations of one slot.

    Args:
        associations: Associations (of slot T-1, optionally preceded by each
            user's previous association so boundary moves count)
        mode: 'paper_column' or 'row'
        n_regions: Size of the region space (defaults to max region + 1)

    Returns:
        MigrationMatrix with E[r][s] counting r-then-s pairs, self pairs included
    """
    if mode not in MIGRATION_NORMALIZATION_MODES:
        raise UnknownOptionError("migration normalisation mode", mode, MIGRATION_NORMALIZATION_MODES)
    if n_regions is None:
        n_regions = max((e.region for e in associations), default=-1) + 1
    E = np.zeros((n_regions, n_regions), dtype=np.int64)
    pairs = migration_pairs(associations)
    if pairs:
        src, dst = np.asarray(pairs, dtype=np.int64).T
        np.add.at(E, (src, dst), 1)
    return MigrationMatrix(E=E, Ebar=normalize_migration(E, mode), mode=mode)


def mobility_index(Ebar: Union[MigrationMatrix, np.ndarray],
                   P: Union[np.ndarray, Mapping[int, Mapping[int, float]]],
                   u: int, T: int,
                   last_region: Optional[int],
                   visited_last_slot: Collection[int] = ()) -> Dict[int, float]:
    """
    Next-slot region distribution Q[u] of one user.

    Q[u][r] is proportional to Ebar[R_u][r] * P[u][r], where R_u is the last
    known region of u. When that product vanishes everywhere the user's
    preference row is used alone, and when that is empty too, a uniform
    distribution over the regions u visited in slot T-1. `T` labels the slot.

    Returns:
        {region: probability}, empty when no fallback applies
    """
    matrix = Ebar.Ebar if isinstance(Ebar, MigrationMatrix) else np.asarray(Ebar, dtype=float)
    n_regions = matrix.shape[0]
    if isinstance(P, Mapping):
        p_row = np.zeros(n_regions)
        for r, x in P.get(u, {}).items():
            p_row[r] = x
    else:
        p_row = np.asarray(P[u], dtype=float)

    if last_region is not None and last_region >= 0:
        weights = matrix[last_region] * p_row
        total = weights.sum()
        if total > 0:
            return {r: float(w / total) for r, w in enumerate(weights) if w > 0}
    total = p_row.sum()
    if total > 0:
        return {r: float(x / total) for r, x in enumerate(p_row) if x > 0}
    visited = sorted(set(visited_last_slot))
    if visited:
        return {r: 1.0 / len(visited) for r in visited}
    return {}


class MobilityModel:
    """Builds the migration matrix and Q for all users of a slot."""

    def __init__(self, n_regions: int, mode: str = "paper_column"):
        if mode not in MIGRATION_NORMALIZATION_MODES:
            raise UnknownOptionError("migration normalisation mode", mode, MIGRATION_NORMALIZATION_MODES)
        self.n_regions = n_regions
        self.mode = mode

    @timed
    def build_tables(self, T: int, associations: Sequence[AssociationEvent], P: np.ndarray,
                     last_region: np.ndarray,
                     visited_last_slot: Optional[Mapping[int, Collection[int]]] = None) -> Tuple[MigrationMatrix, MobilityTable]:
        """
        Returns:
            (MigrationMatrix, MobilityTable) for slot T
        """
        migration = migration_index(associations, self.mode, self.n_regions)
        n_users = P.shape[0]
        known = last_region >= 0
        rows = np.zeros((n_users, self.n_regions))
        rows[known] = migration.Ebar[last_region[known]]

        weights = rows * P
        totals = weights.sum(axis=1)
        Q = np.zeros_like(weights)
        direct = totals > 0
        Q[direct] = weights[direct] / totals[direct, None]

        p_totals = P.sum(axis=1)
        from_preference = ~direct & (p_totals > 0)
        Q[from_preference] = P[from_preference] / p_totals[from_preference, None]

        if visited_last_slot:
            for u, regions in visited_last_slot.items():
                if not direct[u] and not from_preference[u] and regions:
                    regions = sorted(set(regions))
                    Q[u, regions] = 1.0 / len(regions)

        logger.debug(f"slot {T}: {migration.n_migrations} migrations, {int(direct.sum())} users with "
                     f"migration-informed Q, {int(from_preference.sum())} from preference only")
        return migration, MobilityTable(Q=Q, last_region=last_region.copy())
