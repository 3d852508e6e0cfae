"""Frame, receivers and the state feedback matrix (SFM).

Entry convention of the SFM: ``0`` the receiver has the packet, ``1`` the
receiver wants it (missing primary packet), ``-1`` missing but unwanted
(secondary packet).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

HAS = 0
WANTS = 1
UNWANTED = -1


class ModelError(ValueError):
    pass


def primary_set_size(demand_ratio: float, n_packets: int) -> int:
    """Number of primary packets for a demand ratio: max(1, round(mu * N)), halves rounded up."""
    return max(1, int(math.floor(demand_ratio * n_packets + 0.5)))


@dataclass(frozen=True)
class ReceiverProfile:
    erasure_prob: float
    demand_ratio: float
    primary_packets: frozenset[int]
    forced_loss: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "primary_packets", frozenset(int(j) for j in self.primary_packets))
        p = float(self.erasure_prob)
        object.__setattr__(self, "erasure_prob", p)
        if self.forced_loss:
            if p != 1.0:
                raise ModelError("forced-loss profiles must have erasure_prob == 1")
        elif not 0.0 <= p < 1.0:
            raise ModelError(f"erasure probability must lie in [0, 1), got {p}")
        if not 0.0 < self.demand_ratio <= 1.0:
            raise ModelError(f"demand ratio must lie in (0, 1], got {self.demand_ratio}")
        if not self.primary_packets:
            raise ModelError("a receiver must demand at least one packet")
        if min(self.primary_packets) < 0:
            raise ModelError("packet indices must be non-negative")

    @property
    def success_prob(self) -> float:
        return 1.0 - self.erasure_prob

    @classmethod
    def total_loss(cls, primary_packets: Iterable[int], demand_ratio: float = 1.0) -> "ReceiverProfile":
        """Test hook: a receiver that loses every packet (q = 0)."""
        return cls(1.0, demand_ratio, frozenset(primary_packets), forced_loss=True)

    def validate_for(self, n_packets: int) -> None:
        if max(self.primary_packets) >= n_packets:
            raise ModelError(f"primary packet index out of range for N={n_packets}")
        expected = primary_set_size(self.demand_ratio, n_packets)
        if len(self.primary_packets) != expected:
            raise ModelError(
                f"|primary_packets|={len(self.primary_packets)} inconsistent with "
                f"demand ratio {self.demand_ratio} and N={n_packets} (expected {expected})"
            )


@dataclass(frozen=True, eq=False)
class FrameState:
    """Immutable snapshot of the sender's knowledge of all receivers.

    The cardinality vectors are derived from ``sfm`` once at construction.
    """

    sfm: np.ndarray
    profiles: tuple[ReceiverProfile, ...]
    has_sizes: np.ndarray = field(init=False)
    lacks_sizes: np.ndarray = field(init=False)
    wants_sizes: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        sfm = np.array(self.sfm, dtype=np.int8, copy=True)
        if sfm.ndim != 2:
            raise ModelError("SFM must be a 2-D matrix")
        if not np.isin(sfm, (UNWANTED, HAS, WANTS)).all():
            raise ModelError("SFM entries must be -1, 0 or 1")
        if len(self.profiles) != sfm.shape[0]:
            raise ModelError("one profile per SFM row required")
        for i, prof in enumerate(self.profiles):
            wanted = np.flatnonzero(sfm[i] == WANTS)
            if not set(wanted.tolist()) <= prof.primary_packets:
                raise ModelError(f"receiver {i} wants a packet outside its primary set")
        sfm.setflags(write=False)
        object.__setattr__(self, "sfm", sfm)
        object.__setattr__(self, "profiles", tuple(self.profiles))
        has = (sfm == HAS).sum(axis=1)
        wants = (sfm == WANTS).sum(axis=1)
        for name, arr in (("has_sizes", has), ("lacks_sizes", sfm.shape[1] - has), ("wants_sizes", wants)):
            arr = np.asarray(arr, dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def _trusted(cls, sfm: np.ndarray, profiles: tuple[ReceiverProfile, ...]) -> "FrameState":
        # sfm derived from a validated state by Lacks -> Has moves only
        obj = object.__new__(cls)
        sfm.setflags(write=False)
        object.__setattr__(obj, "sfm", sfm)
        object.__setattr__(obj, "profiles", profiles)
        has = np.count_nonzero(sfm == HAS, axis=1)
        for name, arr in (
            ("has_sizes", has),
            ("lacks_sizes", sfm.shape[1] - has),
            ("wants_sizes", np.count_nonzero(sfm == WANTS, axis=1)),
        ):
            arr = np.asarray(arr, dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(obj, name, arr)
        return obj

    @property
    def M(self) -> int:
        return self.sfm.shape[0]

    @property
    def N(self) -> int:
        return self.sfm.shape[1]

    @property
    def success_probs(self) -> np.ndarray:
        return np.array([p.success_prob for p in self.profiles])

    @property
    def has_matrix(self) -> np.ndarray:
        return self.sfm == HAS

    def key(self) -> bytes:
        return self.sfm.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrameState):
            return NotImplemented
        return (
            self.sfm.shape == other.sfm.shape
            and np.array_equal(self.sfm, other.sfm)
            and self.profiles == other.profiles
        )

    def __hash__(self) -> int:
        return hash((self.sfm.shape, self.key(), self.profiles))

    @classmethod
    def from_sfm(
        cls,
        sfm: Sequence[Sequence[int]] | np.ndarray,
        success_probs: Sequence[float],
        primary_packets: Sequence[Iterable[int]] | None = None,
    ) -> "FrameState":
        """Build a state directly from a feedback matrix (fixtures, CLI files).

        Without explicit primary sets every packet not marked -1 is taken as primary.
        A success probability of 0 yields a forced-loss receiver.
        """
        arr = np.asarray(sfm, dtype=np.int8)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ModelError("SFM must be a non-empty 2-D matrix")
        m, n = arr.shape
        if len(success_probs) != m:
            raise ModelError("one success probability per receiver required")
        profiles = []
        for i in range(m):
            if primary_packets is None:
                prim = frozenset(np.flatnonzero(arr[i] != UNWANTED).tolist())
            else:
                prim = frozenset(primary_packets[i])
            mu = len(prim) / n
            q = float(success_probs[i])
            if q == 0.0:
                profiles.append(ReceiverProfile.total_loss(prim, mu))
            else:
                profiles.append(ReceiverProfile(1.0 - q, mu, prim))
        return cls(arr, tuple(profiles))


def init_frame(profiles: Sequence[ReceiverProfile], n_packets: int, rng: np.random.Generator) -> FrameState:
    """Initial uncoded transmission phase: every receiver hears every packet once.

    Draws are taken packet by packet, receiver by receiver (row-major), one
    uniform per (receiver, packet); a packet is received when the draw is
    below the receiver's success probability.
    """
    if n_packets < 1:
        raise ModelError("frame size must be at least 1")
    if len(profiles) == 0:
        raise ModelError("at least one receiver required")
    for prof in profiles:
        if not isinstance(prof, ReceiverProfile):
            raise ModelError("profiles must be ReceiverProfile instances")
        prof.validate_for(n_packets)
    q = np.array([p.success_prob for p in profiles])
    received = rng.random((len(profiles), n_packets)) < q[:, None]
    primary = np.zeros((len(profiles), n_packets), dtype=bool)
    for i, prof in enumerate(profiles):
        primary[i, sorted(prof.primary_packets)] = True
    sfm = np.where(received, HAS, np.where(primary, WANTS, UNWANTED)).astype(np.int8)
    return FrameState(sfm, tuple(profiles))


def apply_reception(
    state: FrameState,
    clique_targets: Mapping[int, int],
    outcomes: Mapping[int, bool],
) -> FrameState:
    """Return the state after one coded transmission.

    ``clique_targets`` maps each targeted receiver to the packet it can decode;
    ``outcomes`` says which targeted receivers heard the transmission.
    """
    if set(outcomes) - set(clique_targets):
        raise ModelError("outcomes given for receivers that were not targeted")
    sfm = state.sfm.copy()
    for r, pkt in clique_targets.items():
        if not 0 <= r < state.M or not 0 <= pkt < state.N:
            raise ModelError(f"target ({r}, {pkt}) out of range")
        if state.sfm[r, pkt] == HAS:
            raise ModelError(f"receiver {r} already has packet {pkt}")
        if outcomes.get(r, False):
            sfm[r, pkt] = HAS
    return FrameState._trusted(sfm, state.profiles)


def weighted_wants(state: FrameState) -> np.ndarray:
    """Channel-weighted Wants vector psi_i / q_i."""
    q = state.success_probs
    if np.any(q <= 0.0):
        raise ModelError("weighted wants undefined for a receiver with q = 0")
    return state.wants_sizes / q


def is_complete(state: FrameState) -> bool:
    return not bool(np.any(state.wants_sizes))
