"""Domain types, corpus ingestion and ground-truth handling."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

from .errors import (
    ConfigError,
    CoordinateError,
    DuplicateIdError,
    DuplicatePairError,
    ParseError,
    UnresolvedIdError,
)


class AttributeKind(enum.Enum):
    REAL_NAME = "RealName"
    SCREEN_NAME = "ScreenName"
    LOCATION = "Location"
    PHOTO = "Photo"
    FRIENDS = "Friends"

    @property
    def slot(self) -> int:
        return ATTRIBUTES.index(self)

    @classmethod
    def parse(cls, value: str) -> "AttributeKind":
        key = value.replace("_", "").replace("-", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown attribute {value!r}")


# Feature-vector slot order.
ATTRIBUTES = (
    AttributeKind.REAL_NAME,
    AttributeKind.SCREEN_NAME,
    AttributeKind.LOCATION,
    AttributeKind.PHOTO,
    AttributeKind.FRIENDS,
)


@dataclass(frozen=True)
class Location:
    label: str
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and -90.0 <= self.lat <= 90.0):
            raise CoordinateError(f"latitude {self.lat} outside [-90, 90]")
        if not (math.isfinite(self.lon) and -180.0 <= self.lon <= 180.0):
            raise CoordinateError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class Friend:
    screen_name: str
    real_name: Optional[str] = None


@dataclass(frozen=True)
class Profile:
    """One account on one network.

    ``friends`` is ``None`` when the network exposes no friend data and an
    empty tuple when the user simply has no friends.
    """

    profile_id: str
    network_id: str
    screen_name: str
    real_name: Optional[str] = None
    location: Optional[Location] = None
    photo: Optional[int] = None
    friends: Optional[tuple[Friend, ...]] = None
    is_impersonator_of: Optional[str] = None

    def __post_init__(self):
        if self.photo is not None and not (0 <= self.photo < 1 << 64):
            raise ValueError(f"photo hash {self.photo!r} is not a 64-bit value")

    def has(self, attr: AttributeKind) -> bool:
        if attr is AttributeKind.REAL_NAME:
            return bool(self.real_name and self.real_name.strip())
        if attr is AttributeKind.SCREEN_NAME:
            return bool(self.screen_name and self.screen_name.strip())
        if attr is AttributeKind.LOCATION:
            return self.location is not None
        if attr is AttributeKind.PHOTO:
            return self.photo is not None
        return self.friends is not None

    def to_json(self) -> dict:
        loc = None
        if self.location is not None:
            loc = {"label": self.location.label, "lat": self.location.lat, "lon": self.location.lon}
        friends = None
        if self.friends is not None:
            friends = [{"real_name": f.real_name, "screen_name": f.screen_name} for f in self.friends]
        return {
            "profile_id": self.profile_id,
            "network_id": self.network_id,
            "real_name": self.real_name,
            "screen_name": self.screen_name,
            "location": loc,
            "photo": None if self.photo is None else f"{self.photo:016x}",
            "friends": friends,
            "is_impersonator_of": self.is_impersonator_of,
        }


class Corpus:
    """Immutable, ordered collection of profiles from one network."""

    def __init__(self, profiles: Iterable[Profile]):
        self._profiles = tuple(profiles)
        index = {}
        for i, p in enumerate(self._profiles):
            if p.profile_id in index:
                raise DuplicateIdError(f"duplicate profile_id {p.profile_id!r}")
            index[p.profile_id] = i
        self._index = index

    def __len__(self) -> int:
        return len(self._profiles)

    def __iter__(self) -> Iterator[Profile]:
        return iter(self._profiles)

    def __getitem__(self, profile_id: str) -> Profile:
        return self._profiles[self._index[profile_id]]

    def __contains__(self, profile_id) -> bool:
        return profile_id in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Corpus) and self._profiles == other._profiles

    def __hash__(self):
        return hash(self._profiles)

    def __repr__(self) -> str:
        return f"Corpus(n={len(self)})"

    @property
    def profiles(self) -> tuple[Profile, ...]:
        return self._profiles

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.profile_id for p in self._profiles)

    def position(self, profile_id: str) -> int:
        return self._index[profile_id]

    def positions(self, ids: Iterable[str]) -> np.ndarray:
        return np.fromiter((self._index[i] for i in ids), dtype=np.int64)

    @cached_property
    def has_impersonator_labels(self) -> bool:
        return any(p.is_impersonator_of is not None for p in self._profiles)

    def without(self, ids: Iterable[str]) -> "Corpus":
        drop = set(ids)
        return Corpus(p for p in self._profiles if p.profile_id not in drop)


@dataclass(frozen=True)
class GroundTruth:
    """Labeled matching pairs; every other cross-corpus pair is non-matching."""

    pairs: frozenset = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(sorted(self.pairs))

    def __contains__(self, pair) -> bool:
        return tuple(pair) in self.pairs

    @cached_property
    def by_sn1(self) -> Mapping[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {}
        for a, b in sorted(self.pairs):
            out.setdefault(a, []).append(b)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def sn2_ids(self) -> frozenset:
        return frozenset(b for _, b in self.pairs)

    def matches_of(self, sn1_id: str) -> tuple[str, ...]:
        return self.by_sn1.get(sn1_id, ())

    def is_match(self, sn1_id: str, sn2_id: str) -> bool:
        return (sn1_id, sn2_id) in self.pairs

    @property
    def is_special_case(self) -> bool:
        return all(len(v) == 1 for v in self.by_sn1.values())

    def validate(self, sn1: Corpus, sn2: Corpus) -> None:
        for a, b in self.pairs:
            if a not in sn1:
                raise UnresolvedIdError(f"ground-truth id {a!r} not in sn1")
            if b not in sn2:
                raise UnresolvedIdError(f"ground-truth id {b!r} not in sn2")


@dataclass(frozen=True)
class ThresholdConfig:
    """Per-attribute consistency thresholds.

    Names and photo are similarities in [0, 1] that must be exceeded,
    location is a maximum distance in km, friends a minimum common count.
    """

    real_name: float = 0.66
    screen_name: float = 0.82
    location_km: float = 70.0
    photo: float = 0.60
    friends: int = 2

    def __post_init__(self):
        for name in ("real_name", "screen_name", "photo"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ConfigError(f"threshold {name}={v} outside [0, 1]")
        if not (math.isfinite(self.location_km) and self.location_km >= 0):
            raise ConfigError(f"threshold location_km={self.location_km} must be >= 0")
        if self.friends < 0 or int(self.friends) != self.friends:
            raise ConfigError(f"threshold friends={self.friends} must be a count")

    def value(self, attr: AttributeKind) -> float:
        return {
            AttributeKind.REAL_NAME: self.real_name,
            AttributeKind.SCREEN_NAME: self.screen_name,
            AttributeKind.LOCATION: self.location_km,
            AttributeKind.PHOTO: self.photo,
            AttributeKind.FRIENDS: self.friends,
        }[attr]

    def passes(self, attr: AttributeKind, raw):
        """Whether raw attribute scores count as consistent.

        ``raw`` is in the attribute's native unit (Jaro, km, photo
        similarity, common-friend count); NaN means missing and never passes.
        """
        raw = np.asarray(raw, dtype=float)
        th = self.value(attr)
        with np.errstate(invalid="ignore"):
            if attr is AttributeKind.LOCATION:
                out = raw < th
            elif attr is AttributeKind.FRIENDS:
                out = raw >= th
            else:
                out = raw > th
        out = out & ~np.isnan(raw)
        return bool(out) if out.ndim == 0 else out

    def to_json(self) -> dict:
        return {
            "RealName": self.real_name,
            "ScreenName": self.screen_name,
            "Location": self.location_km,
            "Photo": self.photo,
            "Friends": self.friends,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ThresholdConfig":
        kw = {}
        keys = {
            "realname": "real_name",
            "screenname": "screen_name",
            "location": "location_km",
            "locationkm": "location_km",
            "photo": "photo",
            "friends": "friends",
        }
        for k, v in data.items():
            norm = k.replace("_", "").lower()
            if norm not in keys:
                raise ConfigError(f"unknown threshold key {k!r}")
            kw[keys[norm]] = v
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ThresholdConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class FeatureVector:
    """Five similarity slots in ATTRIBUTES order; ``None`` marks MISSING."""

    real_name: Optional[float]
    screen_name: Optional[float]
    location: Optional[float]
    photo: Optional[float]
    friends: Optional[float]

    def __post_init__(self):
        for v in self.slots:
            if v is not None and not math.isfinite(v):
                raise ValueError("feature values must be finite")

    @property
    def slots(self) -> tuple:
        return (self.real_name, self.screen_name, self.location, self.photo, self.friends)

    def __getitem__(self, attr: AttributeKind):
        return self.slots[attr.slot]

    def as_array(self) -> np.ndarray:
        """Row vector with NaN in MISSING slots."""
        return np.array([np.nan if v is None else v for v in self.slots], dtype=float)

    @classmethod
    def from_array(cls, row) -> "FeatureVector":
        return cls(*[None if np.isnan(v) else float(v) for v in row])


# --- ingestion ---------------------------------------------------------------

def load_gazetteer(path=None) -> dict[str, tuple[float, float]]:
    """Map case-folded location labels to (lat, lon)."""
    if path is None:
        fh = resources.files("acidmatch").joinpath("data/gazetteer.csv").open(encoding="utf-8")
    else:
        fh = open(path, encoding="utf-8", newline="")
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["label", "lat", "lon"]:
            raise ConfigError("gazetteer CSV must have header label,lat,lon")
        return {row["label"].strip().casefold(): (float(row["lat"]), float(row["lon"])) for row in reader}


def _parse_location(raw, gazetteer) -> Optional[Location]:
    if raw is None:
        return None
    if isinstance(raw, str):
        raw = {"label": raw}
    if not isinstance(raw, Mapping):
        raise ValueError("a profile holds at most one location")
    label = raw.get("label") or ""
    lat, lon = raw.get("lat"), raw.get("lon")
    if lat is None or lon is None:
        key = label.strip().casefold()
        if gazetteer is None or key not in gazetteer:
            raise ValueError(f"location {label!r} has no coordinates and is not in the gazetteer")
        lat, lon = gazetteer[key]
    return Location(label, float(lat), float(lon))


def _parse_photo(raw, photo_path, base_dir) -> Optional[int]:
    if raw is not None:
        if isinstance(raw, (list, tuple)):
            raise ValueError("a profile holds at most one photo")
        if isinstance(raw, int):
            return raw
        return int(str(raw), 16)
    if photo_path is not None:
        from .similarity import phash64

        path = Path(photo_path)
        if not path.is_absolute():
            path = Path(base_dir) / path
        return phash64(path.read_bytes())
    return None


def profile_from_json(rec: Mapping, gazetteer=None, base_dir=".") -> Profile:
    for key in ("profile_id", "network_id", "screen_name"):
        if not isinstance(rec.get(key), str) or not rec[key]:
            raise ValueError(f"missing required field {key!r}")
    friends = rec.get("friends")
    if friends is not None:
        friends = tuple(Friend(f["screen_name"], f.get("real_name")) for f in friends)
    return Profile(
        profile_id=rec["profile_id"],
        network_id=rec["network_id"],
        screen_name=rec["screen_name"],
        real_name=rec.get("real_name"),
        location=_parse_location(rec.get("location"), gazetteer),
        photo=_parse_photo(rec.get("photo"), rec.get("photo_path"), base_dir),
        friends=friends,
        is_impersonator_of=rec.get("is_impersonator_of"),
    )


def load_profiles(path, format: str = "jsonlines", gazetteer=None) -> Corpus:
    """Read a JSON-lines profile file.

    ``gazetteer`` maps case-folded labels to coordinates for locations that
    arrive without lat/lon; pass ``True`` to use the bundled table.
    """
    if format != "jsonlines":
        raise ValueError(f"unsupported format {format!r}")
    if gazetteer is True:
        gazetteer = load_gazetteer()
    path = Path(path)
    profiles = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                profile = profile_from_json(rec, gazetteer, path.parent)
            except CoordinateError as exc:
                raise CoordinateError(f"{path}:{lineno}: {exc}") from None
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if profile.profile_id in seen:
                raise DuplicateIdError(f"{path}:{lineno}: duplicate profile_id {profile.profile_id!r}")
            seen.add(profile.profile_id)
            profiles.append(profile)
    return Corpus(profiles)


def write_profiles(corpus: Iterable[Profile], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in corpus:
            fh.write(json.dumps(p.to_json(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_ground_truth(path, sn1: Corpus, sn2: Corpus) -> GroundTruth:
    pairs = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return GroundTruth(frozenset())
        if [h.strip() for h in header] != ["id1", "id2"]:
            raise ParseError(path, 1, "ground-truth header must be id1,id2")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(path, lineno, f"expected 2 columns, got {len(row)}")
            a, b = row[0].strip(), row[1].strip()
            if a not in sn1:
                raise UnresolvedIdError(f"{path}:{lineno}: id1 {a!r} not in sn1")
            if b not in sn2:
                raise UnresolvedIdError(f"{path}:{lineno}: id2 {b!r} not in sn2")
            if (a, b) in pairs:
                raise DuplicatePairError(f"{path}:{lineno}: duplicate pair ({a}, {b})")
            pairs.add((a, b))
    return GroundTruth(frozenset(pairs))


def write_ground_truth(gt: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id1", "id2"])
        for a, b in gt:
            w.writerow([a, b])
