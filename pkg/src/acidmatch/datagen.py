"""Synthetic two-network corpora with controllable ACID parameters.

Every person in a latent population has a base identity (names, home
city, photo hash, latent friend pool). SN1 holds one profile per person
``0..n-1``; SN2 holds a perturbed copy for the matched subset plus an
independent filler population and, optionally, impersonators.

Consistency is controlled directly: for each matched pair with the
attribute available on both sides, a coin with probability ``c`` decides
whether the SN2 value is drawn from the consistent or the inconsistent
perturbation family, and the draw is re-sampled until it passes (or
fails) the configured thresholds. The measured consistency is therefore
a binomial draw around ``c``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ATTRIBUTES, AttributeKind, Corpus, Friend, GroundTruth, Location, Profile, ThresholdConfig
from .errors import ConfigError
from .rng import stream
from .similarity import friends_overlap, geodesic_km, jaro, photo_similarity

_CONSONANTS = "bcdfghjklmnprstvwyz"
_VOWELS = "aeiou"
_CLUSTERS = ("ch", "sh", "th", "st", "br", "tr", "gr", "cl", "pr", "dr", "ll", "nn", "rt", "nd", "ck")
_MAX_TRIES = 50


@dataclass(frozen=True)
class Availability:
    sn1: float = 1.0
    sn2: float = 1.0
    correlation: float = 0.0

    def joint(self) -> np.ndarray:
        """Probabilities of (both, sn1 only, sn2 only, neither)."""
        a1, a2, rho = self.sn1, self.sn2, self.correlation
        p11 = a1 * a2 + rho * math.sqrt(a1 * (1 - a1) * a2 * (1 - a2))
        probs = np.array([p11, a1 - p11, a2 - p11, 1 - a1 - a2 + p11])
        if (probs < -1e-12).any():
            raise ConfigError(f"availability {self} is not a valid joint distribution")
        probs = np.clip(probs, 0, None)
        return probs / probs.sum()


def _default_availability():
    return {a.value: Availability() for a in ATTRIBUTES}


def _default_consistency():
    return {a.value: 1.0 for a in ATTRIBUTES}


def _default_fidelity():
    return {
        "RealName": 1.0,
        "ScreenName": 0.5,
        "Location": 0.8,
        "Photo": 0.8,
        "Friends": 0.0,
    }


@dataclass(frozen=True)
class GenConfig:
    n: int = 1000
    matched_fraction: float = 1.0
    filler: Optional[int] = None
    availability: dict = field(default_factory=_default_availability)
    consistency: dict = field(default_factory=_default_consistency)
    # relative weights of 0, 1, 2, ... edit operations on consistent names
    name_edit_ops: tuple = (0.6, 0.3, 0.1)
    location_jitter_km: float = 20.0
    photo_bit_flips: int = 6
    friend_pool_size: int = 40
    friend_list_size: int = 12
    friend_overlap_rate: float = 0.5
    n_forenames: int = 300
    n_surnames: int = 1000
    zipf_exponent: float = 1.0
    n_cities: int = 200
    city_zipf_exponent: float = 1.0
    surname_city_affinity: float = 0.0
    screen_digits_prob: float = 0.4
    freeform_screen_prob: float = 0.0
    rename_fraction: float = 0.0
    rename_below: float = 0.5
    impersonation_rate: float = 0.0
    impersonator_fidelity: dict = field(default_factory=_default_fidelity)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    name_pool_seed: int = 7
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        for name in ("matched_fraction", "friend_overlap_rate", "screen_digits_prob", "freeform_screen_prob",
                     "surname_city_affinity", "rename_fraction",
                     "rename_below", "impersonation_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name}={v} outside [0, 1]")
        avail = {}
        for k, v in dict(self.availability).items():
            attr = AttributeKind.parse(k)
            av = v if isinstance(v, Availability) else Availability(**v) if isinstance(v, dict) else Availability(v, v)
            for p in (av.sn1, av.sn2):
                if not (0.0 <= p <= 1.0):
                    raise ConfigError(f"availability of {attr.value} outside [0, 1]")
            if not (-1.0 <= av.correlation <= 1.0):
                raise ConfigError("availability correlation outside [-1, 1]")
            av.joint()
            avail[attr.value] = av
        merged = _default_availability()
        merged.update(avail)
        if merged["ScreenName"] != Availability():
            raise ConfigError("screen names are always available")
        object.__setattr__(self, "availability", merged)
        for fname, defaults in (("consistency", _default_consistency()), ("impersonator_fidelity", _default_fidelity())):
            values = dict(defaults)
            for k, v in dict(getattr(self, fname)).items():
                v = float(v)
                if not (0.0 <= v <= 1.0):
                    raise ConfigError(f"{fname}[{k}]={v} outside [0, 1]")
                values[AttributeKind.parse(k).value] = v
            object.__setattr__(self, fname, values)
        weights = tuple(float(w) for w in self.name_edit_ops)
        if not weights or min(weights) < 0 or sum(weights) <= 0:
            raise ConfigError("name_edit_ops must be non-negative weights with a positive sum")
        object.__setattr__(self, "name_edit_ops", weights)
        if self.friend_list_size < 2 or self.friend_pool_size < 2 * self.friend_list_size:
            raise ConfigError("friend_pool_size must be at least twice friend_list_size (>= 2)")
        if self.location_jitter_km >= self.thresholds.location_km:
            raise ConfigError("location_jitter_km must stay below the location threshold")
        if not (0 <= self.photo_bit_flips <= 64):
            raise ConfigError("photo_bit_flips must be in [0, 64]")
        if isinstance(self.thresholds, dict):
            object.__setattr__(self, "thresholds", ThresholdConfig.from_json(self.thresholds))

    @property
    def n_filler(self) -> int:
        return self.n if self.filler is None else int(self.filler)

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["thresholds"] = self.thresholds.to_json()
        d["name_edit_ops"] = list(self.name_edit_ops)
        return d

    @classmethod
    def from_json(cls, data: dict) -> "GenConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown GenConfig keys: {sorted(unknown)}")
        if "thresholds" in data and isinstance(data["thresholds"], dict):
            data["thresholds"] = ThresholdConfig.from_json(data["thresholds"])
        if "name_edit_ops" in data:
            data["name_edit_ops"] = tuple(data["name_edit_ops"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "GenConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: GenConfig must be a JSON object")
        return cls.from_json(data)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class SyntheticWorld:
    sn1: Corpus
    sn2: Corpus
    gt: GroundTruth
    manifest: dict

    def __iter__(self):
        return iter((self.sn1, self.sn2, self.gt))


# --- names ----------------------------------------------------------------------

def _syllable(rng) -> str:
    onset = rng.choice(_CLUSTERS) if rng.random() < 0.25 else _CONSONANTS[rng.integers(len(_CONSONANTS))]
    coda = _CONSONANTS[rng.integers(len(_CONSONANTS))] if rng.random() < 0.35 else ""
    return onset + _VOWELS[rng.integers(len(_VOWELS))] + coda


def name_pool(size: int, syllables: tuple[int, int], seed: int, purpose: str) -> list[str]:
    rng = stream(seed, purpose)
    seen, out = set(), []
    while len(out) < size:
        k = int(rng.integers(syllables[0], syllables[1] + 1))
        name = "".join(_syllable(rng) for _ in range(k)).capitalize()
        if name not in seen:
            seen.add(name)
            out.append(name)
    return out


def zipf_weights(size: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, size + 1) ** exponent
    return w / w.sum()


def perturb_name(name: str, edit_ops: int, seed) -> str:
    """Apply ``edit_ops`` random substitute/insert/delete/transpose edits."""
    if edit_ops < 0:
        raise ValueError("edit_ops must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    chars = list(name)
    letters = "abcdefghijklmnopqrstuvwxyz"
    for _ in range(edit_ops):
        kinds = ["substitute", "insert"]
        if len(chars) > 1:
            kinds.append("delete")
        swappable = [i for i in range(len(chars) - 1) if chars[i] != chars[i + 1]]
        if swappable:
            kinds.append("transpose")
        kind = kinds[rng.integers(len(kinds))]
        if kind == "substitute" and chars:
            i = int(rng.integers(len(chars)))
            options = [c for c in letters if c != chars[i].lower()]
            new = options[rng.integers(len(options))]
            chars[i] = new.upper() if chars[i].isupper() else new
        elif kind == "insert" or not chars:
            i = int(rng.integers(len(chars) + 1))
            chars.insert(i, letters[rng.integers(len(letters))])
        elif kind == "delete":
            del chars[int(rng.integers(len(chars)))]
        else:
            i = swappable[rng.integers(len(swappable))]
            chars[i], chars[i + 1] = chars[i + 1], chars[i]
    return "".join(chars)


_TEMPLATES = (
    lambda f, l: f + l,
    lambda f, l: f + "." + l,
    lambda f, l: f + "_" + l,
    lambda f, l: l + f,
    lambda f, l: l + "." + f,
    lambda f, l: l + "_" + f,
)


def _handle_variant(handle: str, rng) -> str:
    """Swap the separator, or drop, add or change the trailing digits."""
    stem = handle.rstrip("0123456789")
    digits = handle[len(stem):]
    if rng.random() < 0.5 and any(c in stem for c in "._"):
        sep = "._"[int(rng.integers(2))] if rng.random() < 0.5 else ""
        return stem.replace(".", sep).replace("_", sep) + digits
    if digits and rng.random() < 0.5:
        return stem
    return stem + str(int(rng.integers(1, 100)))


def _screen_name(first: str, last: str, rng, digits_prob: float, freeform: float = 0.0) -> str:
    if freeform and rng.random() < freeform:
        # a nickname unrelated to the real name
        s = "".join(_syllable(rng) for _ in range(int(rng.integers(3, 5))))
    else:
        f, l = first.lower(), last.lower()
        s = _TEMPLATES[rng.integers(len(_TEMPLATES))](f, l)
    if rng.random() < digits_prob:
        s += str(int(rng.integers(1, 10 ** int(rng.integers(1, 4)))))
    return s


# --- generation ----------------------------------------------------------------------

@dataclass
class _Identity:
    first: str
    last: str
    screen: str
    city: int
    offset: tuple[float, float]
    photo: int
    pool: np.ndarray

    @property
    def real(self) -> str:
        return f"{self.first} {self.last}"


class _Generator:
    def __init__(self, cfg: GenConfig):
        self.cfg = cfg
        self.th = cfg.thresholds
        self.forenames = name_pool(cfg.n_forenames, (2, 3), cfg.name_pool_seed, "forenames")
        self.surnames = name_pool(cfg.n_surnames, (2, 3), cfg.name_pool_seed, "surnames")
        self.p_fore = zipf_weights(len(self.forenames), cfg.zipf_exponent)
        self.p_sur = zipf_weights(len(self.surnames), cfg.zipf_exponent)
        crng = stream(cfg.seed, "cities")
        z = crng.uniform(-0.85, 0.95, cfg.n_cities)
        self.city_lat = np.degrees(np.arcsin(z))
        self.city_lon = crng.uniform(-180, 180, cfg.n_cities)
        self.p_city = zipf_weights(cfg.n_cities, cfg.city_zipf_exponent)
        # families cluster, so namesakes often live in the same place
        self.home_city = dict(zip(self.surnames, stream(cfg.seed, "surname-cities").choice(
            cfg.n_cities, size=len(self.surnames), p=self.p_city).tolist()))
        self.n_people = cfg.n + cfg.n_filler
        self.rng = stream(cfg.seed, "population")
        self.people = [self._identity(self.rng, i) for i in range(self.n_people)]
        self.calibration: dict[str, list[bool]] = {a.value: [] for a in ATTRIBUTES}

    def _names(self, rng) -> tuple[str, str]:
        return (self.forenames[rng.choice(len(self.forenames), p=self.p_fore)],
                self.surnames[rng.choice(len(self.surnames), p=self.p_sur)])

    def _city(self, last: str, rng) -> int:
        a = self.cfg.surname_city_affinity
        if a and rng.random() < a:
            return self.home_city[last]
        return int(rng.choice(self.cfg.n_cities, p=self.p_city))

    def _identity(self, rng, i) -> _Identity:
        first, last = self._names(rng)
        others = rng.choice(self.n_people - 1, size=self.cfg.friend_pool_size, replace=False)
        others = others + (others >= i)
        r = 5.0 * math.sqrt(rng.random())
        theta = rng.uniform(0, 2 * math.pi)
        return _Identity(
            first=first,
            last=last,
            screen=self._handle(first, last, rng),
            city=self._city(last, rng),
            offset=(r, theta),
            photo=int(rng.integers(0, 2**63, dtype=np.int64)) * 2 + int(rng.integers(2)),
            pool=others,
        )

    # base values -----------------------------------------------------------

    def _location(self, city: int, dist_km: float, bearing: float) -> Location:
        lat0, lon0 = math.radians(self.city_lat[city]), math.radians(self.city_lon[city])
        d = dist_km / 6371.0
        lat = math.asin(math.sin(lat0) * math.cos(d) + math.cos(lat0) * math.sin(d) * math.cos(bearing))
        lon = lon0 + math.atan2(math.sin(bearing) * math.sin(d) * math.cos(lat0),
                                math.cos(d) - math.sin(lat0) * math.sin(lat))
        lon = (math.degrees(lon) + 540.0) % 360.0 - 180.0
        return Location(f"city{city:04d}", round(math.degrees(lat), 6), round(lon, 6))

    def base_location(self, ident: _Identity) -> Location:
        return self._location(ident.city, *ident.offset)

    def friend_entry(self, person: int) -> Friend:
        p = self.people[person]
        return Friend(screen_name=p.screen, real_name=p.real)

    def friend_list(self, ident: _Identity, rng) -> tuple[Friend, ...]:
        k = min(len(ident.pool), max(1, int(rng.poisson(self.cfg.friend_list_size))))
        chosen = rng.choice(ident.pool, size=k, replace=False)
        return tuple(self.friend_entry(int(f)) for f in chosen)

    # perturbations ---------------------------------------------------------

    def _handle(self, first: str, last: str, rng) -> str:
        return _screen_name(first, last, rng, self.cfg.screen_digits_prob, self.cfg.freeform_screen_prob)

    def _edit_count(self, rng) -> int:
        w = np.asarray(self.cfg.name_edit_ops)
        return int(rng.choice(len(w), p=w / w.sum()))

    def consistent_name(self, value: str, th: float, rng) -> str:
        for _ in range(_MAX_TRIES):
            cand = perturb_name(value, self._edit_count(rng), rng)
            if cand.strip() and jaro(cand, value) > th:
                return cand
        return value

    def consistent_screen(self, value: str, th: float, rng) -> str:
        # handles drift by separator or digit suffix rather than by typos
        for _ in range(_MAX_TRIES):
            if self._edit_count(rng) == 0:
                return value
            cand = _handle_variant(value, rng)
            if cand and jaro(cand, value) > th:
                return cand
        return value

    def inconsistent_real(self, value: str, th: float, rng) -> str:
        for _ in range(_MAX_TRIES):
            f, l = self._names(rng)
            cand = f"{f} {l}"
            if jaro(cand, value) <= th:
                return cand
        return _random_string(rng, len(value), exclude=value)

    def inconsistent_screen(self, value: str, th: float, rng) -> str:
        # an unrelated handle, as when a user picks a different nickname
        for _ in range(_MAX_TRIES):
            f, l = self._names(rng)
            cand = self._handle(f, l, rng)
            if jaro(cand, value) <= th:
                return cand
        return _random_string(rng, len(value), exclude=value)

    def renamed(self, value: str, below: float, rng, screen: bool) -> str:
        for _ in range(_MAX_TRIES * 4):
            f, l = self._names(rng)
            cand = self._handle(f, l, rng) if screen else f"{f} {l}"
            if jaro(cand, value) < below:
                return cand
        return _random_string(rng, len(value), exclude=value, below=below)

    def consistent_location(self, loc: Location, rng) -> Location:
        jitter = self.cfg.location_jitter_km
        for _ in range(_MAX_TRIES):
            cand = self._moved(loc, jitter * math.sqrt(rng.random()), rng.uniform(0, 2 * math.pi))
            if geodesic_km(cand, loc) < self.th.location_km:
                return cand
        return loc

    def _moved(self, loc: Location, dist_km: float, bearing: float) -> Location:
        lat0, lon0 = math.radians(loc.lat), math.radians(loc.lon)
        d = dist_km / 6371.0
        lat = math.asin(math.sin(lat0) * math.cos(d) + math.cos(lat0) * math.sin(d) * math.cos(bearing))
        lon = lon0 + math.atan2(math.sin(bearing) * math.sin(d) * math.cos(lat0),
                                math.cos(d) - math.sin(lat0) * math.sin(lat))
        lon = (math.degrees(lon) + 540.0) % 360.0 - 180.0
        return Location(loc.label, round(math.degrees(lat), 6), round(lon, 6))

    def inconsistent_location(self, loc: Location, rng) -> Location:
        for _ in range(_MAX_TRIES):
            city = int(rng.choice(self.cfg.n_cities, p=self.p_city))
            cand = self._location(city, 5.0 * math.sqrt(rng.random()), rng.uniform(0, 2 * math.pi))
            if geodesic_km(cand, loc) >= self.th.location_km:
                return cand
        return self._moved(loc, 10 * self.th.location_km, rng.uniform(0, 2 * math.pi))

    def consistent_photo(self, h: int, rng) -> int:
        max_flips = min(self.cfg.photo_bit_flips, int(math.ceil(64 * (1 - self.th.photo))) - 1)
        k = int(rng.integers(0, max(0, max_flips) + 1))
        bits = rng.choice(64, size=k, replace=False)
        for b in bits:
            h ^= 1 << int(b)
        return h

    def inconsistent_photo(self, h: int, rng) -> int:
        for _ in range(_MAX_TRIES):
            cand = int(rng.integers(0, 2**63, dtype=np.int64)) * 2 + int(rng.integers(2))
            if photo_similarity(cand, h) <= self.th.photo:
                return cand
        return h ^ ((1 << 64) - 1)

    def friends_pair(self, ident: _Identity, f1: tuple[Friend, ...], consistent: bool, rng) -> tuple[Friend, ...]:
        """SN2 friend list drawn from the person's latent pool."""
        need = self.th.friends
        by_name = {f: i for i, f in enumerate(f1)}
        f1_people = [int(p) for p in ident.pool if self.friend_entry(int(p)) in by_name]
        rest = [int(p) for p in ident.pool if self.friend_entry(int(p)) not in by_name]
        for _ in range(_MAX_TRIES):
            k2 = min(len(ident.pool), max(1, int(rng.poisson(self.cfg.friend_list_size))))
            if consistent:
                shared = max(need, int(round(self.cfg.friend_overlap_rate * len(f1))))
                shared = min(shared, len(f1_people), k2)
            else:
                shared = min(int(rng.integers(0, max(1, need))), len(f1_people), k2)
            picked = list(rng.choice(f1_people, size=shared, replace=False)) if shared else []
            fill = min(k2 - shared, len(rest))
            if fill > 0:
                picked += list(rng.choice(rest, size=fill, replace=False))
            f2 = tuple(self.friend_entry(int(p)) for p in picked)
            if (friends_overlap(f1, f2) >= need) == consistent:
                return f2
        return f1 if consistent else ()

    # assembly ---------------------------------------------------------------

    def sn1_profile(self, i: int, present: dict) -> Profile:
        ident = self.people[i]
        frng = stream(self.cfg.seed, "sn1-friends", i)
        return Profile(
            profile_id=f"sn1-{i:06d}",
            network_id="sn1",
            screen_name=ident.screen,
            real_name=ident.real if present["RealName"] else None,
            location=self.base_location(ident) if present["Location"] else None,
            photo=ident.photo if present["Photo"] else None,
            friends=self.friend_list(ident, frng) if present["Friends"] else None,
        )

    def matched_values(self, i: int, p1: Profile, present: dict, rng) -> dict:
        ident = self.people[i]
        cfg, th = self.cfg, self.th
        out = {}
        rename = rng.random() < cfg.rename_fraction
        for attr in ATTRIBUTES:
            key = attr.value
            if not present[key]:
                out[key] = None
                continue
            both = p1.has(attr)
            consistent = rng.random() < cfg.consistency[key]
            if both:
                self.calibration[key].append(consistent)
            if attr is AttributeKind.REAL_NAME:
                if rename:
                    out[key] = self.renamed(ident.real, cfg.rename_below, rng, screen=False)
                elif not both or consistent:
                    out[key] = self.consistent_name(ident.real, th.real_name, rng)
                else:
                    out[key] = self.inconsistent_real(ident.real, th.real_name, rng)
            elif attr is AttributeKind.SCREEN_NAME:
                if rename:
                    out[key] = self.renamed(ident.screen, cfg.rename_below, rng, screen=True)
                elif consistent:
                    out[key] = self.consistent_screen(ident.screen, th.screen_name, rng)
                else:
                    out[key] = self.inconsistent_screen(ident.screen, th.screen_name, rng)
            elif attr is AttributeKind.LOCATION:
                base = self.base_location(ident)
                out[key] = self.consistent_location(base, rng) if (not both or consistent) \
                    else self.inconsistent_location(base, rng)
            elif attr is AttributeKind.PHOTO:
                out[key] = self.consistent_photo(ident.photo, rng) if (not both or consistent) \
                    else self.inconsistent_photo(ident.photo, rng)
            else:
                if both:
                    out[key] = self.friends_pair(ident, p1.friends, consistent, rng)
                else:
                    out[key] = self.friend_list(ident, rng)
        return out

    def fresh_values(self, ident: _Identity, present: dict, rng) -> dict:
        return {
            "RealName": ident.real if present["RealName"] else None,
            "ScreenName": ident.screen,
            "Location": self.base_location(ident) if present["Location"] else None,
            "Photo": ident.photo if present["Photo"] else None,
            "Friends": self.friend_list(ident, rng) if present["Friends"] else None,
        }

    def draw_presence(self, rng, matched: bool) -> tuple[dict, dict]:
        p1, p2 = {}, {}
        for attr in ATTRIBUTES:
            av = self.cfg.availability[attr.value]
            if matched:
                cell = int(rng.choice(4, p=av.joint()))
                p1[attr.value] = cell in (0, 1)
                p2[attr.value] = cell in (0, 2)
            else:
                p1[attr.value] = rng.random() < av.sn1
                p2[attr.value] = rng.random() < av.sn2
        return p1, p2


def _random_string(rng, length: int, exclude: str, below: float = 1.0) -> str:
    letters = "qxzjkvwy"
    for _ in range(_MAX_TRIES):
        cand = "".join(letters[rng.integers(len(letters))] for _ in range(max(3, length)))
        if cand != exclude and jaro(cand, exclude) < below:
            return cand
    return "q" * max(3, length) if exclude != "q" * max(3, length) else "x" * max(3, length)


def _unique_screen(name: str, taken: set, rng) -> str:
    while name.casefold() in taken:
        name = f"{name}{int(rng.integers(10))}"
    taken.add(name.casefold())
    return name


def generate(cfg: GenConfig) -> SyntheticWorld:
    """Build (sn1, sn2, gt) from ``cfg``; iterate the result to unpack."""
    g = _Generator(cfg)
    rng = stream(cfg.seed, "profiles")
    sn1_profiles: list[Profile] = []
    sn2_records: list[dict] = []
    pairs = []
    taken1: set = set()
    matched_flags = rng.random(cfg.n) < cfg.matched_fraction
    for i in range(cfg.n):
        pres1, pres2 = g.draw_presence(rng, matched=bool(matched_flags[i]))
        p1 = g.sn1_profile(i, pres1)
        screen = _unique_screen(p1.screen_name, taken1, rng)
        if screen != p1.screen_name:
            p1 = dataclasses.replace(p1, screen_name=screen)
        sn1_profiles.append(p1)
        if matched_flags[i]:
            vals = g.matched_values(i, p1, pres2, rng)
            sn2_records.append({"kind": "match", "person": i, "values": vals})
    for j in range(cfg.n, cfg.n + cfg.n_filler):
        _, pres2 = g.draw_presence(rng, matched=False)
        sn2_records.append({"kind": "filler", "person": j, "values": g.fresh_values(g.people[j], pres2, rng)})

    irng = stream(cfg.seed, "impersonators")
    impersonated = np.flatnonzero(irng.random(cfg.n) < cfg.impersonation_rate)
    for i in impersonated:
        victim = sn1_profiles[i]
        fake = g._identity(irng, int(irng.integers(g.n_people)))
        _, pres = g.draw_presence(irng, matched=False)
        vals = g.fresh_values(fake, pres, irng)
        for attr in ATTRIBUTES:
            key = attr.value
            if irng.random() < cfg.impersonator_fidelity[key]:
                if attr is AttributeKind.REAL_NAME:
                    vals[key] = victim.real_name
                elif attr is AttributeKind.SCREEN_NAME:
                    vals[key] = victim.screen_name
                elif attr is AttributeKind.LOCATION:
                    vals[key] = victim.location
                elif attr is AttributeKind.PHOTO:
                    vals[key] = victim.photo
                else:
                    vals[key] = victim.friends
        sn2_records.append({"kind": "impersonator", "victim": victim.profile_id, "values": vals})

    order = stream(cfg.seed, "sn2-order").permutation(len(sn2_records))
    taken2: set = set()
    srng = stream(cfg.seed, "sn2-screen")
    sn2_profiles = []
    for new_pos, k in enumerate(order):
        rec = sn2_records[k]
        v = rec["values"]
        pid = f"sn2-{new_pos:06d}"
        sn2_profiles.append(Profile(
            profile_id=pid,
            network_id="sn2",
            screen_name=_unique_screen(v["ScreenName"], taken2, srng),
            real_name=v["RealName"],
            location=v["Location"],
            photo=v["Photo"],
            friends=v["Friends"],
            is_impersonator_of=rec.get("victim"),
        ))
        if rec["kind"] == "match":
            pairs.append((f"sn1-{rec['person']:06d}", pid))
    achieved = {k: (float(np.mean(v)) if v else None) for k, v in g.calibration.items()}
    manifest = {
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "n_sn1": len(sn1_profiles),
        "n_sn2": len(sn2_profiles),
        "n_pairs": len(pairs),
        "n_impersonators": int(len(impersonated)),
        "achieved_consistency_draws": achieved,
        "impersonator_labels": True,
    }
    return SyntheticWorld(Corpus(sn1_profiles), Corpus(sn2_profiles), GroundTruth(frozenset(pairs)), manifest)


def remove_matches(sn2: Corpus, gt: GroundTruth) -> Corpus:
    """SN2 without any profile that appears in ``gt``; impersonators stay."""
    return sn2.without(gt.sn2_ids)
