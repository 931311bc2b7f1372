"""Attribute similarity metrics and feature assembly.

Scalar functions (``jaro``, ``geodesic_km``, ...) are the reference
definitions. :class:`ProfileTable` and :class:`Featurizer` compute the same
quantities over many pairs at once and are tested against the scalar forms.

Perceptual hash recipe (normative, bit-exact):

1. decode the image and convert it to 8-bit luminance with Pillow's ``"L"``
   mode (ITU-R 601-2: ``L = R*299/1000 + G*587/1000 + B*114/1000``);
2. resize to 32x32 with Lanczos resampling;
3. apply an orthonormal 2D DCT-II (rows then columns) to the float64 pixels;
4. keep the top-left 8x8 block of coefficients (lowest frequencies);
5. take the median of those 64 coefficients *excluding* the DC term [0, 0];
6. bit ``k`` (row-major over the 8x8 block, ``k = 8*row + col``) is 1 when
   the coefficient is strictly greater than the median; bit 0 is the most
   significant bit of the resulting 64-bit integer.
"""

from __future__ import annotations

import io
import math
from typing import Iterable, Optional, Sequence

import numpy as np
from rapidfuzz import process
from rapidfuzz.distance import Jaro
from scipy.fft import dctn

from .core import ATTRIBUTES, AttributeKind, Corpus, FeatureVector, Friend, Profile
from .errors import UndecodableImageError

EARTH_RADIUS_KM = 6371.0
DEFAULT_KAPPA_KM = 50.0


def normalize_name(s: Optional[str]) -> str:
    return "" if s is None else s.strip().casefold()


def jaro(s1: str, s2: str) -> float:
    """Classical Jaro similarity on case-folded, stripped strings."""
    a, b = normalize_name(s1), normalize_name(s2)
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return 0.0
    if a == b:
        return 1.0
    window = max(0, max(la, lb) // 2 - 1)
    a_flags = [False] * la
    b_flags = [False] * lb
    matches = 0
    for i, ch in enumerate(a):
        lo, hi = max(0, i - window), min(lb, i + window + 1)
        for j in range(lo, hi):
            if not b_flags[j] and b[j] == ch:
                a_flags[i] = b_flags[j] = True
                matches += 1
                break
    if matches == 0:
        return 0.0
    half_transpositions = 0
    k = 0
    for i in range(la):
        if a_flags[i]:
            while not b_flags[k]:
                k += 1
            if a[i] != b[k]:
                half_transpositions += 1
            k += 1
    t = half_transpositions // 2
    return (matches / la + matches / lb + (matches - t) / matches) / 3.0


def geodesic_km(loc1, loc2) -> float:
    """Haversine great-circle distance on a 6371 km sphere.

    Accepts ``Location`` objects or ``(lat, lon)`` pairs.
    """
    lat1, lon1 = (loc1.lat, loc1.lon) if hasattr(loc1, "lat") else loc1
    lat2, lon2 = (loc2.lat, loc2.lon) if hasattr(loc2, "lat") else loc2
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized haversine; inputs broadcast, NaN propagates."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def location_similarity(d_km, kappa_km: float = DEFAULT_KAPPA_KM):
    """exp(-d / kappa): 1 at zero distance, strictly decreasing."""
    if np.ndim(d_km) == 0:
        if d_km < 0:
            raise ValueError("distance must be non-negative")
        return math.exp(-float(d_km) / kappa_km)
    return np.exp(-np.asarray(d_km, dtype=float) / kappa_km)


def phash64(data: bytes) -> int:
    """64-bit DCT perceptual hash of encoded image bytes (recipe above)."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            gray = img.convert("L").resize((32, 32), Image.Resampling.LANCZOS)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise UndecodableImageError(f"cannot decode image: {exc}") from None
    pixels = np.asarray(gray, dtype=np.float64)
    block = dctn(pixels, type=2, norm="ortho")[:8, :8].ravel()
    median = np.median(block[1:])
    value = 0
    for bit in block > median:
        value = (value << 1) | int(bit)
    return value


def hamming64(h1: int, h2: int) -> int:
    return (h1 ^ h2).bit_count()


def photo_similarity(h1: int, h2: int) -> float:
    return 1.0 - hamming64(h1, h2) / 64.0


def _directed_overlap(f1: Sequence[Friend], f2: Sequence[Friend]) -> int:
    screens = {normalize_name(f.screen_name) for f in f2}
    reals = {r for r in (normalize_name(f.real_name) for f in f2) if r}
    count = 0
    for f in f1:
        real = normalize_name(f.real_name)
        if normalize_name(f.screen_name) in screens or (real and real in reals):
            count += 1
    return count


def friends_overlap(f1: Sequence[Friend], f2: Sequence[Friend]) -> int:
    """Common friends: exact case-folded screen-name or real-name matches.

    Screen names are compared with screen names and real names with real
    names. The count is taken in both directions and the smaller one kept,
    so the result is symmetric and never exceeds min(|f1|, |f2|).
    """
    return min(_directed_overlap(f1, f2), _directed_overlap(f2, f1))


def raw_similarity(attr: AttributeKind, a1: Profile, a2: Profile) -> Optional[float]:
    """Attribute score in its native unit, ``None`` when missing on a side.

    Location is returned as a distance in km.
    """
    if not (a1.has(attr) and a2.has(attr)):
        return None
    if attr is AttributeKind.REAL_NAME:
        return jaro(a1.real_name, a2.real_name)
    if attr is AttributeKind.SCREEN_NAME:
        return jaro(a1.screen_name, a2.screen_name)
    if attr is AttributeKind.LOCATION:
        return geodesic_km(a1.location, a2.location)
    if attr is AttributeKind.PHOTO:
        return photo_similarity(a1.photo, a2.photo)
    return float(friends_overlap(a1.friends, a2.friends))


def featurize(a1: Profile, a2: Profile, kappa_km: float = DEFAULT_KAPPA_KM) -> FeatureVector:
    slots = []
    for attr in ATTRIBUTES:
        raw = raw_similarity(attr, a1, a2)
        if raw is not None and attr is AttributeKind.LOCATION:
            raw = location_similarity(raw, kappa_km)
        slots.append(raw)
    return FeatureVector(*slots)


# --- columnar batch scoring -------------------------------------------------

def _jaro_block(left: Sequence[str], right: Sequence[str]) -> np.ndarray:
    """Dense Jaro matrix over de-duplicated normalized strings."""
    ul, il = np.unique(np.asarray(left, dtype=object), return_inverse=True)
    ur, ir = np.unique(np.asarray(right, dtype=object), return_inverse=True)
    m = process.cdist(list(ul), list(ur), scorer=Jaro.normalized_similarity, dtype=np.float64)
    # rapidfuzz scores two empty strings as 1; the reference says 0
    m[np.asarray([len(s) == 0 for s in ul])] = 0.0
    m[:, np.asarray([len(s) == 0 for s in ur])] = 0.0
    return m[np.ix_(il, ir)]


def jaro_pairs(left: Sequence[str], right: Sequence[str]) -> np.ndarray:
    """Elementwise Jaro over aligned, already-normalized string lists."""
    if len(left) == 0:
        return np.zeros(0)
    out = process.cpdist(list(left), list(right), scorer=Jaro.normalized_similarity, dtype=np.float64)
    empty = np.fromiter((not a or not b for a, b in zip(left, right)), dtype=bool, count=len(left))
    out[empty] = 0.0
    return out


class ProfileTable:
    """Column-oriented, normalized view of a corpus for batch scoring."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        profiles = corpus.profiles
        n = len(profiles)
        self.real = [normalize_name(p.real_name) for p in profiles]
        self.has_real = np.array([bool(s) for s in self.real], dtype=bool)
        self.screen = [normalize_name(p.screen_name) for p in profiles]
        self.has_screen = np.array([bool(s) for s in self.screen], dtype=bool)
        self.lat = np.full(n, np.nan)
        self.lon = np.full(n, np.nan)
        self.photo = np.zeros(n, dtype=np.uint64)
        self.has_photo = np.zeros(n, dtype=bool)
        self.friend_screens: list = [None] * n
        self.friend_reals: list = [None] * n
        self.friend_pairs: list = [None] * n
        for i, p in enumerate(profiles):
            if p.location is not None:
                self.lat[i], self.lon[i] = p.location.lat, p.location.lon
            if p.photo is not None:
                self.photo[i] = np.uint64(p.photo)
                self.has_photo[i] = True
            if p.friends is not None:
                pairs = tuple((normalize_name(f.screen_name), normalize_name(f.real_name)) for f in p.friends)
                self.friend_pairs[i] = pairs
                self.friend_screens[i] = frozenset(s for s, _ in pairs)
                self.friend_reals[i] = frozenset(r for _, r in pairs if r)
        self.has_location = ~np.isnan(self.lat)
        self.has_friends = np.array([f is not None for f in self.friend_pairs], dtype=bool)
        self._postings = None

    def __len__(self):
        return len(self.real)

    def available(self, attr: AttributeKind) -> np.ndarray:
        return {
            AttributeKind.REAL_NAME: self.has_real,
            AttributeKind.SCREEN_NAME: self.has_screen,
            AttributeKind.LOCATION: self.has_location,
            AttributeKind.PHOTO: self.has_photo,
            AttributeKind.FRIENDS: self.has_friends,
        }[attr]

    def _friend_postings(self):
        """Key -> owning rows, and key -> friend-entry ids with each entry's owner."""
        if self._postings is None:
            screens: dict[str, list[int]] = {}
            reals: dict[str, list[int]] = {}
            screen_entries: dict[str, list[int]] = {}
            real_entries: dict[str, list[int]] = {}
            owner = []
            for i, pairs in enumerate(self.friend_pairs):
                if pairs is None:
                    continue
                for s in self.friend_screens[i]:
                    screens.setdefault(s, []).append(i)
                for r in self.friend_reals[i]:
                    reals.setdefault(r, []).append(i)
                for s, r in pairs:
                    e = len(owner)
                    owner.append(i)
                    screen_entries.setdefault(s, []).append(e)
                    if r:
                        real_entries.setdefault(r, []).append(e)
            to_arr = lambda d: {k: np.asarray(v, dtype=np.int64) for k, v in d.items()}
            self._postings = (to_arr(screens), to_arr(reals), to_arr(screen_entries), to_arr(real_entries),
                              np.asarray(owner, dtype=np.int64))
        return self._postings


def _friends_pair(fp1, screens2, reals2) -> int:
    count = 0
    for s, r in fp1:
        if s in screens2 or (r and r in reals2):
            count += 1
    return count


def _friends_both(t1: "ProfileTable", i: int, t2: "ProfileTable", j: int) -> int:
    return min(_friends_pair(t1.friend_pairs[i], t2.friend_screens[j], t2.friend_reals[j]),
               _friends_pair(t2.friend_pairs[j], t1.friend_screens[i], t1.friend_reals[i]))


def raw_pairs(attr: AttributeKind, t1: ProfileTable, rows1, t2: ProfileTable, rows2) -> np.ndarray:
    """Native-unit scores for aligned row pairs; NaN where missing."""
    rows1 = np.asarray(rows1, dtype=np.int64)
    rows2 = np.asarray(rows2, dtype=np.int64)
    ok = t1.available(attr)[rows1] & t2.available(attr)[rows2]
    out = np.full(len(rows1), np.nan)
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return out
    r1, r2 = rows1[idx], rows2[idx]
    if attr in (AttributeKind.REAL_NAME, AttributeKind.SCREEN_NAME):
        c1 = t1.real if attr is AttributeKind.REAL_NAME else t1.screen
        c2 = t2.real if attr is AttributeKind.REAL_NAME else t2.screen
        out[idx] = jaro_pairs([c1[i] for i in r1], [c2[j] for j in r2])
    elif attr is AttributeKind.LOCATION:
        out[idx] = haversine_km(t1.lat[r1], t1.lon[r1], t2.lat[r2], t2.lon[r2])
    elif attr is AttributeKind.PHOTO:
        out[idx] = 1.0 - np.bitwise_count(t1.photo[r1] ^ t2.photo[r2]) / 64.0
    else:
        out[idx] = [_friends_both(t1, i, t2, j) for i, j in zip(r1, r2)]
    return out


def raw_block(attr: AttributeKind, t1: ProfileTable, rows1, t2: ProfileTable) -> np.ndarray:
    """Native-unit scores of ``rows1`` against every row of ``t2``.

    Returns a ``(len(rows1), len(t2))`` matrix with NaN where missing.
    """
    rows1 = np.asarray(rows1, dtype=np.int64)
    n2 = len(t2)
    out = np.full((len(rows1), n2), np.nan)
    ok1 = t1.available(attr)[rows1]
    ok2 = t2.available(attr)
    if not ok1.any() or not ok2.any():
        return out
    left = rows1[ok1]
    cols = np.flatnonzero(ok2)
    if attr in (AttributeKind.REAL_NAME, AttributeKind.SCREEN_NAME):
        c1 = t1.real if attr is AttributeKind.REAL_NAME else t1.screen
        c2 = t2.real if attr is AttributeKind.REAL_NAME else t2.screen
        block = _jaro_block([c1[i] for i in left], [c2[j] for j in cols])
    elif attr is AttributeKind.LOCATION:
        block = haversine_km(t1.lat[left][:, None], t1.lon[left][:, None], t2.lat[cols][None, :], t2.lon[cols][None, :])
    elif attr is AttributeKind.PHOTO:
        block = 1.0 - np.bitwise_count(t1.photo[left][:, None] ^ t2.photo[cols][None, :]) / 64.0
    else:
        screens, reals, screen_entries, real_entries, owner = t2._friend_postings()
        block = np.zeros((len(left), n2))
        for k, i in enumerate(left):
            # rows of t2 holding a match for each probe friend, counted once per friend
            hits = []
            for s, r in t1.friend_pairs[i]:
                a = screens.get(s)
                b = reals.get(r) if r else None
                if a is None and b is None:
                    continue
                if a is None:
                    hits.append(np.unique(b))
                elif b is None:
                    hits.append(np.unique(a))
                else:
                    hits.append(np.union1d(a, b))
            if not hits:
                continue
            forward = np.bincount(np.concatenate(hits), minlength=n2)
            # friend entries of t2 that match any probe friend, counted once per entry
            entries = [screen_entries[s] for s in t1.friend_screens[i] if s in screen_entries]
            entries += [real_entries[r] for r in t1.friend_reals[i] if r in real_entries]
            backward = np.bincount(owner[np.unique(np.concatenate(entries))], minlength=n2)
            block[k] = np.minimum(forward, backward)
        block = block[:, cols]
    sub = np.full((len(left), n2), np.nan)
    sub[:, cols] = block
    out[ok1] = sub
    return out


class Featurizer:
    """Batch feature extraction between two corpora.

    Columns follow ``ATTRIBUTES``; MISSING slots are NaN and the location
    column holds ``location_similarity`` of the geodesic distance.
    """

    def __init__(self, sn1: Corpus, sn2: Corpus, kappa_km: float = DEFAULT_KAPPA_KM):
        self.sn1, self.sn2 = sn1, sn2
        self.kappa_km = kappa_km
        self.t1 = ProfileTable(sn1)
        self.t2 = self.t1 if sn2 is sn1 else ProfileTable(sn2)

    def rows(self, rows1, rows2) -> np.ndarray:
        rows1 = np.asarray(rows1, dtype=np.int64)
        X = np.empty((len(rows1), len(ATTRIBUTES)))
        for attr in ATTRIBUTES:
            col = raw_pairs(attr, self.t1, rows1, self.t2, rows2)
            if attr is AttributeKind.LOCATION:
                col = np.exp(-col / self.kappa_km)
            X[:, attr.slot] = col
        return X

    def pairs(self, ids1: Iterable[str], ids2: Iterable[str]) -> np.ndarray:
        return self.rows(self.sn1.positions(ids1), self.sn2.positions(ids2))

    def __call__(self, a1: Profile, a2: Profile) -> FeatureVector:
        return featurize(a1, a2, self.kappa_km)
