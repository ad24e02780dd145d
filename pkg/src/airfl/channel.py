"""Uplink channels for a server-side linear array of movable antennas.

A user at AoA cosine ``cos(theta)`` sees the array through the steering
vector ``a(x)[n] = exp(j * 2*pi/lambda * x[n] * cos(theta))`` scaled by a
complex path gain whose power follows the COST Hata model. A Rayleigh
sampler is kept for the fixed-position comparison mode, in which the
channel does not depend on antenna coordinates at all.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import ConfigurationError, check_finite_vector, check_scalar

LOS_MA = "los-ma"
RAYLEIGH_FPA = "rayleigh-fpa"
CHANNEL_MODES = (LOS_MA, RAYLEIGH_FPA)

DEFAULT_WAVELENGTH = 1.0
DEFAULT_REGION_WAVELENGTHS = 8.0
DEFAULT_SAMPLES_PER_USER = 270


@dataclass(frozen=True)
class AntennaLayout:
    """Coordinates of the movable antennas on the segment ``[region_lo, region_hi]``."""

    positions: np.ndarray
    region_lo: float = 0.0
    region_hi: float = DEFAULT_REGION_WAVELENGTHS * DEFAULT_WAVELENGTH
    min_gap: float = DEFAULT_WAVELENGTH / 2

    def __post_init__(self):
        pos = check_finite_vector(self.positions, "positions")
        object.__setattr__(self, "positions", pos)
        if self.region_hi < self.region_lo:
            raise ConfigurationError("region_hi must not be below region_lo")
        if self.min_gap < 0:
            raise ConfigurationError("min_gap must be non-negative")

    @property
    def n_antennas(self):
        return self.positions.size

    @classmethod
    def default(cls, n_antennas, wavelength=DEFAULT_WAVELENGTH):
        """Equispaced layout on ``[0, 8 lambda]`` with half-wavelength minimum gap."""
        return cls.equispaced(
            n_antennas, 0.0, DEFAULT_REGION_WAVELENGTHS * wavelength, wavelength / 2
        )

    @classmethod
    def equispaced(cls, n_antennas, region_lo, region_hi, min_gap):
        """Antennas spread at ``max(min_gap, |C| / N)`` starting from ``region_lo``."""
        check_region_fits(n_antennas, region_lo, region_hi, min_gap)
        if n_antennas == 1:
            return cls(np.array([region_lo]), region_lo, region_hi, min_gap)
        gap = max(min_gap, (region_hi - region_lo) / n_antennas)
        gap = min(gap, (region_hi - region_lo) / (n_antennas - 1))
        pos = region_lo + gap * np.arange(n_antennas)
        return cls(pos, region_lo, region_hi, min_gap).projected()

    @classmethod
    def compact(cls, n_antennas, region_lo, region_hi, min_gap):
        """Conventional fixed array: packed at ``min_gap`` from ``region_lo``."""
        check_region_fits(n_antennas, region_lo, region_hi, min_gap)
        pos = region_lo + min_gap * np.arange(n_antennas)
        return cls(pos, region_lo, region_hi, min_gap).projected()

    def with_positions(self, positions):
        return AntennaLayout(np.asarray(positions, float), self.region_lo,
                             self.region_hi, self.min_gap)

    def is_feasible(self):
        p = self.positions
        if np.any(p < self.region_lo) or np.any(p > self.region_hi):
            return False
        if p.size < 2:
            return True
        diffs = np.abs(p[:, None] - p[None, :])
        np.fill_diagonal(diffs, np.inf)
        return bool(np.all(diffs >= self.min_gap))

    def check_feasible(self):
        if not self.is_feasible():
            raise ConfigurationError(
                f"layout violates region [{self.region_lo}, {self.region_hi}] "
                f"or spacing {self.min_gap}: {self.positions}"
            )
        return self

    def projected(self):
        """Nearby feasible layout: sort, enforce gaps left to right, then clamp to C."""
        n = self.n_antennas
        check_region_fits(n, self.region_lo, self.region_hi, self.min_gap)
        lo, hi, v = self.region_lo, self.region_hi, self.min_gap
        p = np.sort(self.positions).astype(float)
        p[0] = max(p[0], lo)
        for i in range(1, n):
            p[i] = max(p[i], _at_least_gap(p[i - 1], v))
        if p[-1] > hi:
            p[-1] = hi
            for i in range(n - 2, -1, -1):
                p[i] = min(p[i], _at_most_gap(p[i + 1], v))
        p = np.clip(p, lo, hi)
        return AntennaLayout(p, lo, hi, v)


def _at_least_gap(left, gap):
    nxt = left + gap
    while nxt - left < gap:
        nxt = np.nextafter(nxt, np.inf)
    return nxt


def _at_most_gap(right, gap):
    prev = right - gap
    while right - prev < gap:
        prev = np.nextafter(prev, -np.inf)
    return prev


def check_region_fits(n_antennas, region_lo, region_hi, min_gap):
    if n_antennas < 1:
        raise ConfigurationError("at least one antenna is required")
    # tolerance keeps exact-fit regions such as N=17 on [0, 8] at gap 0.5 valid
    if (n_antennas - 1) * min_gap > (region_hi - region_lo) * (1 + 1e-12):
        raise ConfigurationError(
            f"region of length {region_hi - region_lo} cannot host {n_antennas} "
            f"antennas at gap {min_gap}"
        )


@dataclass(frozen=True)
class UserLink:
    """Generating parameters of one user's line-of-sight link."""

    distance_m: float
    aoa_cos: float
    path_gain: complex
    sample_count: int = DEFAULT_SAMPLES_PER_USER

    def __post_init__(self):
        check_scalar(self.distance_m, "distance_m", lo=0.0, lo_inclusive=False)
        check_scalar(self.aoa_cos, "aoa_cos", lo=-1.0, hi=1.0)
        if not np.isfinite(complex(self.path_gain)):
            raise ValueError("path_gain must be finite")
        if self.sample_count < 1:
            raise ValueError("sample_count must be positive")


@dataclass(frozen=True)
class ChannelSet:
    """Per-user channel vectors ``h`` (shape ``(U, N_T)``) and how they were made."""

    h: np.ndarray
    wavelength: float = DEFAULT_WAVELENGTH
    mode: str = LOS_MA
    links: tuple = field(default=())
    layout: AntennaLayout = None

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.h, dtype=np.complex128))
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "links", tuple(self.links))
        if self.mode not in CHANNEL_MODES:
            raise ValueError(f"unknown channel mode {self.mode!r}")

    @property
    def n_users(self):
        return self.h.shape[0]

    @property
    def n_antennas(self):
        return self.h.shape[1]

    @property
    def path_gains(self):
        return np.array([link.path_gain for link in self.links], dtype=np.complex128)

    @property
    def aoa_cos(self):
        return np.array([link.aoa_cos for link in self.links], dtype=float)

    @property
    def sample_counts(self):
        return np.array([link.sample_count for link in self.links], dtype=float)

    def at_layout(self, layout):
        """Rebuild the channel for a new layout (LoS) or return self (Rayleigh)."""
        if self.mode == RAYLEIGH_FPA:
            return self
        return build_los_channel(layout, self.links, self.wavelength)


def steering_vector(layout, wavelength, aoa_cos):
    """Unit-modulus array response of ``layout`` toward an AoA with cosine ``aoa_cos``."""
    positions = layout.positions if isinstance(layout, AntennaLayout) else layout
    positions = check_finite_vector(positions, "positions")
    check_scalar(wavelength, "wavelength", lo=0.0, lo_inclusive=False)
    phase = (2 * np.pi / wavelength) * positions * aoa_cos
    return np.exp(1j * phase)


def cost_hata_pl_db(distance_m):
    """COST Hata path loss ``139.1 + 35.22 log10(d[km])`` in dB."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("distance must be finite and strictly positive")
    pl = 139.1 + 35.22 * np.log10(d / 1000.0)
    return float(pl) if pl.ndim == 0 else pl


def path_gain_from_db(pl_db, phase=0.0):
    """Complex gain with power ``10^(-pl_db/10)`` and the given phase."""
    return np.sqrt(10.0 ** (-pl_db / 10.0)) * np.exp(1j * phase)


def build_los_channel(layout, links, wavelength=DEFAULT_WAVELENGTH):
    """Stack ``h_u = beta_u * a(x; cos theta_u)`` for every link."""
    if not isinstance(layout, AntennaLayout):
        layout = AntennaLayout(np.asarray(layout, float))
    links = tuple(links)
    h = np.empty((len(links), layout.n_antennas), dtype=np.complex128)
    for u, link in enumerate(links):
        h[u] = link.path_gain * steering_vector(layout, wavelength, link.aoa_cos)
    return ChannelSet(h, wavelength, LOS_MA, links, layout)


def sample_rayleigh(pl_db, n_antennas, rng):
    """Draw ``h ~ CN(0, 10^(-pl_db/10) I)``; ``pl_db = inf`` gives the zero vector."""
    if np.isposinf(pl_db):
        return np.zeros(n_antennas, dtype=np.complex128)
    var = 10.0 ** (-pl_db / 10.0)
    re = rng.standard_normal(n_antennas)
    im = rng.standard_normal(n_antennas)
    return np.sqrt(var / 2) * (re + 1j * im)


def draw_links(n_users, rng, distance_range=(10.0, 100.0),
               sample_counts=DEFAULT_SAMPLES_PER_USER):
    """Random user geometry: uniform distance, ``cos(theta) ~ U[-1, 1]``, uniform gain phase."""
    counts = np.broadcast_to(np.asarray(sample_counts, dtype=int), (n_users,))
    links = []
    for u in range(n_users):
        d = rng.uniform(*distance_range)
        aoa = rng.uniform(-1.0, 1.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        gain = path_gain_from_db(cost_hata_pl_db(d), phase)
        links.append(UserLink(float(d), float(aoa), complex(gain), int(counts[u])))
    return tuple(links)


def build_rayleigh_channel(links, n_antennas, rng, wavelength=DEFAULT_WAVELENGTH,
                           layout=None):
    """Position-independent Rayleigh channels sharing the links' path loss."""
    h = np.stack([sample_rayleigh(cost_hata_pl_db(link.distance_m), n_antennas, rng)
                  for link in links])
    return ChannelSet(h, wavelength, RAYLEIGH_FPA, tuple(links), layout)


def refresh_phases(links, rng):
    """New uniform path-gain phases with unchanged magnitudes (fading mode)."""
    out = []
    for link in links:
        phase = rng.uniform(0.0, 2 * np.pi)
        out.append(UserLink(link.distance_m, link.aoa_cos,
                            complex(abs(link.path_gain) * np.exp(1j * phase)),
                            link.sample_count))
    return tuple(out)
