"""FedSGD over the air: per-round scheduling, aggregation and metrics."""

import logging
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .. import baselines
from .._io import fmt, write_csv
from .._validation import ConfigurationError
from ..channel import AntennaLayout, build_los_channel, draw_links, refresh_phases
from ..ota import OtaConfig, aggregate
from ..pdd import PddConfig, solve
from . import model
from .data import holdout_split, load_bundled_mnist, load_mnist_idx, partition_iid

logger = logging.getLogger(__name__)

PDD = "pdd"
SCHEMES = (PDD,) + baselines.KINDS
STATIC = "static"
FADING = "fading"
METRIC_COLUMNS = ("round", "scheme", "r", "selected", "eta", "test_loss", "test_acc",
                  "violation", "wall_ms")


@dataclass(frozen=True)
class DataPaths:
    """Optional IDX files; with no training files the bundled subset is used."""

    train_images: str = None
    train_labels: str = None
    test_images: str = None
    test_labels: str = None

    def __post_init__(self):
        for a, b in (("train_images", "train_labels"), ("test_images", "test_labels")):
            if (getattr(self, a) is None) != (getattr(self, b) is None):
                raise ConfigurationError(f"{a} and {b} must be given together")
        if self.test_images is not None and self.train_images is None:
            raise ConfigurationError("test files need training files as well")


@dataclass(frozen=True)
class TrainConfig:
    """One training run.

    ``dc_threshold=None`` matches the dc-like-greedy noise budget to the
    noise term of the PDD solution on the same channels.
    """

    rounds: int = 50
    learning_rate: float = 0.05
    users: int = 10
    per_user_samples: int = 270
    scheme: str = PDD
    seed: int = 0
    n_antennas: int = 4
    channel_mode: str = STATIC
    test_size: int = 2000
    distance_range: tuple = (10.0, 100.0)
    ota: OtaConfig = field(default_factory=lambda: OtaConfig.from_dbm(0.0, -20.0))
    pdd: PddConfig = field(default_factory=PddConfig)
    dc_threshold: float = None
    aps_resolution: float = None
    data: DataPaths = field(default_factory=DataPaths)
    record_time: bool = False

    def __post_init__(self):
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise ConfigurationError("rounds must be a positive integer")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.users < 1 or self.per_user_samples < 1 or self.n_antennas < 1:
            raise ConfigurationError("users, per_user_samples and n_antennas must be positive")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.channel_mode not in (STATIC, FADING):
            raise ConfigurationError(f"channel_mode must be {STATIC!r} or {FADING!r}")
        if self.dc_threshold is not None and not self.dc_threshold > 0:
            raise ConfigurationError("dc_threshold must be positive")
        lo, hi = self.distance_range
        if not 0 < lo <= hi:
            raise ConfigurationError("distance_range must satisfy 0 < lo <= hi")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")


@dataclass
class RoundMetrics:
    round: int
    scheme: str
    r: float
    selected: int
    eta: float
    test_loss: float
    test_acc: float
    violation: float
    wall_ms: float

    def as_row(self):
        return [fmt(getattr(self, f.name)) for f in fields(self)]


def streams(seed):
    """Independent generators for data, channels, receiver noise and scheme randomness."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def prepare_data(cfg, rng):
    """Training shards and the held-out test set."""
    paths = cfg.data
    if paths.train_images is None:
        pool = load_bundled_mnist()
        train, test = holdout_split(pool, cfg.test_size, rng)
    else:
        train = load_mnist_idx(paths.train_images, paths.train_labels)
        if paths.test_images is None:
            train, test = holdout_split(train, cfg.test_size, rng)
        else:
            full = load_mnist_idx(paths.test_images, paths.test_labels)
            test = full if cfg.test_size >= len(full) else holdout_split(full, cfg.test_size, rng)[1]
    return partition_iid(train, cfg.users, cfg.per_user_samples, rng), test


class Scheduler:
    """Produces ``(q, e, layout)`` for the configured scheme, caching what stays fixed."""

    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.rng = rng
        lam = cfg.ota.wavelength
        self.region = dict(region_lo=0.0, region_hi=8.0 * lam, min_gap=lam / 2)
        self.layout = None          # scheme-chosen layout reused across rounds
        self.last = None

    def plan(self, links):
        cfg, S = self.cfg, np.array([l.sample_count for l in links], dtype=float)
        N = cfg.n_antennas
        base = self.layout or AntennaLayout.equispaced(N, **self.region)
        ch = build_los_channel(base, links, cfg.ota.wavelength)
        kind = cfg.scheme
        if kind == PDD:
            res = solve(ch, S, cfg.ota, cfg.pdd, init_layout=self.layout)
        elif kind == baselines.SELECT_ALL:
            res = baselines.select_all(ch, S, cfg.ota, cfg.pdd, init_layout=self.layout)
        elif kind == baselines.FPA:
            res = baselines.fixed_layout_solve(ch, S, cfg.ota, baselines.fpa_layout(N, **self.region),
                                               cfg.pdd)
        elif kind == baselines.RMA:
            if self.layout is None:
                self.layout = baselines.rma_layout(N, self.rng, **self.region)
            res = baselines.fixed_layout_solve(ch, S, cfg.ota, self.layout, cfg.pdd)
        elif kind == baselines.APS:
            layout = baselines.aps_layout(ch, S, cfg.ota, cfg.aps_resolution)
            res = baselines.fixed_layout_solve(ch, S, cfg.ota, layout, cfg.pdd)
        elif kind == baselines.MRT:
            res = baselines.mrt_scheme(ch, S, cfg.ota, baselines.fpa_layout(N, **self.region))
        else:
            J = cfg.dc_threshold
            if J is None:
                ref = solve(ch, S, cfg.ota, cfg.pdd)
                J = baselines.noise_budget(ref.beamformer, ref.selection,
                                           ch.at_layout(ref.layout), S, cfg.ota)
            res = baselines.dc_like_greedy(ch, S, cfg.ota, J, baselines.fpa_layout(N, **self.region))
        if kind in (PDD, baselines.SELECT_ALL):
            self.layout = res.layout
        self.last = res
        return res


def train(cfg, on_round=None):
    """Run ``cfg.rounds`` FedSGD rounds and return one ``RoundMetrics`` per round."""
    data_rng = streams(cfg.seed)[0]
    shards, test = prepare_data(cfg, data_rng)
    return run_rounds(cfg, shards, test, on_round)[0]


def run_rounds(cfg, shards, test, on_round=None):
    """FedSGD over the given shards; returns ``(metrics, final weights)``.

    Channel, noise and scheme randomness come from ``cfg.seed`` exactly as in
    ``train``, so both entry points agree on identical data.
    """
    if len(shards) != cfg.users:
        raise ConfigurationError(f"expected {cfg.users} shards, got {len(shards)}")
    _, channel_rng, noise_rng, scheme_rng = streams(cfg.seed)
    S = np.array([len(s) for s in shards], dtype=float)
    links = draw_links(cfg.users, channel_rng, cfg.distance_range, S.astype(int))
    sched = Scheduler(cfg, scheme_rng)
    w = model.zeros()
    plan = None
    history = []
    for t in range(1, cfg.rounds + 1):
        start = time.perf_counter()
        if cfg.channel_mode == FADING and t > 1:
            links = refresh_phases(links, channel_rng)
            plan = None
        if plan is None:
            plan = sched.plan(links)
            if not plan.converged and plan.iterations[0]:
                logger.warning("round %d: solver stopped with violation %.3g", t, plan.violation)
        ch = build_los_channel(plan.layout, links, cfg.ota.wavelength)
        grads = {int(u): model.local_loss_grad(w, shards[u])[1] for u in np.flatnonzero(plan.selection)}
        out = aggregate(grads, ch, plan.beamformer, plan.selection, S, cfg.ota, noise_rng)
        w = w - cfg.learning_rate * out.estimate
        loss, acc = model.evaluate(w, test)
        elapsed = (time.perf_counter() - start) * 1e3 if cfg.record_time else 0.0
        row = RoundMetrics(t, cfg.scheme, float(plan.r_value), int(plan.selected_count),
                           float(out.eta), float(loss), float(acc), float(plan.violation),
                           float(elapsed))
        history.append(row)
        if on_round is not None:
            on_round(row, w)
    return history, w


def ideal_trajectory(shards, rounds, learning_rate, selected=None):
    """Noise-free FedSGD: the sample-weighted mean gradient step, for reference runs."""
    users = range(len(shards)) if selected is None else np.flatnonzero(selected)
    S = np.array([len(shards[u]) for u in users], dtype=float)
    w = model.zeros()
    out = [w]
    for _ in range(rounds):
        g = sum(s * model.local_loss_grad(w, shards[u])[1] for s, u in zip(S, users)) / S.sum()
        w = w - learning_rate * g
        out.append(w)
    return out


def write_metrics(rows, path):
    """Write metrics to ``path`` atomically (temporary file, then rename)."""
    write_csv(path, METRIC_COLUMNS, (row.as_row() for row in rows))
