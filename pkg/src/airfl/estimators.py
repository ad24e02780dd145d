"""scikit-learn style wrappers around the solver and the training loop.

``PDDScheduler`` fits a per-round schedule (users, beamformer, positions) to a
``ChannelSet``. ``OTAFederatedClassifier`` trains the logistic-regression
model over the air on ``(X, y)`` split into IID user shards.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import ConfigurationError, check_sample_counts
from .channel import ChannelSet
from .fltrain import model
from .fltrain.data import N_CLASSES, N_FEATURES, Dataset, partition_iid
from .fltrain.train import PDD, STATIC, TrainConfig, run_rounds, streams
from .ota import OtaConfig
from .pdd import PddConfig, solve
from .pdd.state import SHARED
from .pdd.updates import BINARY_EXACT
from .surrogate import objective_r


def _ota(est):
    return OtaConfig.from_dbm(est.max_power_dbm, est.noise_power_dbm, est.wavelength)


class PDDScheduler(BaseEstimator):
    """Joint user selection, receive beamforming and antenna positioning.

    Parameters mirror ``PddConfig`` plus the power budget and noise power in
    dBm. After ``fit`` the schedule is exposed as ``selection_``,
    ``beamformer_``, ``layout_`` and ``r_``.

    Examples:
        >>> sched = PDDScheduler().fit(channels, sample_counts)   # doctest: +SKIP
        >>> sched.predict(channels)                               # doctest: +SKIP
        array([ True, False,  True, ...])
    """

    def __init__(self, max_power_dbm=0.0, noise_power_dbm=-20.0, wavelength=1.0, kappa0=0.1,
                 penalty_decay=0.7, inner_tol=1e-6, outer_tol=1e-4, max_inner=50, max_outer=60,
                 e_update_mode=BINARY_EXACT, layout_mode=SHARED, warm_start=True):
        self.max_power_dbm = max_power_dbm
        self.noise_power_dbm = noise_power_dbm
        self.wavelength = wavelength
        self.kappa0 = kappa0
        self.penalty_decay = penalty_decay
        self.inner_tol = inner_tol
        self.outer_tol = outer_tol
        self.max_inner = max_inner
        self.max_outer = max_outer
        self.e_update_mode = e_update_mode
        self.layout_mode = layout_mode
        self.warm_start = warm_start

    def _config(self):
        return PddConfig(kappa0=self.kappa0, penalty_decay=self.penalty_decay,
                         inner_tol=self.inner_tol, outer_tol=self.outer_tol,
                         max_inner=self.max_inner, max_outer=self.max_outer,
                         e_update_mode=self.e_update_mode, layout_mode=self.layout_mode)

    @staticmethod
    def _check_channels(channels):
        if not isinstance(channels, ChannelSet):
            raise TypeError(f"expected a ChannelSet, got {type(channels).__name__}")
        return channels

    def fit(self, channels, sample_counts=None):
        """Solve one round on ``channels``; ``sample_counts`` default to the links' counts."""
        channels = self._check_channels(channels)
        if sample_counts is None:
            sample_counts = channels.sample_counts
        S = check_sample_counts(sample_counts, channels.n_users)
        start = getattr(self, "layout_", None) if self.warm_start else None
        if start is not None and start.n_antennas != channels.n_antennas:
            start = None
        res = solve(channels, S, _ota(self), self._config(), init_layout=start)
        self.result_ = res
        self.selection_ = res.selection.copy()
        self.beamformer_ = res.beamformer.copy()
        self.layout_ = res.layout
        self.r_ = float(res.r_value)
        self.sample_counts_ = S
        self.n_users_in_ = channels.n_users
        return self

    def predict(self, channels):
        """Selection mask under the fitted beamformer and layout.

        Users are kept when they were selected at fit time; for a channel set
        with a different user count the schedule is re-solved warm-started
        from the fitted layout.
        """
        check_is_fitted(self, "selection_")
        channels = self._check_channels(channels)
        if channels.n_users == self.n_users_in_:
            return self.selection_.copy()
        return solve(channels, channels.sample_counts, _ota(self), self._config(),
                     init_layout=self.layout_).selection

    def score(self, channels, sample_counts=None):
        """Negative surrogate ``-r`` of the fitted schedule on ``channels`` (higher is better)."""
        check_is_fitted(self, "selection_")
        channels = self._check_channels(channels)
        if channels.n_users != self.n_users_in_:
            raise ValueError(f"fitted for {self.n_users_in_} users, got {channels.n_users}")
        S = self.sample_counts_ if sample_counts is None else check_sample_counts(
            sample_counts, channels.n_users)
        ch = channels.at_layout(self.layout_)
        return -objective_r(self.beamformer_, self.selection_, ch, S, _ota(self))


class OTAFederatedClassifier(ClassifierMixin, BaseEstimator):
    """Multinomial logistic regression trained by FedSGD over the air.

    ``fit`` shuffles ``(X, y)`` into ``n_users`` equal IID shards (leftover
    samples are dropped) and runs ``rounds`` communication rounds under the
    chosen scheme. Training metrics are measured on the full training set and
    kept in ``history_``.
    """

    def __init__(self, scheme=PDD, rounds=50, learning_rate=0.05, n_users=10, n_antennas=4,
                 max_power_dbm=0.0, noise_power_dbm=-20.0, wavelength=1.0,
                 channel_mode=STATIC, distance_range=(10.0, 100.0), dc_threshold=None,
                 random_state=0):
        self.scheme = scheme
        self.rounds = rounds
        self.learning_rate = learning_rate
        self.n_users = n_users
        self.n_antennas = n_antennas
        self.max_power_dbm = max_power_dbm
        self.noise_power_dbm = noise_power_dbm
        self.wavelength = wavelength
        self.channel_mode = channel_mode
        self.distance_range = distance_range
        self.dc_threshold = dc_threshold
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if X.shape[1] != N_FEATURES:
            raise ValueError(f"X must have {N_FEATURES} columns, got {X.shape[1]}")
        y = np.asarray(y)
        if not np.issubdtype(y.dtype, np.integer) or y.min() < 0 or y.max() >= N_CLASSES:
            raise ValueError(f"y must hold integer labels in [0, {N_CLASSES - 1}]")
        per_user = X.shape[0] // self.n_users
        if per_user < 1:
            raise ConfigurationError(f"{X.shape[0]} samples cannot fill {self.n_users} shards")
        cfg = TrainConfig(rounds=self.rounds, learning_rate=self.learning_rate,
                          users=self.n_users, per_user_samples=per_user, scheme=self.scheme,
                          seed=self.random_state, n_antennas=self.n_antennas,
                          channel_mode=self.channel_mode,
                          distance_range=tuple(self.distance_range), ota=_ota(self),
                          dc_threshold=self.dc_threshold)
        full = Dataset(X, y)
        shards = partition_iid(full, self.n_users, per_user, streams(self.random_state)[0])
        self.history_, self.coef_ = run_rounds(cfg, shards, full)
        self.classes_ = np.arange(N_CLASSES)
        self.n_features_in_ = N_FEATURES
        return self

    def _check_X(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X must have {self.n_features_in_} columns, got {X.shape[1]}")
        return X

    def predict_proba(self, X):
        return model.predict_proba(self.coef_, self._check_X(X))

    def predict(self, X):
        X = self._check_X(X)
        return self.classes_[model.predict(self.coef_, X)]


__all__ = ["OTAFederatedClassifier", "PDDScheduler"]
