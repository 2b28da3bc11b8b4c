# vim: set sts=4 ts=8 sw=4 tw=99 et:
#
# This file is part of nirchem.
#
# nirchem is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# nirchem is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with nirchem. If not, see <http://www.gnu.org/licenses/>.
import multiprocessing as mp
import numpy as np
import pandas as pd
from nirchem import util
from nirchem.nn.losses import HUBER_DELTA, Huber

class PlsException(util.NirchemException):
    def __init__(self, *args, **kwargs):
        super(PlsException, self).__init__(*args, **kwargs)

DEFAULT_TOL = 1e-16
DEFAULT_MAX_ITER = 100000

# A weight vector is numerically zero when |X'u| falls below this fraction of
# |Xc| * |yc| (both centered, before any deflation).
ZERO_WEIGHT_TOLERANCE = 1e-10

# Absolute errors are never flagged below this fraction of std(y).
OUTLIER_FLOOR = 1e-9

HOLDOUT_OPTIMAL = 'holdout_optimal'
CV = 'cv'
CORRECTED_CV = 'corrected_cv'
STRATEGIES = [HOLDOUT_OPTIMAL, CV, CORRECTED_CV]

GLOBAL = 'global'
PER_INSTRUMENT = 'per_instrument'
OUTLIER_SCOPES = [GLOBAL, PER_INSTRUMENT]

class PlsModel(object):
    def __init__(self, x_mean, y_mean, weights, loadings, y_loadings):
        self.x_mean = np.array(x_mean, dtype = np.float64)
        self.y_mean = float(y_mean)
        self.weights = np.array(weights, dtype = np.float64).reshape(len(self.x_mean), -1)
        self.loadings = np.array(loadings, dtype = np.float64).reshape(len(self.x_mean), -1)
        self.y_loadings = np.array(y_loadings, dtype = np.float64).ravel()

        if self.n_components < 1:
            raise PlsException('a PLS model needs at least one component')
        if self.loadings.shape != self.weights.shape or len(self.y_loadings) != self.n_components:
            raise PlsException('inconsistent PLS model shapes: W {0}, P {1}, q {2}'.format(
                self.weights.shape, self.loadings.shape, self.y_loadings.shape))
        for name in ['x_mean', 'weights', 'loadings', 'y_loadings']:
            if not np.all(np.isfinite(getattr(self, name))):
                raise PlsException('PLS model field {0} is not finite'.format(name))

        # b = W (P'W)^-1 q
        inner = self.loadings.T @ self.weights
        self.regression_vector = self.weights @ np.linalg.solve(inner, self.y_loadings)

    @property
    def n_components(self):
        return self.weights.shape[1]

    @property
    def n_features(self):
        return len(self.x_mean)

    # NIPALS components are extracted one at a time, so the first |count| of
    # them are exactly the model that a fit with |count| components produces.
    def truncate(self, count):
        if not (1 <= count <= self.n_components):
            raise PlsException('cannot truncate a {0}-component model to {1}'.format(
                self.n_components, count))
        return PlsModel(self.x_mean, self.y_mean, self.weights[:, :count],
                        self.loadings[:, :count], self.y_loadings[:count])

    def _check(self, X):
        X = np.asarray(X, dtype = np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise PlsException('PLS model expects {0} columns, got shape {1}'.format(
                self.n_features, X.shape))
        return X

    def predict(self, X):
        X = self._check(X)
        return (X - self.x_mean) @ self.regression_vector + self.y_mean

    # Prediction by replaying the deflation; agrees with predict().
    def predict_by_deflation(self, X):
        residual = self._check(X) - self.x_mean
        y = np.full(len(residual), self.y_mean)
        for a in range(self.n_components):
            t = residual @ self.weights[:, a]
            y += self.y_loadings[a] * t
            residual = residual - np.outer(t, self.loadings[:, a])
        return y

    def to_json(self):
        return {
            'n_components': self.n_components,
            'x_mean': self.x_mean.tolist(),
            'y_mean': self.y_mean,
            'weights': self.weights.tolist(),
            'loadings': self.loadings.tolist(),
            'y_loadings': self.y_loadings.tolist(),
            'regression_vector': self.regression_vector.tolist(),
        }

    @staticmethod
    def from_json(obj):
        try:
            return PlsModel(obj['x_mean'], obj['y_mean'], obj['weights'], obj['loadings'],
                            obj['y_loadings'])
        except KeyError as exn:
            raise PlsException('PLS model is missing field {0}'.format(exn))

def _CheckData(X, y):
    X = np.asarray(X, dtype = np.float64)
    y = np.asarray(y, dtype = np.float64).ravel()
    if X.ndim != 2:
        raise PlsException('X must be a matrix, got shape {0}'.format(X.shape))
    if X.shape[0] != len(y):
        raise PlsException('X has {0} rows but y has {1} values'.format(X.shape[0], len(y)))
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise PlsException('PLS input contains non-finite values')
    return X, y

def MaxComponents(n_samples, n_features):
    return min(n_samples - 1, n_features)

# NIPALS PLS1 on column-centered data, no scaling.
def PlsFit(X, y, n_components, tol = DEFAULT_TOL, max_iter = DEFAULT_MAX_ITER):
    X, y = _CheckData(X, y)
    n, p = X.shape
    if n_components < 1 or n_components > MaxComponents(n, p):
        raise PlsException('{0} components requested, but at most min(n-1, p) = {1} '
                           'are possible for {2} samples and {3} wavelengths'.format(
                               n_components, max(MaxComponents(n, p), 0), n, p))
    if not tol > 0:
        raise PlsException('tolerance must be positive, got {0}'.format(tol))
    if max_iter < 1:
        raise PlsException('max_iter must be >= 1, got {0}'.format(max_iter))

    if np.ptp(y) == 0:
        raise PlsException('response has zero variance; PLS is undefined')
    x_mean = X.mean(axis = 0)
    y_mean = y.mean()
    Xr = X - x_mean
    yr = y - y_mean
    zero_norm = ZERO_WEIGHT_TOLERANCE * np.linalg.norm(Xr) * np.linalg.norm(yr)

    W = np.empty((p, n_components))
    P = np.empty((p, n_components))
    q = np.empty(n_components)
    for a in range(n_components):
        u = yr
        w_prev = None
        prev_change = np.inf
        for _ in range(max_iter):
            w = Xr.T @ u
            norm = np.linalg.norm(w)
            if not norm > zero_norm:
                raise PlsException(
                    'weight vector of component {0} is numerically zero (|w| = {1:.3g}); '
                    'the response is already explained'.format(a + 1, norm))
            w = w / norm
            t = Xr @ w
            tt = t @ t
            q_a = (yr @ t) / tt
            if q_a == 0:
                raise PlsException('component {0} does not covary with the response'.format(a + 1))
            u = yr / q_a
            if w_prev is not None:
                change = np.linalg.norm(w - w_prev)
                # For a single response the iteration is converged after one
                # pass; stop once rounding keeps the change from shrinking.
                if change < tol or change >= prev_change:
                    break
                prev_change = change
            w_prev = w

        W[:, a] = w
        P[:, a] = Xr.T @ t / tt
        q[a] = q_a
        Xr = Xr - np.outer(t, P[:, a])
        yr = yr - q_a * t

    return PlsModel(x_mean, y_mean, W, P, q)

# Component count plus one loss per candidate count. holdout_loss is None
# when no holdout set was scored.
class CvCurve(object):
    def __init__(self, components, train_loss, cv_loss, holdout_loss = None):
        self.components = np.array(components, dtype = np.int64)
        self.train_loss = np.array(train_loss, dtype = np.float64)
        self.cv_loss = np.array(cv_loss, dtype = np.float64)
        self.corrected_cv_loss = self.cv_loss + np.abs(self.cv_loss - self.train_loss)
        self.holdout_loss = None
        if holdout_loss is not None:
            self.holdout_loss = np.array(holdout_loss, dtype = np.float64)

        count = len(self.components)
        for name in ['train_loss', 'cv_loss', 'holdout_loss']:
            value = getattr(self, name)
            if value is not None and len(value) != count:
                raise PlsException('{0} has {1} entries for {2} component counts'.format(
                    name, len(value), count))

    def __len__(self):
        return len(self.components)

    def to_frame(self):
        holdout = self.holdout_loss
        if holdout is None:
            holdout = np.full(len(self), np.nan)
        return pd.DataFrame({
            'components': self.components,
            'train_loss': self.train_loss,
            'cv_loss': self.cv_loss,
            'corrected_cv_loss': self.corrected_cv_loss,
            'holdout_loss': holdout,
        })

    def to_json(self):
        obj = {
            'components': self.components.tolist(),
            'train_loss': self.train_loss.tolist(),
            'cv_loss': self.cv_loss.tolist(),
            'corrected_cv_loss': self.corrected_cv_loss.tolist(),
        }
        if self.holdout_loss is not None:
            obj['holdout_loss'] = self.holdout_loss.tolist()
        return obj

    def save_csv(self, path):
        try:
            self.to_frame().to_csv(path, index = False, float_format = util.TABLE_FLOAT_FORMAT,
                                   lineterminator = '\n')
        except OSError as exn:
            raise PlsException('could not write {0}: {1}'.format(path, exn.strerror))

def _ComponentRange(components, n_train, n_features):
    low, high = int(components[0]), int(components[1])
    if low < 1 or high < low:
        raise PlsException('bad component range [{0}, {1}]'.format(low, high))
    limit = MaxComponents(n_train, n_features)
    if high > limit:
        raise PlsException('component range reaches {0}, but the smallest training fold '
                           'allows at most {1}'.format(high, max(limit, 0)))
    return np.arange(low, high + 1)

# Losses of every truncation of one fitted model on (X, y).
def _TruncationLosses(model, counts, X, y, delta):
    return np.array([Huber(y - model.truncate(a).predict(X), delta) for a in counts])

def _FoldLosses(args):
    X, y, train_rows, test_rows, counts, delta, tol, max_iter = args
    model = PlsFit(X[train_rows], y[train_rows], counts[-1], tol, max_iter)
    return _TruncationLosses(model, counts, X[test_rows], y[test_rows], delta)

def FoldAssignment(n_samples, folds, seed = 0):
    if folds < 2:
        raise PlsException('cross-validation needs at least 2 folds, got {0}'.format(folds))
    if folds > n_samples:
        raise PlsException('{0} folds leave a fold with fewer than 1 of {1} samples'.format(
            folds, n_samples))
    order = np.random.default_rng(seed).permutation(n_samples)
    return [np.sort(fold) for fold in np.array_split(order, folds)]

# K-fold CV of the Huber loss for every component count in |components|.
# Each fold is fitted once at the largest count and truncated. Folds run in
# |jobs| worker processes; results are reduced in fold order.
def CrossValidate(X, y, folds = 10, components = (1, 30), delta = HUBER_DELTA, seed = 0,
                  jobs = 1, tol = DEFAULT_TOL, max_iter = DEFAULT_MAX_ITER,
                  holdout = None):
    X, y = _CheckData(X, y)
    fold_rows = FoldAssignment(len(y), folds, seed)
    smallest_train = len(y) - max(len(fold) for fold in fold_rows)
    counts = _ComponentRange(components, smallest_train, X.shape[1])

    tasks = []
    everything = np.arange(len(y))
    for rows in fold_rows:
        train_rows = np.setdiff1d(everything, rows, assume_unique = True)
        tasks.append((X, y, train_rows, rows, counts, delta, tol, max_iter))

    if jobs > 1 and len(tasks) > 1:
        with mp.Pool(min(jobs, len(tasks))) as pool:
            fold_losses = pool.map(_FoldLosses, tasks)
    else:
        fold_losses = [_FoldLosses(task) for task in tasks]
    cv_loss = np.mean(np.vstack(fold_losses), axis = 0)

    full = PlsFit(X, y, counts[-1], tol, max_iter)
    train_loss = _TruncationLosses(full, counts, X, y, delta)

    holdout_loss = None
    if holdout is not None:
        hX, hy = _CheckData(holdout[0], holdout[1])
        if len(hy) == 0:
            raise PlsException('holdout set is empty')
        holdout_loss = _TruncationLosses(full, counts, hX, hy, delta)

    return CvCurve(counts, train_loss, cv_loss, holdout_loss)

# Index into |curve| chosen by |strategy|; ties go to fewer components.
def PickComponents(curve, strategy):
    if strategy == HOLDOUT_OPTIMAL:
        if curve.holdout_loss is None:
            raise PlsException('strategy {0} needs holdout losses'.format(HOLDOUT_OPTIMAL))
        losses = curve.holdout_loss
    elif strategy == CV:
        losses = curve.cv_loss
    elif strategy == CORRECTED_CV:
        losses = curve.corrected_cv_loss
    else:
        raise PlsException('unknown component strategy "{0}"; expected one of {1}'.format(
            strategy, ', '.join(STRATEGIES)))
    return int(curve.components[int(np.argmin(losses))])

def SelectComponents(train, holdout, components = (1, 30), strategy = HOLDOUT_OPTIMAL,
                     folds = 10, delta = HUBER_DELTA, seed = 0, jobs = 1):
    if strategy not in STRATEGIES:
        raise PlsException('unknown component strategy "{0}"; expected one of {1}'.format(
            strategy, ', '.join(STRATEGIES)))
    scored = None
    if holdout is not None and len(holdout):
        scored = (holdout.absorbance, holdout.reference_mg)
    elif strategy == HOLDOUT_OPTIMAL:
        raise PlsException('strategy {0} needs a non-empty holdout set'.format(HOLDOUT_OPTIMAL))

    curve = CrossValidate(train.absorbance, train.reference_mg, folds, components, delta, seed,
                          jobs, holdout = scored)
    return PickComponents(curve, strategy), curve

def _OutlierMask(X, y, folds, components, sigma_mult, delta, seed, jobs):
    curve = CrossValidate(X, y, folds, components, delta, seed, jobs)
    best = PickComponents(curve, CV)
    model = PlsFit(X, y, best)
    errors = np.abs(y - model.predict(X))
    threshold = max(sigma_mult * np.std(errors), OUTLIER_FLOOR * np.std(y))
    return errors > threshold

# Single pass: pick the component count with the lowest mean CV Huber loss,
# refit on everything and drop samples whose absolute error exceeds
# sigma_mult * std(errors). Returns (kept set, removed sample ids).
def RemoveOutliers(spectra, folds = 10, components = (1, 30), sigma_mult = 2.5,
                   delta = HUBER_DELTA, seed = 0, scope = GLOBAL, jobs = 1):
    if not sigma_mult > 0:
        raise PlsException('sigma_mult must be positive, got {0}'.format(sigma_mult))
    if scope not in OUTLIER_SCOPES:
        raise PlsException('unknown outlier scope "{0}"; expected one of {1}'.format(
            scope, ', '.join(OUTLIER_SCOPES)))

    flagged = np.zeros(len(spectra), dtype = bool)
    if scope == GLOBAL:
        pools = [np.arange(len(spectra))]
    else:
        pools = [np.flatnonzero(spectra.instrument == i) for i in np.unique(spectra.instrument)]
    for rows in pools:
        flagged[rows] = _OutlierMask(spectra.absorbance[rows], spectra.reference_mg[rows], folds,
                                     components, sigma_mult, delta, seed, jobs)

    if flagged.all():
        raise PlsException('outlier removal flagged all {0} samples'.format(len(spectra)))
    kept = spectra.subset(np.flatnonzero(~flagged))
    return kept, [str(s) for s in spectra.sample_id[flagged]]
