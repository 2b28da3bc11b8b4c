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
import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.stats
from nirchem.hyperopt.space import HyperoptException

class GpException(HyperoptException):
    def __init__(self, *args, **kwargs):
        super(GpException, self).__init__(*args, **kwargs)

SQRT5 = np.sqrt(5.0)

RESTARTS = 8
JITTER_START = 1e-10
JITTER_MAX = 1e-4

# Search box for the log hyperparameters, on unit-cube inputs and
# standardized outputs.
LOG_LENGTH_BOUNDS = (np.log(1e-2), np.log(1e2))
LOG_SIGNAL_BOUNDS = (np.log(1e-2), np.log(1e2))
LOG_NOISE_BOUNDS = (np.log(1e-10), np.log(1e-1))

def _ScaledDiffs(A, B, length_scales):
    return (A[:, None, :] - B[None, :, :]) / length_scales

def Matern52(A, B, length_scales, signal_var):
    r = np.sqrt(np.sum(_ScaledDiffs(A, B, length_scales)**2, axis = 2))
    return signal_var * (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)

def _Cholesky(K):
    jitter = JITTER_START
    eye = np.eye(len(K))
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return scipy.linalg.cho_factor(K + jitter * eye, lower = True), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise GpException('kernel matrix is not positive definite even with jitter {0:g}'.format(
        JITTER_MAX))

# Negative log marginal likelihood and its gradient with respect to
# theta = log([length_scales..., signal_var, noise_var]).
def _NegLogLikelihood(theta, U, y):
    d = U.shape[1]
    length_scales = np.exp(theta[:d])
    signal_var = np.exp(theta[d])
    noise_var = np.exp(theta[d + 1])

    sq = _ScaledDiffs(U, U, length_scales)**2
    r = np.sqrt(np.sum(sq, axis = 2))
    decay = np.exp(-SQRT5 * r)
    signal = signal_var * (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * decay
    K = signal + (noise_var + JITTER_START) * np.eye(len(y))
    try:
        factor = scipy.linalg.cho_factor(K, lower = True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)

    alpha = scipy.linalg.cho_solve(factor, y)
    nll = 0.5 * y @ alpha + np.sum(np.log(np.diag(factor[0]))) + 0.5 * len(y) * np.log(2 * np.pi)

    inner = scipy.linalg.cho_solve(factor, np.eye(len(y))) - np.outer(alpha, alpha)
    grad = np.empty_like(theta)
    common = signal_var * (5.0 / 3.0) * (1.0 + SQRT5 * r) * decay
    for k in range(d):
        grad[k] = 0.5 * np.sum(inner * common * sq[:, :, k])
    grad[d] = 0.5 * np.sum(inner * signal)
    grad[d + 1] = 0.5 * noise_var * np.trace(inner)
    return nll, grad

class GpModel(object):
    def __init__(self, U, y, y_mean, y_std, lower, upper, length_scales, signal_var, noise_var):
        self.U = U
        self.y = y
        self.y_mean = y_mean
        self.y_std = y_std
        self.lower = lower
        self.upper = upper
        self.length_scales = length_scales
        self.signal_var = signal_var
        self.noise_var = noise_var

        # Constant observations: the posterior is the constant itself.
        self.degenerate = y_std == 0
        K = Matern52(U, U, length_scales, signal_var)
        K[np.diag_indices_from(K)] += noise_var
        self.factor, self.jitter = _Cholesky(K)
        self.alpha = scipy.linalg.cho_solve(self.factor, y)

    @property
    def prior_variance(self):
        return 0.0 if self.degenerate else self.y_std**2 * self.signal_var

    def scale(self, X):
        return (np.asarray(X, dtype = np.float64) - self.lower) / (self.upper - self.lower)

    # Posterior mean and latent-function variance at each row of |X|.
    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype = np.float64))
        if self.degenerate:
            return np.full(len(X), self.y_mean), np.zeros(len(X))
        k = Matern52(self.scale(X), self.U, self.length_scales, self.signal_var)
        mean = k @ self.alpha
        v = scipy.linalg.solve_triangular(self.factor[0], k.T, lower = True)
        var = np.maximum(self.signal_var - np.sum(v * v, axis = 0), 0.0)
        return self.y_mean + self.y_std * mean, var * self.y_std**2

def _Collapse(U, y):
    unique, inverse = np.unique(U, axis = 0, return_inverse = True)
    inverse = np.asarray(inverse).ravel()
    sums = np.bincount(inverse, weights = y)
    counts = np.bincount(inverse)
    return unique, sums / counts

# Fits an anisotropic Matern-5/2 GP. Hyperparameters maximize the marginal
# likelihood from RESTARTS seeded starting points unless |fixed| supplies
# them as a dict with length_scales, signal_var and noise_var (unit-cube and
# standardized scale).
def GpFit(X, y, bounds, seed = 0, restarts = RESTARTS, fixed = None):
    X = np.atleast_2d(np.asarray(X, dtype = np.float64))
    y = np.asarray(y, dtype = np.float64).ravel()
    bounds = np.asarray(bounds, dtype = np.float64)
    if len(X) != len(y):
        raise GpException('{0} points but {1} observations'.format(len(X), len(y)))
    if len(y) < 2:
        raise GpException('a GP needs at least 2 observations, got {0}'.format(len(y)))
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise GpException('GP observations must be finite')
    lower, upper = bounds[:, 0], bounds[:, 1]
    d = len(lower)

    U, y = _Collapse((X - lower) / (upper - lower), y)
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    z = (y - y_mean) / y_std if y_std > 0 else np.zeros_like(y)

    if fixed is not None:
        return GpModel(U, z, y_mean, y_std, lower, upper,
                       np.broadcast_to(np.asarray(fixed['length_scales'], dtype = np.float64),
                                       (d,)).copy(),
                       float(fixed['signal_var']), float(fixed['noise_var']))
    if y_std == 0:
        return GpModel(U, z, y_mean, y_std, lower, upper, np.ones(d), 1.0, 1e-6)

    box = np.array([LOG_LENGTH_BOUNDS] * d + [LOG_SIGNAL_BOUNDS, LOG_NOISE_BOUNDS])

    rng = np.random.default_rng([seed, 7])
    starts = [np.concatenate([np.full(d, np.log(0.5)), [0.0], [np.log(1e-6)]])]
    while len(starts) < restarts:
        starts.append(rng.uniform(box[:, 0], box[:, 1]))

    best = None
    for start in starts:
        start = np.clip(start, box[:, 0], box[:, 1])
        result = scipy.optimize.minimize(_NegLogLikelihood, start, args = (U, z), jac = True,
                                         method = 'L-BFGS-B', bounds = box)
        if np.isfinite(result.fun) and (best is None or result.fun < best.fun):
            best = result
    if best is None:
        raise GpException('marginal likelihood optimization failed from every start')

    theta = best.x
    return GpModel(U, z, y_mean, y_std, lower, upper, np.exp(theta[:d]), float(np.exp(theta[d])),
                   float(np.exp(theta[d + 1])))

def GpPosterior(model, x):
    mean, var = model.predict(np.asarray(x, dtype = np.float64)[None, :])
    return float(mean[0]), float(var[0])

# Expected improvement below |best_y| for a Gaussian with |mean| and |var|.
def ExpectedImprovement(mean, var, best_y):
    mean = np.asarray(mean, dtype = np.float64)
    sigma = np.sqrt(np.maximum(np.asarray(var, dtype = np.float64), 0.0))
    gain = best_y - mean
    with np.errstate(divide = 'ignore', invalid = 'ignore'):
        z = np.where(sigma > 0, gain / np.where(sigma > 0, sigma, 1.0), 0.0)
        ei = gain * scipy.stats.norm.cdf(z) + sigma * scipy.stats.norm.pdf(z)
    ei = np.where(sigma > 0, ei, np.maximum(gain, 0.0))
    return np.maximum(ei, 0.0)

def ModelExpectedImprovement(model, X, best_y):
    mean, var = model.predict(X)
    return ExpectedImprovement(mean, var, best_y)
