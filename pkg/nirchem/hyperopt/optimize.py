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
import json
import os
import numpy as np
import pandas as pd
import scipy.optimize
import scipy.stats.qmc
from nirchem import util
from nirchem.hyperopt.gp import GpFit, ModelExpectedImprovement
from nirchem.hyperopt.space import HyperoptException

OK = 'ok'
FAILED = 'failed'

CANDIDATES_LOG2 = 11
REFINE_STARTS = 5
RESAMPLE_LIMIT = 1000

class Trial(object):
    def __init__(self, iteration, params, objective, status, message = None):
        self.iteration = int(iteration)
        self.params = params
        self.objective = objective
        self.status = status
        self.message = message

    @property
    def ok(self):
        return self.status == OK

    def to_json(self):
        obj = {
            'iteration': self.iteration,
            'params': self.params,
            'objective': self.objective,
            'status': self.status,
        }
        if self.message is not None:
            obj['message'] = self.message
        return obj

    @staticmethod
    def from_json(obj):
        try:
            return Trial(obj['iteration'], obj['params'], obj['objective'], obj['status'],
                         obj.get('message'))
        except KeyError as exn:
            raise HyperoptException('trace entry is missing {0}'.format(exn))

def ReadTrace(path):
    trials = []
    try:
        with open(path, 'r', encoding = 'utf-8') as fp:
            for number, line in enumerate(fp, 1):
                if not line.strip():
                    continue
                try:
                    trials.append(Trial.from_json(json.loads(line)))
                except ValueError as exn:
                    raise HyperoptException('{0}:{1}: malformed trace line: {2}'.format(
                        path, number, exn))
    except OSError as exn:
        raise HyperoptException('could not read {0}: {1}'.format(path, exn.strerror))
    for index, trial in enumerate(trials):
        if trial.iteration != index:
            raise HyperoptException('{0}: trial {1} is recorded as iteration {2}'.format(
                path, index, trial.iteration))
    return trials

def _AppendTrace(path, trial):
    try:
        with open(path, 'a', encoding = 'utf-8', newline = '\n') as fp:
            fp.write(util.CanonicalJson(trial.to_json()))
            fp.write('\n')
    except OSError as exn:
        raise HyperoptException('could not write {0}: {1}'.format(path, exn.strerror))

def BestSoFar(trials):
    best = []
    current = np.nan
    for trial in trials:
        if trial.ok and not (trial.objective >= current):
            current = trial.objective
        best.append(current)
    return best

def ConvergenceFrame(trials):
    return pd.DataFrame({
        'iteration': [t.iteration for t in trials],
        'objective': [np.nan if t.objective is None else t.objective for t in trials],
        'best_so_far': BestSoFar(trials),
        'status': [t.status for t in trials],
    })

def SaveConvergenceCsv(path, trials):
    try:
        ConvergenceFrame(trials).to_csv(path, index = False, float_format = util.TABLE_FLOAT_FORMAT,
                                        lineterminator = '\n')
    except OSError as exn:
        raise HyperoptException('could not write {0}: {1}'.format(path, exn.strerror))

def _Key(space, x):
    return tuple(space.round(x).tolist())

# Maximizes expected improvement over a scrambled Sobol sample of the unit
# cube, then polishes the best few candidates with bounded L-BFGS.
def _Propose(space, trials, rng, seed, iteration):
    ok = [t for t in trials if t.ok]
    X = np.array([space.from_params(t.params) for t in ok])
    y = np.array([t.objective for t in ok])
    if len(np.unique(X, axis = 0)) < 2:
        return space.sample(rng)

    model = GpFit(X, y, space.bounds, seed = seed * 100003 + iteration)
    best_y = float(np.min(y))
    sobol = scipy.stats.qmc.Sobol(len(space), scramble = True, seed = rng)
    candidates = space.from_unit(sobol.random_base2(CANDIDATES_LOG2))
    scores = ModelExpectedImprovement(model, candidates, best_y)

    def negative_ei(u):
        return -float(ModelExpectedImprovement(model, space.from_unit(u)[None, :], best_y)[0])

    best_x = candidates[int(np.argmax(scores))]
    best_score = float(np.max(scores))
    unit_box = [(0.0, 1.0)] * len(space)
    for index in np.argsort(-scores, kind = 'stable')[:REFINE_STARTS]:
        result = scipy.optimize.minimize(negative_ei, space.to_unit(candidates[index]),
                                         method = 'L-BFGS-B', bounds = unit_box)
        if np.isfinite(result.fun) and -result.fun > best_score:
            best_score = -result.fun
            best_x = space.from_unit(np.clip(result.x, 0.0, 1.0))
    return best_x

# Runs n_init uniform random trials followed by n_iter GP-guided ones and
# returns (best trial, all trials). Every draw is keyed on (seed, iteration);
# an existing trace at |trace_path| is resumed from where it stopped.
# |objective| maps a params dict to a float; it fails by raising a
# NirchemException or returning a non-finite value.
def Optimize(space, objective, n_init = 20, n_iter = 40, seed = 0, trace_path = None,
             progress = None):
    if n_init < 2:
        raise HyperoptException('n_init must be >= 2, got {0}'.format(n_init))
    if n_iter < 0:
        raise HyperoptException('n_iter must be >= 0, got {0}'.format(n_iter))

    trials = []
    if trace_path is not None and os.path.exists(trace_path):
        trials = ReadTrace(trace_path)[:n_init + n_iter]
    seen = set(_Key(space, space.from_params(t.params)) for t in trials)

    for iteration in range(len(trials), n_init + n_iter):
        rng = np.random.default_rng([seed, iteration])
        if iteration < n_init:
            x = space.sample(rng)
        else:
            x = _Propose(space, trials, rng, seed, iteration)
        x = space.round(x)
        for _ in range(RESAMPLE_LIMIT):
            if _Key(space, x) not in seen:
                break
            x = space.sample(rng)
        else:
            raise HyperoptException('could not find an unevaluated point after {0} draws'.format(
                RESAMPLE_LIMIT))
        seen.add(_Key(space, x))

        params = space.to_params(x)
        message = None
        try:
            value = float(objective(params))
        except util.NirchemException as exn:
            value = np.nan
            message = str(exn)
        if np.isfinite(value):
            trial = Trial(iteration, params, value, OK)
        else:
            observed = [t.objective for t in trials if t.objective is not None]
            worst = max(observed) if observed else None
            trial = Trial(iteration, params, worst, FAILED, message or 'non-finite objective')

        trials.append(trial)
        if trace_path is not None:
            _AppendTrace(trace_path, trial)
        if progress:
            progress(trial, BestSoFar(trials)[-1])

    ok = [t for t in trials if t.ok]
    if not ok:
        raise HyperoptException('all {0} trials failed'.format(len(trials)))
    best = min(ok, key = lambda t: (t.objective, t.iteration))
    return best, trials
