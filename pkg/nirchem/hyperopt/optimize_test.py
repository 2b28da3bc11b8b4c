# vim: set sts=4 ts=8 sw=4 tw=99 et:
import os
import shutil
import tempfile
import unittest
import numpy as np
import pandas as pd
from nirchem import util
from nirchem.hyperopt import optimize
from nirchem.hyperopt.space import FLOAT, INTEGER, Dimension, HyperoptException, SearchSpace

def LineSpace():
    return SearchSpace([Dimension('x', FLOAT, 0.0, 1.0)])

def Quadratic(params):
    return (params['x'] - 0.3)**2

class QuadraticTests(unittest.TestCase):
    def runTest(self):
        best, trials = optimize.Optimize(LineSpace(), Quadratic, n_init = 20, n_iter = 40, seed = 0)
        self.assertEqual(len(trials), 60)
        self.assertLessEqual(abs(best.params['x'] - 0.3), 0.05)
        best_so_far = optimize.BestSoFar(trials)
        self.assertTrue(all(b <= a for a, b in zip(best_so_far, best_so_far[1:])))
        self.assertEqual(best_so_far[-1], best.objective)

class RandomPhaseTests(unittest.TestCase):
    def runTest(self):
        space = SearchSpace([Dimension('n', INTEGER, 1, 50), Dimension('r', FLOAT, 0.0, 1.0)])
        calls = []
        def objective(params):
            calls.append(params)
            return params['n'] + params['r']

        best, trials = optimize.Optimize(space, objective, n_init = 6, n_iter = 0, seed = 3)
        self.assertEqual(len(calls), 6)
        self.assertEqual(best.objective, min(t.objective for t in trials))
        for trial in trials:
            self.assertIsInstance(trial.params['n'], int)

        again, _ = optimize.Optimize(space, objective, n_init = 6, n_iter = 0, seed = 3)
        self.assertEqual(again.params, best.params)

        with self.assertRaises(HyperoptException):
            optimize.Optimize(space, objective, n_init = 1)
        with self.assertRaises(HyperoptException):
            optimize.Optimize(space, objective, n_iter = -1)

class FailureTests(unittest.TestCase):
    def runTest(self):
        def flaky(params):
            if params['x'] < 0.35:
                raise util.NirchemException('diverged')
            return params['x']

        _, trials = optimize.Optimize(LineSpace(), flaky, n_init = 8, n_iter = 2, seed = 1)
        observed = []
        for trial in trials:
            if trial.ok:
                observed.append(trial.objective)
                continue
            self.assertEqual(trial.message, 'diverged')
            self.assertEqual(trial.objective, max(observed) if observed else None)

        def broken(params):
            return float('nan')
        with self.assertRaises(HyperoptException):
            optimize.Optimize(LineSpace(), broken, n_init = 3, n_iter = 0)

class ResumeTests(unittest.TestCase):
    def setUp(self):
        self.temp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp)

    def runTest(self):
        calls = []
        def objective(params):
            calls.append(params['x'])
            return Quadratic(params)

        fresh, fresh_trials = optimize.Optimize(LineSpace(), Quadratic, n_init = 4, n_iter = 4,
                                                seed = 2)

        trace = os.path.join(self.temp, 'trace.jsonl')
        optimize.Optimize(LineSpace(), objective, n_init = 4, n_iter = 2, seed = 2,
                          trace_path = trace)
        self.assertEqual(len(optimize.ReadTrace(trace)), 6)
        resumed, resumed_trials = optimize.Optimize(LineSpace(), objective, n_init = 4, n_iter = 4,
                                                    seed = 2, trace_path = trace)
        self.assertEqual(len(calls), 8)
        self.assertEqual([t.to_json() for t in resumed_trials],
                         [t.to_json() for t in fresh_trials])
        self.assertEqual(resumed.iteration, fresh.iteration)

        path = os.path.join(self.temp, 'convergence.csv')
        optimize.SaveConvergenceCsv(path, resumed_trials)
        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ['iteration', 'objective', 'best_so_far', 'status'])
        self.assertEqual(len(frame), 8)

        with open(trace, 'a') as fp:
            fp.write('{not json\n')
        with self.assertRaises(HyperoptException):
            optimize.ReadTrace(trace)

@unittest.skipUnless(os.environ.get('NIRCHEM_SLOW_TESTS'), 'set NIRCHEM_SLOW_TESTS to run')
class SeedSweepTests(unittest.TestCase):
    def runTest(self):
        hits = 0
        for seed in range(100):
            best, trials = optimize.Optimize(LineSpace(), Quadratic, seed = seed)
            hits += abs(best.params['x'] - 0.3) <= 0.05
            best_so_far = optimize.BestSoFar(trials)
            self.assertTrue(all(b <= a for a, b in zip(best_so_far, best_so_far[1:])))
        self.assertGreaterEqual(hits, 95)
