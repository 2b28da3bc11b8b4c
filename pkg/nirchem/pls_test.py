# vim: set sts=4 ts=8 sw=4 tw=99 et:
import unittest
import numpy as np
from numpy.testing import assert_allclose
from nirchem import pls
from nirchem.dataset import SpectraSet, WavelengthGrid
from nirchem.pls import CvCurve, PlsException

def ExactLinear(n = 30, p = 5, seed = 0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size = (n, p))
    c = rng.normal(size = p)
    return X, X @ c + 7.0

def OlsPredict(X, y, X_new):
    design = np.column_stack([np.ones(len(X)), X])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond = None)
    return np.column_stack([np.ones(len(X_new)), X_new]) @ coef

def Scores(model, X):
    residual = X - model.x_mean
    scores = []
    for a in range(model.n_components):
        t = residual @ model.weights[:, a]
        scores.append(t)
        residual = residual - np.outer(t, model.loadings[:, a])
    return scores

def LatentSet(n = 60, p = 12, rank = 3, x_noise = 0.0, y_noise = 0.0, seed = 0):
    rng = np.random.default_rng(seed)
    T = rng.normal(size = (n, rank))
    X = T @ rng.normal(size = (rank, p)) + x_noise * rng.normal(size = (n, p))
    y = 200.0 + 10.0 * T @ rng.normal(size = rank) + y_noise * rng.normal(size = n)
    instrument = np.where(np.arange(n) % 2 == 0, 1, 2)
    return SpectraSet(WavelengthGrid(1000.0, 2.0, p), X, y, instrument,
                      ['s{0:03d}'.format(i) for i in range(n)])

class OlsOracleTests(unittest.TestCase):
    def runTest(self):
        X, y = ExactLinear()
        model = pls.PlsFit(X, y, 5)
        assert_allclose(model.predict(X), OlsPredict(X, y, X), rtol = 0, atol = 1e-8)
        assert_allclose(model.predict(X), y, rtol = 0, atol = 1e-8)
        X_new = np.random.default_rng(1).normal(size = (7, 5))
        assert_allclose(model.predict(X_new), OlsPredict(X, y, X_new), rtol = 0, atol = 1e-8)

class FirstWeightTests(unittest.TestCase):
    def runTest(self):
        X, y = ExactLinear(seed = 4)
        model = pls.PlsFit(X, y, 1)
        direction = (X - X.mean(axis = 0)).T @ (y - y.mean())
        assert_allclose(model.weights[:, 0], direction / np.linalg.norm(direction), rtol = 0,
                        atol = 1e-10)

class ModelStructureTests(unittest.TestCase):
    def runTest(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size = (40, 10))
        y = X @ rng.normal(size = 10) + rng.normal(size = 40)
        model = pls.PlsFit(X, y, 6)

        assert_allclose(np.linalg.norm(model.weights, axis = 0), np.ones(6), rtol = 0, atol = 1e-10)
        assert_allclose(model.predict_by_deflation(X), model.predict(X), rtol = 0, atol = 1e-8)
        scores = Scores(model, X)
        for i in range(6):
            for j in range(i + 1, 6):
                bound = 1e-8 * np.linalg.norm(scores[i]) * np.linalg.norm(scores[j])
                self.assertLess(abs(scores[i] @ scores[j]), bound)

        sse = [np.sum((y - model.truncate(a).predict(X))**2) for a in range(1, 7)]
        for before, after in zip(sse, sse[1:]):
            self.assertLessEqual(after, before + 1e-10)

        order = rng.permutation(40)
        shuffled = pls.PlsFit(X[order], y[order], 6)
        assert_allclose(shuffled.regression_vector, model.regression_vector, rtol = 0, atol = 1e-10)

        self.assertAlmostEqual(model.predict(model.x_mean[None, :])[0], model.y_mean, places = 10)
        self.assertEqual(model.predict(np.empty((0, 10))).shape, (0,))

        loaded = pls.PlsModel.from_json(model.to_json())
        assert_allclose(loaded.predict(X), model.predict(X), rtol = 0, atol = 1e-12)

class FitErrorTests(unittest.TestCase):
    def runTest(self):
        X, y = ExactLinear()
        with self.assertRaises(PlsException):
            pls.PlsFit(X, np.full(len(y), 3.0), 2)
        with self.assertRaises(PlsException):
            pls.PlsFit(X, y, 6)
        with self.assertRaises(PlsException):
            pls.PlsFit(X, y, 0)
        with self.assertRaises(PlsException):
            pls.PlsFit(X, y[:-1], 2)
        model = pls.PlsFit(X, y, 2)
        with self.assertRaises(PlsException):
            model.predict(np.ones((3, 4)))

        # A rank-2 design is exhausted after two components.
        rng = np.random.default_rng(5)
        T = rng.normal(size = (20, 2))
        low_rank = T @ rng.normal(size = (2, 6))
        with self.assertRaises(PlsException) as cm:
            pls.PlsFit(low_rank, T @ [1.0, 2.0], 3)
        self.assertIn('component 3', str(cm.exception))

class CrossValidateTests(unittest.TestCase):
    def runTest(self):
        X, y = ExactLinear(n = 40, p = 5, seed = 3)
        curve = pls.CrossValidate(X, y, folds = 10, components = (1, 5), seed = 1)
        self.assertEqual(list(curve.components), [1, 2, 3, 4, 5])
        self.assertEqual(int(np.argmin(curve.cv_loss)), 4)
        self.assertLess(curve.cv_loss[4], 1e-6)
        self.assertTrue(np.all(curve.corrected_cv_loss >= curve.cv_loss))
        self.assertTrue(np.all(curve.train_loss >= 0))

        X, y = ExactLinear(n = 10, p = 4, seed = 6)
        y = y + np.random.default_rng(0).normal(size = 10)
        loo = pls.CrossValidate(X, y, folds = 10, components = (1, 3))
        self.assertTrue(np.all(np.isfinite(loo.cv_loss)))

        with self.assertRaises(PlsException):
            pls.CrossValidate(X, y, folds = 11, components = (1, 2))
        with self.assertRaises(PlsException):
            pls.CrossValidate(X, y, folds = 1, components = (1, 2))
        with self.assertRaises(PlsException):
            pls.CrossValidate(X, y, folds = 5, components = (1, 9))

        first = pls.FoldAssignment(25, 4, seed = 3)
        self.assertEqual(sorted(np.concatenate(first).tolist()), list(range(25)))
        again = pls.FoldAssignment(25, 4, seed = 3)
        for a, b in zip(first, again):
            self.assertEqual(a.tolist(), b.tolist())

class ParallelFoldTests(unittest.TestCase):
    def runTest(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size = (30, 6))
        y = X @ rng.normal(size = 6) + rng.normal(size = 30)
        serial = pls.CrossValidate(X, y, folds = 5, components = (1, 4), jobs = 1)
        parallel = pls.CrossValidate(X, y, folds = 5, components = (1, 4), jobs = 2)
        assert_allclose(parallel.cv_loss, serial.cv_loss, rtol = 0, atol = 1e-12)

class PickComponentsTests(unittest.TestCase):
    def runTest(self):
        c = np.arange(1, 16)
        curve = CvCurve(c, train_loss = 20.0 - 3.0 * c, cv_loss = (c - 10.0)**2 + 10.0,
                        holdout_loss = (c - 5.0)**2 + 1.0)
        self.assertEqual(pls.PickComponents(curve, pls.HOLDOUT_OPTIMAL), 5)
        self.assertEqual(pls.PickComponents(curve, pls.CV), 10)
        self.assertEqual(pls.PickComponents(curve, pls.CORRECTED_CV), 9)

        flat = CvCurve(c, np.ones(15), np.ones(15), np.ones(15))
        for strategy in pls.STRATEGIES:
            self.assertEqual(pls.PickComponents(flat, strategy), 1)

        with self.assertRaises(PlsException):
            pls.PickComponents(CvCurve(c, np.ones(15), np.ones(15)), pls.HOLDOUT_OPTIMAL)
        with self.assertRaises(PlsException):
            pls.PickComponents(curve, 'aic')

class SelectComponentsTests(unittest.TestCase):
    def runTest(self):
        spectra = LatentSet(n = 80, p = 10, rank = 4, x_noise = 0.05, y_noise = 0.5, seed = 2)
        train = spectra.subset(np.arange(60))
        holdout = spectra.subset(np.arange(60, 80))
        count, curve = pls.SelectComponents(train, holdout, (1, 8), pls.HOLDOUT_OPTIMAL,
                                            folds = 5)
        self.assertEqual(count, int(curve.components[np.argmin(curve.holdout_loss)]))
        count, curve = pls.SelectComponents(train, None, (1, 8), pls.CV, folds = 5)
        self.assertIsNone(curve.holdout_loss)
        with self.assertRaises(PlsException):
            pls.SelectComponents(train, None, (1, 8), pls.HOLDOUT_OPTIMAL, folds = 5)

class OutlierTests(unittest.TestCase):
    def runTest(self):
        clean = LatentSet(rank = 3)
        kept, removed = pls.RemoveOutliers(clean, folds = 5, components = (1, 3))
        self.assertEqual(removed, [])
        self.assertEqual(len(kept), len(clean))

        noisy = LatentSet(n = 120, x_noise = 0.01, y_noise = 0.5, seed = 1)
        reference = noisy.reference_mg.copy()
        reference[17] += 50 * 0.5
        corrupted = SpectraSet(noisy.grid, noisy.absorbance, reference, noisy.instrument,
                               noisy.sample_id)
        kept, removed = pls.RemoveOutliers(corrupted, folds = 5, components = (8, 8))
        self.assertEqual(removed, ['s017'])
        self.assertEqual(len(kept), len(corrupted) - 1)
        self.assertNotIn('s017', list(kept.sample_id))

        _, removed = pls.RemoveOutliers(corrupted, folds = 5, components = (8, 8),
                                        sigma_mult = 1e9)
        self.assertEqual(removed, [])

        _, removed = pls.RemoveOutliers(corrupted, folds = 5, components = (8, 8),
                                        scope = pls.PER_INSTRUMENT)
        self.assertIn('s017', removed)

        with self.assertRaises(PlsException):
            pls.RemoveOutliers(corrupted, sigma_mult = 0.0)
        with self.assertRaises(PlsException):
            pls.RemoveOutliers(corrupted, scope = 'batch')
