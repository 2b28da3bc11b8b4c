# vim: set sts=4 ts=8 sw=4 tw=99 et:
import os
import shutil
import tempfile
import unittest
import numpy as np
import pandas as pd
from numpy.testing import assert_array_equal
from nirchem.nn.model import PARAM_NAMES, BuildModel, CnnSpec
from nirchem.nn.training import PlateauScheduler, Train, TrainConfig, TrainHistory, TrainingException
from nirchem.nn.losses import ModelException

def SmallSpec():
    return CnnSpec(k1 = 2, f1 = 3, k2 = 2, f2 = 3, dense_units = 8, input_len = 20)

# Targets are a fixed linear read-out of the spectra.
def LinearData(count, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size = (count, 20))
    weights = np.linspace(-1.0, 1.0, 20) / 4.0
    return X, 5.0 + X @ weights

class ConfigTests(unittest.TestCase):
    def runTest(self):
        config = TrainConfig()
        self.assertEqual(config.learning_rate, 0.094)
        self.assertEqual(config.batch_size, 45)
        self.assertEqual(TrainConfig.from_json(config.to_json()).to_json(), config.to_json())
        with self.assertRaises(ModelException):
            TrainConfig(batch_size = 0)
        with self.assertRaises(ModelException):
            TrainConfig(plateau_factor = 0.0)
        with self.assertRaises(ModelException):
            TrainConfig.from_json({'momentum': 0.9})
        TrainConfig(plateau_factor = 1.0)

class SchedulerTests(unittest.TestCase):
    def runTest(self):
        scheduler = PlateauScheduler(1.0, factor = 0.5, patience = 3)
        rates = [scheduler.step(1.0) for _ in range(7)]
        self.assertEqual(rates, [1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.25])

        scheduler = PlateauScheduler(1.0, factor = 0.5, patience = 2)
        rates = [scheduler.step(v) for v in [3.0, 2.0, 2.5, 1.0, 1.5, 1.5]]
        self.assertEqual(rates, [1.0, 1.0, 1.0, 1.0, 1.0, 0.5])

class HistoryTests(unittest.TestCase):
    def setUp(self):
        self.temp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp)

    def runTest(self):
        history = TrainHistory()
        with self.assertRaises(ModelException):
            history.tail_mean()
        for i in range(12):
            history.append(1.0, float(i), 0.5)
        self.assertEqual(len(history), 12)
        self.assertEqual(history.tail_mean(10), np.mean(np.arange(2, 12)))

        path = os.path.join(self.temp, 'history.csv')
        history.save_csv(path)
        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ['epoch', 'train_loss', 'val_loss', 'lr'])
        self.assertEqual(list(frame['epoch']), list(range(1, 13)))

class ZeroEpochTests(unittest.TestCase):
    def runTest(self):
        model = BuildModel(SmallSpec(), seed = 0)
        before = {name: model.params[name].copy() for name in PARAM_NAMES}
        data = LinearData(10, 1)
        _, history = Train(model, data, data, TrainConfig(epochs = 0))
        self.assertEqual(len(history), 0)
        self.assertEqual(model.step, 0)
        for name in PARAM_NAMES:
            assert_array_equal(model.params[name], before[name])

class DeterminismTests(unittest.TestCase):
    def runTest(self):
        train, val = LinearData(30, 2), LinearData(10, 3)
        config = TrainConfig(learning_rate = 1.0, batch_size = 8, epochs = 3, seed = 5)
        spec = CnnSpec(k1 = 2, f1 = 3, k2 = 2, f2 = 3, dense_units = 8, input_len = 20,
                       dropout_rate = 0.2, noise_std = 0.01)

        runs = []
        for _ in range(2):
            model = BuildModel(spec, seed = 4)
            epochs = []
            _, history = Train(model, train, val, config,
                               progress = lambda *args: epochs.append(args[0]))
            runs.append((model, history))
            self.assertEqual(epochs, [1, 2, 3])

        (a, ha), (b, hb) = runs
        self.assertEqual(a.step, 3 * 4)
        for name in PARAM_NAMES:
            assert_array_equal(a.params[name], b.params[name])
        self.assertEqual(ha.val_loss, hb.val_loss)
        self.assertEqual(ha.train_loss, hb.train_loss)

class NonFiniteLossTests(unittest.TestCase):
    def runTest(self):
        model = BuildModel(SmallSpec(), seed = 0)
        X, y = LinearData(10, 6)
        y_val = y.copy()
        y_val[0] = np.inf
        with self.assertRaises(TrainingException) as context:
            Train(model, (X, y), (X, y_val), TrainConfig(epochs = 5, batch_size = 5))
        self.assertEqual(len(context.exception.history), 1)

        with self.assertRaises(TrainingException):
            Train(model, (X[:0], y[:0]), (X, y), TrainConfig(epochs = 1))

@unittest.skipUnless(os.environ.get('NIRCHEM_SLOW_TESTS'), 'set NIRCHEM_SLOW_TESTS to run')
class ConvergenceTests(unittest.TestCase):
    def runTest(self):
        model = BuildModel(SmallSpec(), seed = 0)
        config = TrainConfig(learning_rate = 1.0, batch_size = 10, epochs = 200,
                             plateau_patience = 20)
        _, history = Train(model, LinearData(100, 7), LinearData(30, 8), config)
        self.assertLess(history.val_loss[-1], 0.1 * history.val_loss[0])
