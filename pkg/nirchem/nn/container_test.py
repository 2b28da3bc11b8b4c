# vim: set sts=4 ts=8 sw=4 tw=99 et:
import os
import shutil
import tempfile
import unittest
import numpy as np
from numpy.testing import assert_array_equal
from nirchem.nn import container
from nirchem.nn.losses import ModelException
from nirchem.nn.model import PARAM_NAMES, BuildModel, CnnSpec, Predict
from nirchem.nn.optimizer import AdadeltaState, AdadeltaStep

def TrainedModel():
    spec = CnnSpec(k1 = 2, f1 = 3, k2 = 2, f2 = 3, dense_units = 4, input_len = 20,
                   dropout_rate = 0.25)
    model = BuildModel(spec, seed = 2)
    state = AdadeltaState.ForModel(model)
    grads = {name: np.full_like(model.params[name], 0.1) for name in PARAM_NAMES}
    AdadeltaStep(model, state, grads, 1.0)
    return model, state

class RoundTripTests(unittest.TestCase):
    def setUp(self):
        self.temp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp)

    def runTest(self):
        model, state = TrainedModel()
        path = os.path.join(self.temp, 'model.bin')
        container.SaveModel(path, model, state)
        loaded, loaded_state = container.LoadModel(path)

        self.assertEqual(loaded.spec, model.spec)
        self.assertEqual(loaded.step, 1)
        for name in PARAM_NAMES:
            assert_array_equal(loaded.params[name], model.params[name])
            assert_array_equal(loaded_state.grad_sq[name], state.grad_sq[name])
            assert_array_equal(loaded_state.update_sq[name], state.update_sq[name])

        X = np.random.default_rng(0).normal(size = (4, 20))
        assert_array_equal(Predict(loaded, X), Predict(model, X))

        # Re-encoding what was read gives back the same bytes.
        with open(path, 'rb') as fp:
            self.assertEqual(container.EncodeModel(loaded, loaded_state), fp.read())

        _, no_state = container.DecodeModel(container.EncodeModel(model))
        self.assertIsNone(no_state)

class CorruptTests(unittest.TestCase):
    def runTest(self):
        model, _ = TrainedModel()
        data = container.EncodeModel(model)
        self.assertTrue(data.startswith(container.MAGIC))

        with self.assertRaises(ModelException):
            container.DecodeModel(b'NIRC')
        with self.assertRaises(ModelException):
            container.DecodeModel(b'XXXXXXXX' + data[8:])
        with self.assertRaises(ModelException):
            container.DecodeModel(data[:-8])
        with self.assertRaises(ModelException):
            container.DecodeModel(data + b'\x00')
        with self.assertRaises(ModelException):
            container.LoadModel('/nonexistent/model.bin')
