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
import pandas as pd
from nirchem import util
from nirchem.nn.losses import HUBER_DELTA, Huber, ModelException
from nirchem.nn.model import TRAIN, Backward, Forward, Predict
from nirchem.nn.optimizer import EPSILON, RHO, AdadeltaState, AdadeltaStep

class TrainingException(ModelException):
    def __init__(self, message, history = None):
        super(TrainingException, self).__init__(message)
        self.history = history

class TrainConfig(object):
    def __init__(self, learning_rate = 0.094, batch_size = 45, epochs = 250, plateau_patience = 25,
                 plateau_factor = 0.5, rho = RHO, epsilon = EPSILON, seed = 0,
                 huber_delta = HUBER_DELTA):
        self.learning_rate = float(learning_rate)
        self.batch_size = int(batch_size)
        self.epochs = int(epochs)
        self.plateau_patience = int(plateau_patience)
        self.plateau_factor = float(plateau_factor)
        self.rho = float(rho)
        self.epsilon = float(epsilon)
        self.seed = int(seed)
        self.huber_delta = float(huber_delta)
        self.validate()

    def validate(self):
        if not self.learning_rate > 0:
            raise ModelException('learning_rate must be positive, got {0}'.format(
                self.learning_rate))
        if self.batch_size < 1:
            raise ModelException('batch_size must be >= 1, got {0}'.format(self.batch_size))
        if self.epochs < 0:
            raise ModelException('epochs must be >= 0, got {0}'.format(self.epochs))
        if self.plateau_patience < 1:
            raise ModelException('plateau_patience must be >= 1, got {0}'.format(
                self.plateau_patience))
        # A factor of 1 turns the schedule off.
        if not (0 < self.plateau_factor <= 1):
            raise ModelException('plateau_factor must lie in (0, 1], got {0}'.format(
                self.plateau_factor))
        if not (0 < self.rho < 1) or not self.epsilon > 0:
            raise ModelException('Adadelta needs 0 < rho < 1 and epsilon > 0')
        if not self.huber_delta > 0:
            raise ModelException('huber_delta must be positive, got {0}'.format(self.huber_delta))

    def to_json(self):
        return {
            'learning_rate': self.learning_rate,
            'batch_size': self.batch_size,
            'epochs': self.epochs,
            'plateau_patience': self.plateau_patience,
            'plateau_factor': self.plateau_factor,
            'rho': self.rho,
            'epsilon': self.epsilon,
            'seed': self.seed,
            'huber_delta': self.huber_delta,
        }

    @staticmethod
    def from_json(obj):
        try:
            return TrainConfig(**obj)
        except TypeError as exn:
            raise ModelException('bad training config: {0}'.format(exn))

# Cuts the learning rate by |factor| once the validation loss has gone
# |patience| epochs without a strict improvement on the best value seen.
class PlateauScheduler(object):
    def __init__(self, lr, factor = 0.5, patience = 10):
        self.lr = float(lr)
        self.factor = float(factor)
        self.patience = int(patience)
        self.best = np.inf
        self.wait = 0

    # Returns the learning rate for the next epoch.
    def step(self, val_loss):
        if val_loss < self.best:
            self.best = val_loss
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.patience:
                self.lr *= self.factor
                self.wait = 0
        return self.lr

class TrainHistory(object):
    def __init__(self):
        self.train_loss = []
        self.val_loss = []
        self.learning_rate = []

    def __len__(self):
        return len(self.train_loss)

    def append(self, train_loss, val_loss, lr):
        self.train_loss.append(float(train_loss))
        self.val_loss.append(float(val_loss))
        self.learning_rate.append(float(lr))

    def tail_mean(self, count = 10):
        if not self.val_loss:
            raise ModelException('empty training history')
        return float(np.mean(self.val_loss[-count:]))

    def to_frame(self):
        return pd.DataFrame({
            'epoch': np.arange(1, len(self) + 1),
            'train_loss': self.train_loss,
            'val_loss': self.val_loss,
            'lr': self.learning_rate,
        })

    def save_csv(self, path):
        try:
            self.to_frame().to_csv(path, index = False, float_format = util.TABLE_FLOAT_FORMAT,
                                   lineterminator = '\n')
        except OSError as exn:
            raise ModelException('could not write {0}: {1}'.format(path, exn.strerror))

# Accepts a SpectraSet or an (absorbance, target) pair.
def _Arrays(data):
    if hasattr(data, 'absorbance'):
        return data.absorbance, data.reference_mg
    X, y = data
    return np.asarray(X, dtype = np.float64), np.asarray(y, dtype = np.float64).ravel()

# Mini-batch Adadelta with a plateau schedule. Shuffles and noise/dropout draws
# are keyed on (seed, epoch[, batch]), so a run is reproducible bit for bit.
# |progress| is called as progress(epoch, train_loss, val_loss, lr).
def Train(model, train_set, val_set, config, progress = None, state = None):
    config.validate()
    X, y = _Arrays(train_set)
    X_val, y_val = _Arrays(val_set)
    if len(y) == 0 or len(y_val) == 0:
        raise TrainingException('training needs non-empty training and validation sets')

    state = state or AdadeltaState.ForModel(model)
    scheduler = PlateauScheduler(config.learning_rate, config.plateau_factor,
                                 config.plateau_patience)
    history = TrainHistory()
    lr = config.learning_rate

    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(len(y))
        for batch, start in enumerate(range(0, len(y), config.batch_size)):
            rows = order[start:start + config.batch_size]
            rng = np.random.default_rng([config.seed, epoch, batch])
            predictions, cache = Forward(model, X[rows], TRAIN, rng)
            grads = Backward(model, cache, y[rows], config.huber_delta, predictions)
            try:
                AdadeltaStep(model, state, grads, lr, config.rho, config.epsilon)
            except ModelException as exn:
                raise TrainingException('epoch {0}: {1}'.format(epoch + 1, exn), history)

        train_loss = Huber(y - Predict(model, X), config.huber_delta)
        val_loss = Huber(y_val - Predict(model, X_val), config.huber_delta)
        history.append(train_loss, val_loss, lr)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingException('non-finite loss at epoch {0} (train {1}, validation {2})'.format(
                epoch + 1, train_loss, val_loss), history)
        if progress:
            progress(epoch + 1, train_loss, val_loss, lr)
        lr = scheduler.step(val_loss)

    return model, history
