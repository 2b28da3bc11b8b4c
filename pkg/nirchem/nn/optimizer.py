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
from nirchem.nn.losses import ModelException
from nirchem.nn.model import PARAM_NAMES

RHO = 0.95
EPSILON = 1e-8

# Running averages of squared gradients and squared updates, one pair of
# tensors per model parameter, both starting at zero.
class AdadeltaState(object):
    def __init__(self, grad_sq, update_sq):
        self.grad_sq = grad_sq
        self.update_sq = update_sq

    @staticmethod
    def ForModel(model):
        return AdadeltaState({k: np.zeros_like(v) for k, v in model.params.items()},
                             {k: np.zeros_like(v) for k, v in model.params.items()})

def AdadeltaStep(model, state, grads, lr, rho = RHO, epsilon = EPSILON):
    for name in PARAM_NAMES:
        if not np.all(np.isfinite(grads[name])):
            raise ModelException('non-finite gradient for {0} at step {1}'.format(
                name, model.step + 1))

    for name in PARAM_NAMES:
        g = grads[name]
        grad_sq = rho * state.grad_sq[name] + (1.0 - rho) * g * g
        delta = -lr * (np.sqrt(state.update_sq[name] + epsilon) / np.sqrt(grad_sq + epsilon)) * g
        state.grad_sq[name] = grad_sq
        state.update_sq[name] = rho * state.update_sq[name] + (1.0 - rho) * delta * delta
        model.params[name] = model.params[name] + delta
    model.step += 1
    return model, state
