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
from nirchem import util

class ModelException(util.NirchemException):
    def __init__(self, *args, **kwargs):
        super(ModelException, self).__init__(*args, **kwargs)

# Huber delta in mg. Targets are never normalized, so every loss in the
# package is on the mg scale.
HUBER_DELTA = 1.0

def _CheckResiduals(residuals, delta):
    residuals = np.asarray(residuals, dtype = np.float64).ravel()
    if residuals.size == 0:
        raise ModelException('Huber loss of an empty residual vector is undefined')
    if not delta > 0:
        raise ModelException('Huber delta must be positive, got {0}'.format(delta))
    return residuals

# Mean over residuals of r^2/2 inside |r| <= delta, delta*(|r| - delta/2) outside.
def Huber(residuals, delta = HUBER_DELTA):
    r = _CheckResiduals(residuals, delta)
    a = np.abs(r)
    return float(np.mean(np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))))

# d(mean Huber)/dr.
def HuberGradient(residuals, delta = HUBER_DELTA):
    r = _CheckResiduals(residuals, delta)
    return np.clip(r, -delta, delta) / r.size
