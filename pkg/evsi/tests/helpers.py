"""Modelos mínimos para las pruebas del motor."""

import numpy as np

from evsi.decision import Channel, ChannelModel, DecisionModel, ParameterRegistry, PriorBlock
from evsi.distributions import Normal
from evsi.posterior import ImportancePlan


class ConstantPayoffModel(ChannelModel):
    """f_d(theta) = payoffs[d] para todo theta; ninguna información tiene valor."""

    def __init__(self, payoffs=(1.0, 3.0, 2.0)):
        registry = ParameterRegistry(['x'])
        blocks = [PriorBlock(('x',), Normal(0.0, 1.0))]
        channels = [Channel('gaussian', 'x', variance=1.0)]
        super().__init__(registry, blocks, channels, ImportancePlan(registry, blocks, channels))
        self.payoffs = np.asarray(payoffs, dtype=float)
        self.decision_count = len(self.payoffs)

    @property
    def f_max(self):
        return float(np.max(np.abs(self.payoffs)))

    def net_benefits(self, theta):
        return np.tile(self.payoffs, (len(theta), 1))


class LinearGaussianModel(ChannelModel):
    """x ~ N(0, 1), Y ~ N(x, noise); f = (x, -x) o solo (x,) con una decisión."""

    def __init__(self, noise=1.0, decisions=2):
        registry = ParameterRegistry(['x'])
        blocks = [PriorBlock(('x',), Normal(0.0, 1.0))]
        channels = [Channel('gaussian', 'x', variance=noise)]
        super().__init__(registry, blocks, channels, ImportancePlan(registry, blocks, channels))
        self.decision_count = decisions

    def net_benefits(self, theta):
        x = theta['x']
        return np.column_stack([x, -x][: self.decision_count])


class ShiftedModel(DecisionModel):
    """Mismo modelo con una constante sumada a cada f_d."""

    def __init__(self, model, shift):
        self.model = model
        self.shift = shift
        self.registry = model.registry
        self.decision_count = model.decision_count
        self.observation_dim = model.observation_dim

    def sample_prior(self, rng, size):
        return self.model.sample_prior(rng, size)

    def net_benefits(self, theta):
        return self.model.net_benefits(theta) + self.shift

    def sample_observation(self, theta, rng):
        return self.model.sample_observation(theta, rng)

    def log_likelihood(self, y, theta):
        return self.model.log_likelihood(y, theta)
