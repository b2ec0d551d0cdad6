from .bc import Adam, EmptyDemoSet, bc_fit, stack_demos
from .lwr import DegenerateDemo, lwr_fit
from .npg import (DapgState, NonFiniteGradient, advantages, conjugate_gradient, dapg_update,
                  explicit_fisher, fisher_vector_product, natural_step, npg_update)
from .pi2cma import (AllRolloutsFailed, Pi2CmaState, pi2cma_update, probability_weights,
                     update_from_samples)
