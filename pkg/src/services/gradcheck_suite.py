"""
Finite-difference suite over every differentiable operation

Each case builds a scalar function of one input tensor at 64-bit precision.
Vector-valued operations are reduced with a fixed random weighting so that no
input element sits at an exactly-zero gradient by symmetry.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tabulate import tabulate

from src.engine.gradcheck import finite_difference_check
from src.engine.tensor import Tensor, matmul, precision, reduce
from src.gating.gate import (
    ControllerParams,
    GateConfig,
    GateDecision,
    cir,
    controller_forward,
    cosine_similarity_batched,
    gate_logit,
    relaxed_gate,
)
from src.gating.noise import FrozenNoise, gumbel_from_uniform
from src.losses.objective import consistency_loss, flops_loss, mean_gate, total_loss
from src.models.network import GatedBlock, gated_block_forward_train
from src.nn.layers import (
    BatchNorm2dState,
    Conv2dParams,
    LinearParams,
    batchnorm2d,
    conv2d,
    cross_entropy,
    global_average_pool,
    linear,
)
from src.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-4

Builder = Callable[[np.random.Generator], Tuple[Callable[[Tensor], Tensor], Tensor]]


@dataclass
class GradcheckResult:
    name: str
    error: float
    elements: int
    seconds: float
    tolerance: float = GRADCHECK_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _weighted(shape, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    w = Tensor(rng.standard_normal(shape))
    return lambda t: reduce(t * w, None, "sum")


def _frozen_noise(batch: int, rng: np.random.Generator) -> np.ndarray:
    return gumbel_from_uniform(rng.random((batch, 2)))


def _matmul(rng):
    b = Tensor(rng.standard_normal((4, 5)))
    project = _weighted((3, 5), rng)
    return lambda x: project(matmul(x, b)), Tensor(rng.standard_normal((3, 4)))


def _elementwise(fn: str, positive: bool = False):
    def build(rng):
        data = rng.standard_normal((2, 3, 4))
        if positive:
            data = np.abs(data) + 0.5
        project = _weighted(data.shape, rng)
        return lambda x: project(getattr(x, fn)()), Tensor(data)

    return build


def _reduction(kind: str):
    def build(rng):
        project = _weighted((2, 1, 5), rng)
        return lambda x: project(reduce(x, 1, kind, keepdims=True)), Tensor(rng.standard_normal((2, 4, 5)))

    return build


def _conv_input(rng):
    p = Conv2dParams(3, 4, 3, stride=2, padding=1, bias=True, rng=rng)
    project = _weighted((2, 4, 3, 3), rng)
    return lambda x: project(conv2d(x, p)), Tensor(rng.standard_normal((2, 3, 5, 5)))


def _conv_weight(rng):
    p = Conv2dParams(3, 4, 3, stride=1, padding=1, rng=rng)
    inputs = Tensor(rng.standard_normal((2, 3, 5, 5)))
    project = _weighted((2, 4, 5, 5), rng)

    def f(w):
        p.weight = w
        return project(conv2d(inputs, p))

    return f, Tensor(p.weight.data)


def _batchnorm(rng):
    s = BatchNorm2dState(4)
    s.gamma.data = rng.standard_normal(4) + 1.0
    s.beta.data = rng.standard_normal(4)
    project = _weighted((2, 4, 5, 5), rng)
    return lambda x: project(batchnorm2d(x, s)), Tensor(rng.standard_normal((2, 4, 5, 5)))


def _linear(rng):
    p = LinearParams(6, 3, rng=rng)
    project = _weighted((4, 3), rng)
    return lambda x: project(linear(x, p)), Tensor(rng.standard_normal((4, 6)))


def _gap(rng):
    project = _weighted((2, 4), rng)
    return lambda x: project(global_average_pool(x)), Tensor(rng.standard_normal((2, 4, 5, 5)))


def _cross_entropy(rng):
    labels = rng.integers(0, 5, size=4)
    return lambda x: cross_entropy(x, labels), Tensor(rng.standard_normal((4, 5)))


def _cosine(rng):
    r = Tensor(rng.standard_normal((2, 4, 3, 3)))
    project = _weighted((2,), rng)
    return lambda x: project(cosine_similarity_batched(x, r)), Tensor(rng.standard_normal((2, 4, 3, 3)))


def _cir(rng):
    x = Tensor(rng.standard_normal((2, 4, 3, 3)))
    project = _weighted((2,), rng)
    return lambda r: project(cir(x, r)), Tensor(rng.standard_normal((2, 4, 3, 3)))


def _controller(rng):
    p = ControllerParams(4, 2, rng=rng)
    p.w2.weight.data = rng.standard_normal(p.w2.weight.shape)
    project = _weighted((2,), rng)
    return lambda x: project(controller_forward(x, p)), Tensor(rng.standard_normal((2, 4, 5, 5)))


def _relaxed_gate(rng):
    """mean(z) as a function of the residual through CIR and the controller"""
    identity = Tensor(rng.standard_normal((2, 4, 3, 3)))
    p = ControllerParams(4, 2, rng=rng)
    p.w2.weight.data = rng.standard_normal(p.w2.weight.shape)
    noise = _frozen_noise(2, rng)

    def f(r):
        logit = gate_logit(cir(identity, r), controller_forward(r, p), -2.5)
        return reduce(relaxed_gate(logit, noise, 1.0), None, "mean")

    return f, Tensor(rng.standard_normal((2, 4, 3, 3)))


def _softmax_gate(rng):
    noise = _frozen_noise(4, rng)
    project = _weighted((4,), rng)
    return lambda x: project(relaxed_gate(x, noise, 0.7, formulation="softmax")), Tensor(rng.standard_normal(4))


def _consistency(rng):
    full = [Tensor(rng.standard_normal((2, 4, 3, 3))), Tensor(rng.standard_normal((2, 2, 3, 3)))]
    other = Tensor(rng.standard_normal((2, 2, 3, 3)))
    return lambda x: consistency_loss(full, [x, other]), Tensor(rng.standard_normal((2, 4, 3, 3)))


def _mean_gate(rng):
    noise = _frozen_noise(3, rng)

    def f(logits):
        decisions = []
        for i, scale in enumerate((1.0, -2.0)):
            z = relaxed_gate(logits * scale, noise, 1.0)
            decisions.append(GateDecision(cir=z, controller_out=z, logit=z, relaxed=z, hard=z.data, block_index=i))
        return mean_gate(decisions)

    return f, Tensor(rng.standard_normal(3))


def _flops(rng):
    # ḡ above the target so the hinge is active
    return lambda g: flops_loss(reduce(g, None, "mean"), 0.6, 0.5), Tensor(0.8 + 0.1 * rng.random(5))


def _total(rng):
    labels = rng.integers(0, 3, size=2)
    full = Tensor(rng.standard_normal((2, 4)))

    def f(x):
        ce = cross_entropy(x, labels)
        cons = consistency_loss([full], [x * 1.5])
        g_bar = reduce(x.sigmoid(), None, "mean")
        return total_loss(ce, cons, flops_loss(g_bar, 0.1, 1.0), 0.05, 3.0)

    return f, Tensor(rng.standard_normal((2, 4)) * 0.5)


def _gated_block(rng):
    """Cross-entropy-free block objective: consistency + flops on a 2×4×3×3 input"""
    block = GatedBlock(4, 4, 1, GateConfig(), rng, index=0)
    block.controller.w2.weight.data = rng.standard_normal(block.controller.w2.weight.shape)
    noise = FrozenNoise(_frozen_noise(2, rng))
    project = _weighted((2, 4, 3, 3), rng)
    block_cfg = GateConfig()

    def f(x):
        y, decision, full = gated_block_forward_train(x, block, block_cfg, noise.sample(2, 0, 0))
        g_bar = mean_gate([decision])
        return project(y) + consistency_loss([full], [y]) + 3.0 * flops_loss(g_bar, 0.1, 1.0)

    return f, Tensor(rng.standard_normal((2, 4, 3, 3)))


CASES: Dict[str, Builder] = {
    "matmul": _matmul,
    "relu": _elementwise("relu"),
    "sigmoid": _elementwise("sigmoid"),
    "exp": _elementwise("exp"),
    "log": _elementwise("log", positive=True),
    "square": _elementwise("square"),
    "sqrt": _elementwise("sqrt", positive=True),
    "reduce_sum": _reduction("sum"),
    "reduce_mean": _reduction("mean"),
    "reduce_l2norm": _reduction("l2norm"),
    "conv2d_input": _conv_input,
    "conv2d_weight": _conv_weight,
    "batchnorm2d_train": _batchnorm,
    "linear": _linear,
    "global_average_pool": _gap,
    "cross_entropy": _cross_entropy,
    "cosine_similarity": _cosine,
    "cir": _cir,
    "controller": _controller,
    "relaxed_gate": _relaxed_gate,
    "relaxed_gate_softmax": _softmax_gate,
    "consistency_loss": _consistency,
    "mean_gate": _mean_gate,
    "flops_loss": _flops,
    "total_loss": _total,
    "gated_block": _gated_block,
}


def run_case(name: str, seed: int = 0, h: float = 1e-5) -> GradcheckResult:
    if name not in CASES:
        raise ConfigurationError(f"Unknown gradcheck case '{name}'. Valid cases: {sorted(CASES)}")
    with precision(np.float64):
        rng = np.random.default_rng(np.random.SeedSequence([seed, sorted(CASES).index(name)]))
        f, x = CASES[name](rng)
        start = time.time()
        error = finite_difference_check(f, x, h)
    result = GradcheckResult(name, error, x.size, time.time() - start)
    logger.debug(f"gradcheck {name}: error={error:.3e} over {x.size} elements")
    return result


def run_gradcheck_suite(names: Optional[Sequence[str]] = None, seed: int = 0) -> List[GradcheckResult]:
    results = [run_case(name, seed) for name in (names or list(CASES))]
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.warning(f"gradcheck failures: {failed}")
    else:
        logger.info(f"gradcheck: all {len(results)} cases below {GRADCHECK_TOLERANCE:g}")
    return results


def gradcheck_table(results: Sequence[GradcheckResult], tablefmt: str = "simple") -> str:
    rows = [[r.name, r.elements, f"{r.error:.2e}", f"{r.seconds:.2f}", "ok" if r.passed else "FAIL"] for r in results]
    return tabulate(rows, headers=["operation", "elements", "max rel error", "seconds", "status"], tablefmt=tablefmt)
