import numpy as np
import pytest

from star.graph import SkeletonGraph
from star.tensor import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_tree(num_joints: int, rng: np.random.Generator) -> SkeletonGraph:
    """Uniform random labelled tree via a Pruefer sequence."""
    if num_joints == 1:
        return SkeletonGraph(num_joints=1, edges=())
    if num_joints == 2:
        return SkeletonGraph(num_joints=2, edges=((0, 1),))
    seq = rng.integers(0, num_joints, size=num_joints - 2)
    degree = np.ones(num_joints, dtype=np.int64)
    for s in seq:
        degree[s] += 1
    edges = []
    leaves = sorted(i for i in range(num_joints) if degree[i] == 1)
    import heapq

    heapq.heapify(leaves)
    for s in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, int(s)))
        degree[s] -= 1
        if degree[s] == 1:
            heapq.heappush(leaves, int(s))
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((u, v))
    return SkeletonGraph(num_joints=num_joints, edges=tuple(edges))


def attention_params(d_model: int, rng: np.random.Generator, scale: float = 0.3,
                     requires_grad: bool = True) -> dict:
    """Random q/k/v/o projection parameters for the attention functions."""
    params = {}
    for name in ("q", "k", "v", "o"):
        params[f"w{name}"] = Tensor(rng.normal(0.0, scale, (d_model, d_model)),
                                    requires_grad=requires_grad)
        params[f"b{name}"] = Tensor(rng.normal(0.0, 0.1 * scale, d_model),
                                    requires_grad=requires_grad)
    return params


def param_grads(tape, params: dict) -> dict:
    return {k: tape.grad(v) for k, v in params.items() if v.requires_grad}
