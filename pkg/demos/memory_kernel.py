"""The exponential memory term.

The accumulator updates the history sum in O(1) per step. Here it is compared
with the direct sum and with the exact convolution of a linear history.
"""
import numpy as np

from oldroyd_dg import DgSpace, FieldVec, KernelParams, MemoryAccumulator, build_uniform_mesh
from oldroyd_dg.memory import kernel_integral_linear, rectangle_sum

kernel = KernelParams(gamma=0.1, eta=0.1)
space = DgSpace(build_uniform_mesh(1), 1, 1)
rng = np.random.default_rng(0)

tau = 0.05
acc = MemoryAccumulator.empty(space, tau, kernel)
history = []
for _ in range(50):
    u = rng.standard_normal(space.n_dofs)
    history.append(u)
    acc = acc.push(FieldVec(space, u))
direct = rectangle_sum(kernel, tau, history)
print(f"recursive vs direct after 50 steps: {np.abs(acc.q.coeffs - direct).max():.2e}")

# quadrature error of the rectangle rule on int_0^1 beta(1-s)(s+1) ds
exact = kernel_integral_linear(kernel, 1.0)
prev = None
for k in range(3, 8):
    tau = 2.0**-k
    s = np.arange(1, 2**k + 1) * tau
    approx = float(rectangle_sum(kernel, tau, [np.array(si + 1.0) for si in s]))
    err = abs(approx - exact)
    ratio = "" if prev is None else f"  ratio {prev / err:.3f}"
    print(f"tau=1/{2**k:<4d} error {err:.3e}{ratio}")
    prev = err
