"""The two optimizers on textbook problems."""
import numpy as np

from apfos import optim as O


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    return f, np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])


res = O.lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]), stop=O.StopRule(0.0, 200))
print(f"L-BFGS: x={res.x} after {res.iterations} iterations, "
      f"{res.evaluations} evaluations, status {res.status}")

# Adam needs many more, smaller steps on the same valley
x, state = np.array([-1.2, 1.0]), O.AdamState.zeros(2, lr=1e-2)
for k in range(1, 20001):
    x, state = O.adam_step(state, x, rosenbrock(x)[1])
    if k in (1, 100, 1000, 20000):
        print(f"Adam step {k:5d}: x={x}, f={rosenbrock(x)[0]:.3e}")
