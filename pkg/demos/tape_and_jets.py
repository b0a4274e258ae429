"""Differentiate through space and parameters at once.

Jets carry d/dx and d2/dx2 of a field; the tape records every array
operation on the parameter vector so one backward pass gives d(loss)/d(theta).
"""
import numpy as np

from apfos import adtape as ad
from apfos import jets as jt
from apfos import network as N
from apfos.gradcheck import central_diff, rel_error

# A closed-form field first: u = sin(x) * z**2 at (pi/2, 0.5)
X, Z = jt.coordinate_jets(np.array([[np.pi / 2, 0.5]]), order=2)
u = jt.sin(X) * Z * Z
print("u      ", float(np.asarray(u.value)[0]))
print("grad u ", [float(np.asarray(g)[0]) for g in u.grad])
print("u_zz   ", float(np.asarray(u.hess[1][1])[0]))

# Now the same jets pushed through a small tanh network
sizes = (2, 10, 10, 1)
theta = N.init_params(sizes, seed=0)
pts = np.random.default_rng(1).random((32, 2))


def laplacian_energy(params):
    (v,) = N.forward_jets(params, sizes, pts, order=2)
    return ad.mean(ad.square(ad.add(v.hess[0][0], v.hess[1][1])))


tape = ad.Tape(theta)
g = tape.backward(laplacian_energy(tape.params))
fd = central_diff(lambda p: float(laplacian_energy(p)), theta)
print(f"{theta.size} parameters, tape vs finite differences: {rel_error(g, fd):.2e}")
