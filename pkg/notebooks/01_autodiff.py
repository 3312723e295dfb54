# %% [markdown]
# # Reverse-mode gradients and Jacobi spectra
#
# A tiny tape over float64 arrays. We check a gradient by central
# differences and compare the Jacobi eigen/singular routines with LAPACK.

# %%
import numpy as np

from tfnas import autodiff as ad

rng = np.random.default_rng(0)
x = ad.Tensor(rng.normal(size=(4, 3)))
w = ad.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
loss = ad.tsum(ad.tanh(ad.matmul(x, w)))
ad.backward(loss)
print("loss", loss.item())
print("dL/dw\n", w.grad)

# %%
# central differences on one entry
step = 1e-6
w.data[1, 0] += step
hi = np.sum(np.tanh(x.data @ w.data))
w.data[1, 0] -= 2 * step
lo = np.sum(np.tanh(x.data @ w.data))
w.data[1, 0] += step
print("numeric", (hi - lo) / (2 * step), "analytic", w.grad[1, 0])

# %%
a = rng.normal(size=(6, 6))
a = a + a.T
print(np.max(np.abs(ad.spectrum(a) - np.sort(np.linalg.eigvalsh(a))[::-1])))

m = rng.normal(size=(40, 7))
print(np.max(np.abs(ad.singular_values(m) - np.linalg.svd(m, compute_uv=False))))
print("nuclear norm", ad.nuclear_norm(m))
