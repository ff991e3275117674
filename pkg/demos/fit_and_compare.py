"""
Fitting one return series
-------------------------

Load the bundled skewed fixture, hold out the last 20% of days, fit the
whole nesting chain and rank the families by AIC with the held-out
log-likelihood alongside.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from finflex import compare_models, fit_families, load_csv, log_returns, pdf, summary_stats
from finflex import train_test_split
from finflex.synthetic import fixture_path

OUT = Path("demo_output")
OUT.mkdir(exist_ok=True)

rs = log_returns(load_csv(fixture_path("SKEW")))
s = summary_stats(rs)
print(f"{rs.symbol}: n={s.n} avg={s.avg:.2e} std={s.std:.4f} "
      f"skew={s.skewness:.3f} kurtosis={s.kurtosis:.2f}")

train, test = train_test_split(rs)

# %%
# ``fit_families`` fits the simpler families first and warm-starts each
# larger family from the one nested inside it, so the log-likelihoods can
# only go up along the chain.
families = ("normal", "laplace", "ep", "btn", "ftn", "fin")
fits = fit_families(train.returns, families, seed=0)
rows = compare_models(list(fits.values()), test.returns)

print(f"{'family':>8} {'k':>2} {'loglik':>11} {'aic':>12} {'oos_ll':>10}")
for r in rows:
    print(f"{r.family:>8} {r.k_params:>2} {r.loglik:11.3f} {r.aic:12.3f} {r.oos_ll:10.3f}")

best = fits[rows[0].family]
print("best:", best.family, best.params)

# %%
# Histogram of the training returns against the fitted densities.
x = np.linspace(np.quantile(train.returns, 0.0005), np.quantile(train.returns, 0.9995), 600)
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
ax1.hist(train.returns, bins=120, density=True, color="0.8")
for f in ("normal", "ep", "fin"):
    ax1.plot(x, pdf(x, fits[f].params), label=f)
ax1.legend()
ax1.set_title("training returns")
for f in ("normal", "ep", "fin"):
    ax2.semilogy(x, pdf(x, fits[f].params), label=f)
ax2.set_ylim(1e-2, None)
ax2.set_title("same, log scale")
fig.tight_layout()
fig.savefig(OUT / "fit_and_compare.png", dpi=120)
print("wrote", OUT / "fit_and_compare.png")
