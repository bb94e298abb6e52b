"""Regenerates cgm_panel.csv and prints reference two-way clustered SEs.

Fixed effects are removed by exact projection on country and year dummies,
then statsmodels' two-way cluster sandwich is applied to the demeaned OLS fit.
"""

from pathlib import Path

import numpy as np
import pandas as pd
import statsmodels.api as sm
from statsmodels.stats.sandwich_covariance import cov_cluster_2groups

HERE = Path(__file__).parent
rng = np.random.default_rng(20240607)

n_c, n_t = 10, 5
rows = []
alpha = rng.normal(0.0, 2.0, n_c)
tau = rng.normal(0.0, 1.0, n_t)
level = rng.normal(0.0, 1.0, n_c)
shock = rng.normal(0.0, 1.5, n_c)
year_shock = rng.normal(0.0, 0.8, n_t)
for c in range(n_c):
    for t in range(n_t):
        x1 = level[c] + 0.5 * t * level[c] + rng.normal()
        x2 = rng.normal() + 0.3 * year_shock[t]
        e = shock[c] * (t - 2) + year_shock[t] * x1 + rng.normal(0.0, 0.5)
        y = 1.5 * x1 - 0.7 * x2 + alpha[c] + tau[t] + e
        rows.append((f"C{c:02d}", 2001 + t, round(y, 6), round(x1, 6), round(x2, 6)))

df = pd.DataFrame(rows, columns=["country", "year", "y", "x1", "x2"])
df.to_csv(HERE / "cgm_panel.csv", index=False)

d = pd.get_dummies(df[["country", "year"]].astype(str), drop_first=True).astype(float)
d.insert(0, "const", 1.0)
D = d.to_numpy()


def resid(v):
    coef, *_ = np.linalg.lstsq(D, v, rcond=None)
    return v - D @ coef


y = resid(df["y"].to_numpy())
X = np.column_stack([resid(df[c].to_numpy()) for c in ["x1", "x2"]])
fit = sm.OLS(y, X).fit()
g1 = pd.factorize(df["country"])[0]
g2 = pd.factorize(df["year"])[0]
cov, _, _ = cov_cluster_2groups(fit, g1, g2, use_correction=True)
for name, b, se in zip(["x1", "x2"], fit.params, np.sqrt(np.diag(cov))):
    print(f"{name},{b:.12f},{se:.12f}")
