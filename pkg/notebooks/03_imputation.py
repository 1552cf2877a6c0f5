"""Imputing censored readings.

Each censored reading is replaced by a draw from U(0, limit). Draws come
from named random streams, so imputation m of a series is the same however
many imputations are requested or in which order they are made.
"""

import numpy as np

from rso2stat import RngStream, Rso2Series, impute, impute_set

t = 30.0 * np.arange(12)
raw = [22, 18, 14, 11, 9, 12, 16, 20, 23, 25, 24, 22]
series = Rso2Series.from_raw(t, raw)
print("observed:", series.values)

stream = RngStream(2024)
for imp in impute_set(series, 3, stream):
    print(f"m={imp.m}:", np.round(imp.imputed_values, 2))

# %% The same stream and index always give the same draws.
again = impute(series, 2, stream).imputed_values
print("m=2 reproduced:", np.array_equal(again, impute_set(series, 3, stream)[1].imputed_values))

# %% Averaged over many imputations a censored slot tends to limit / 2.
draws = np.array([impute(series, m, stream).imputed_values[4] for m in range(1, 2001)])
print(f"mean draw at a censored slot: {draws.mean():.2f} (limit / 2 = 7.5)")
