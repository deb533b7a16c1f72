"""
MODEL-B is jointly integrable: level-1 stable and unstable charts have
empty obstruction set, and the joint surface is the graph x2 = -x1 x3 / 6.
"""
import numpy as np

from phcharts.charts import build_unstable_chart
from phcharts.compat import (build_joint_surface, build_stable_chart, compat_jets,
                             raise_level, tangency_order, whitney_cross_extend)
from phcharts.models import make_model
from phcharts.nform import brush_leaf, stable_leaf

m = make_model("B")
unstable = raise_level(build_unstable_chart(m, 10), 1)
stable = build_stable_chart(m, 1, 10)
cj = compat_jets(stable, unstable, 8)
print("I_x:", cj.index_set or "empty", "| compatibility order", cj.compat_order)
S = build_joint_surface(stable, unstable, whitney_cross_extend(cj, 3))
g = np.linspace(-S.rho, S.rho, 11)
p = S(g[:, None], g[None, :])
print("max |x2 + x1 x3 / 6| on S:", float(np.max(np.abs(p[..., 1] + p[..., 0] * p[..., 2] / 6))))
for leaf in (stable_leaf(m, np.array([0.2, 0.0, 0.0]), 10), brush_leaf(m, 0.2, 10)):
    print("tangency:", tangency_order(S, leaf).label(8))
