"""
The polynomial / non-polynomial dichotomy of the order-0 stable template.

MODEL-B gives the straight line T(t) = -t/6; MODEL-C gives the lacunary
series -(eps/l2) sum (l3/l2)^k sin(l1^k t), whose second divided differences
grow logarithmically because l1^2 l3 / l2 = 1.
"""
import numpy as np

from phcharts.charts import build_unstable_chart
from phcharts.models import make_model
from phcharts.templates import classify_template, extract_template

grid = np.linspace(-0.5, 0.5, 41)
for name in "BC":
    chart = build_unstable_chart(make_model(name), 10)
    T = extract_template(chart, 0, grid)
    v = classify_template(T, 3)
    print(f"MODEL-{name}: {v.verdict}, fit residual {v.residual:.2e}")
    if v.probe:
        print("  divided differences:", v.probe["growth"],
              "| second order:", v.probe["second_order"]["growth"])
        for row in v.probe["table"][:6]:
            print(f"    j={row['j']:2d}  D={row['D']:.3e}")
