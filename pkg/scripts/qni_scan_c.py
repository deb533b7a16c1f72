"""
QNI scan of MODEL-C: per-scale quantile distances, the fitted exponent and
the semi-analytic prediction log(l2/l3) + V log(1/l3).
"""
from phcharts.models import make_model
from phcharts.qni import qni_scan, qni_symmetry_check

m = make_model("C")
fwd = qni_scan(m, V=1.0, kmin=1, kmax=5)
inv = qni_scan(m, V=1.0, kmin=1, kmax=5, inverse=True)
for (k1, k2), q, f in zip(fwd.scales, fwd.thresholds, fwd.fractions):
    print(f"k1={k1} k2={k2}  Q={q:.3e}  surviving fraction {f:.3f}")
print(f"verdict {fwd.verdict}, alpha {fwd.alpha:.5f} (predicted {fwd.predicted_alpha:.5f}), "
      f"C {fwd.C:.3e}")
print("forward/inverse symmetry:", qni_symmetry_check(fwd, inv)[0])
