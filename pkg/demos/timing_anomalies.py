"""Walk through the three parallel timing anomalies.

For each composition function, U is faster than V, yet on the word ``aa``
at t = 2 the composite U*W is slower than V*W. The strong monotonicity check then names
the residence condition that the context W breaks.

Run with ``python demos/timing_anomalies.py``.
"""

from smpkit.anomaly import detect_anomaly, strong_monotonic
from smpkit.models import anomaly_instance


def main():
    for kind in ("product", "min", "max"):
        U, V, W = anomaly_instance(kind)
        rep = detect_anomaly(U, V, W, kind, "aa", 2)
        print(f"{kind:>7}: P(U)={rep.p_u:.3f}  P(V)={rep.p_v:.3f}  P(U*W)={rep.p_uw:.3f}  P(V*W)={rep.p_vw:.3f}")
        verdict = strong_monotonic(U, V, W, None, kind)
        w = verdict.witness
        print(f"         anomaly={rep.anomaly}; monotonicity fails on {verdict.violated_condition} at t={w['t']:.3f}")


if __name__ == "__main__":
    main()
