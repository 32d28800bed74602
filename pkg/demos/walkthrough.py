"""End-to-end walkthrough of the package on the built-in devices.

Run with ``python demos/walkthrough.py``. Prints a short report; nothing is
written to disk.
"""
import numpy as np

from omcavity import bath, cooling, counting, design, model
from omcavity.model import TWO_PI


def cooling_section():
    law = model.HotBathModel.eight_shield()
    grid = np.geomspace(1, 1000, 61)
    print("back-action cooling, 8-shield device")
    for beta in (0.0, model.BETA_FIT):
        cc = cooling.ceff_curve(model.EIGHT_SHIELD, law, cooling.SweepSpec(grid, beta=beta))
        n = [r.n_avg for r in cc.results]
        where = "below the sweep" if cc.c_eff[0] > 1 else f"at n_c={cc.crossing:.0f}"
        print(f"  beta={beta:.2e}/W  min <n>={min(n):.3f}  peak C_eff={cc.peak:.2f} "
              f"at n_c={cc.peak_n_c:.0f}  C_eff=1 {where}")
    m = cooling.ceff_map(model.EIGHT_SHIELD, law, [1.0], [3.9e5])
    print(f"  Q_c=3.9e5, n_c=1: <n>={m.n_avg[0, 0]:.3f}, C_eff={m.c_eff[0, 0]:.2f}")


def bath_section():
    law = model.HotBathModel.eight_shield()
    x = np.logspace(-2, 6, 400)
    y = law.total_damping_law(x) * (1 + 0.05 * np.random.default_rng(0).standard_normal(x.size))
    f = bath.fit_piecewise_linewidth(x, y)
    print("hot-bath fit to a noisy synthetic sweep (5%)")
    print(f"  gamma_phi/2pi={f.gamma_phi / TWO_PI:.0f} Hz  q1={f.low.exponent:.3f}  "
          f"q2={f.high.exponent:.3f}")
    print(f"  1D/2D occupancy ratio: {bath.occupancy_ratio_1d_2d(42, 2.3, 2):.3f}")


def ringdown_section():
    law = model.HotBathModel.eight_shield(beta=model.BETA_FIT)
    taus = np.geomspace(1e-3, 1e-1, 12)
    ds = counting.simulate_ringdown(model.EIGHT_SHIELD, law, counting.DEFAULT_CHAIN, taus, 60.0, 0,
                                    n_pulses=10**7)
    fit = counting.fit_ringdown(ds)
    print("pulsed ringdown, 1e7 pulses per delay")
    print(f"  Q_m fit={fit.q_m_hat:.4e}  truth={model.EIGHT_SHIELD.mode.q_m:.4e}")


def design_section():
    res = design.multi_restart(design.default_surrogate(), n_restarts=8, seed=1)
    d = res.best.design
    print("simplex search on the surrogate fitness, 8 restarts")
    print(f"  {len(res.trace)} evaluations, best g0/2pi={res.best.g0 / TWO_PI / 1e6:.3f} MHz")
    print("  " + " ".join(f"{p}={getattr(d, p):.1f}" for p in design.PARAMS))


if __name__ == "__main__":
    cooling_section()
    bath_section()
    ringdown_section()
    design_section()
