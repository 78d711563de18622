import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critchemo.core import RadialField, make_grid
from critchemo.dynamics import (
    TRACE_COLUMNS,
    Controls,
    Event,
    SimState,
    StepBudgetExhausted,
    TooFewSamples,
    evolve,
    initial_state,
    moment_rate_check,
    step,
)
from critchemo.experiments import InitialDataSpec, RunConfig, diffusive_time, make_initial
from critchemo.functionals import moment_rate
from critchemo.potential import integrate

RUN = RunConfig(n=512)


def run_mu(mu, steady, p, keep=True):
    g = RUN.grid(p.d)
    u, v = make_initial(InitialDataSpec(mu=mu, lam=2.0), steady, g)
    t_end = RUN.horizon_factor * diffusive_time(u, p)
    ctl = Controls(sample_every=t_end / RUN.samples, linf_cap=RUN.linf_cap, keep_states=keep)
    return evolve(initial_state(u, v, p), t_end, ctl), diffusive_time(u, p), t_end


@pytest.fixture(scope="module")
def sub_run(steady, sym):
    return run_mu(0.9, steady, sym)


@pytest.fixture(scope="module")
def super_run(steady, sym):
    return run_mu(1.1, steady, sym)


def gaussian_pair(n=256, r_max=6.0, amp=1.0, v_amp=1.0):
    g = make_grid(r_max, n)
    prof = np.exp(-g.r**2)
    return RadialField(g, amp * prof), RadialField(g, v_amp * prof)


def test_zero_data_is_stationary(sym):
    g = make_grid(5, 64)
    z = RadialField.zeros(g)
    s = initial_state(z, z, sym)
    out = step(s)
    assert not out.u.values.any() and not out.v.values.any() and out.t == s.t


def test_step_conserves_mass(sym):
    u, v = gaussian_pair(amp=3.0, v_amp=2.0)
    s = initial_state(u, v, sym)
    for _ in range(20):
        new = step(s)
        assert abs(integrate(new.u) / integrate(s.u) - 1) <= 1e-14
        assert abs(integrate(new.v) / integrate(s.v) - 1) <= 1e-14
        s = new


def test_state_requires_positive_dt(sym):
    u, v = gaussian_pair()
    with pytest.raises(ValueError):
        SimState(t=0.0, u=u, v=v, dt=0.0, params=sym)


def test_porous_medium_sup_norm_nonincreasing(sym):
    u, v = gaussian_pair(v_amp=0.0)
    s = initial_state(u, v, sym)
    sup = [u.values.max()]
    for _ in range(100):
        s = step(s)
        sup.append(s.u.values.max())
        assert not s.v.values.any()
    assert np.all(np.diff(sup) <= 0)


def _pme_solution(n, t=0.1):
    from critchemo.core import symmetric_params

    u, v = gaussian_pair(n=n, v_amp=0.0)
    tr = evolve(initial_state(u, v, symmetric_params(3)), t, Controls(sample_every=t))
    return u.grid, tr.states[-1].u.values


def _coarsen(f, g):
    w = g.weights
    return (f[0::2] * w[0::2] + f[1::2] * w[1::2]) / (w[0::2] + w[1::2])


@pytest.mark.slow
def test_porous_medium_self_convergence():
    sol = {n: _pme_solution(n) for n in (512, 1024, 2048)}
    errs = []
    for n in (512, 1024):
        gc, uc = sol[n]
        gf, uf = sol[2 * n]
        errs.append(np.dot(np.abs(uc - _coarsen(uf, gf)), gc.weights))
    assert errs[0] / errs[1] >= 3


def test_regularization_converges_to_newtonian(sym):
    u, v = gaussian_pair()
    dx = u.grid.r_max / u.grid.n
    finals = {}
    for eps in (0.0, 4 * dx, 2 * dx, dx):
        tr = evolve(initial_state(u, v, sym, eps=eps), 0.1, Controls(sample_every=0.1))
        finals[eps] = tr.states[-1].u.values
    w = u.grid.weights
    gaps = [np.dot(np.abs(finals[e] - finals[0.0]), w) for e in (4 * dx, 2 * dx, dx)]
    assert gaps[0] > gaps[1] > gaps[2]


@settings(max_examples=15, deadline=None)
@given(amps=st.lists(st.floats(0.0, 20.0), min_size=4, max_size=4),
       widths=st.lists(st.floats(0.2, 3.0), min_size=4, max_size=4))
def test_steps_stay_positive_and_conservative(sym, amps, widths):
    g = make_grid(8, 128)
    u = RadialField(g, amps[0] * np.exp(-((g.r / widths[0]) ** 2)) + amps[1] * (g.r < widths[1]))
    v = RadialField(g, amps[2] * np.exp(-((g.r / widths[2]) ** 2)) + amps[3] * (g.r < widths[3]))
    s = initial_state(u, v, sym)
    m0 = (integrate(u), integrate(v))
    for _ in range(25):
        s = step(s)
        assert s.u.values.min() >= 0 and s.v.values.min() >= 0
    for m, f in zip(m0, (s.u, s.v)):
        assert abs(integrate(f) - m) <= 1e-13 * max(m, 1e-300)


def test_subcritical_run(sub_run):
    tr, t_diff, t_end = sub_run
    assert tr.terminal_event is Event.HORIZON
    assert tr.t_final == pytest.approx(t_end, rel=1e-14) and t_end >= 5 * t_diff
    linf = tr.column("linf_u")
    assert linf.max() <= 1.5 * linf[0]


def test_supercritical_run(super_run, sym):
    tr, _, _ = super_run
    assert tr.terminal_event in (Event.DT_COLLAPSE, Event.LINF_CAP)
    assert np.all(np.diff(tr.column("m2")) < 0)
    assert all(moment_rate(s.u, s.v, sym) < 0 for s in tr.states)


@pytest.mark.parametrize("which", ["sub_run", "super_run"])
def test_trace_invariants(which, request):
    tr, _, _ = request.getfixturevalue(which)
    t = tr.column("t")
    assert np.all(np.diff(t) > 0)
    for col in ("M1", "M2"):
        m = tr.column(col)
        assert np.max(np.abs(m / m[0] - 1)) <= 1e-10
    F = tr.column("F")
    assert np.all(np.diff(F) <= 1e-6 * abs(F[0]))
    assert Event.ENERGY_VIOLATION not in [e for e, _ in tr.events]
    assert not tr.grid_too_small


def test_moment_rate_check_runs(sub_run, super_run):
    assert moment_rate_check(sub_run[0]) <= 5e-2
    assert moment_rate_check(super_run[0], until=0.9) <= 5e-2


def test_moment_rate_check_at_steady_state(steady, sym):
    g = make_grid(60, 512)
    u, v = make_initial(InitialDataSpec(mu=1.0, lam=2.0, taper_radius=50.0, taper_width=3.0), steady, g)
    tr = evolve(initial_state(u, v, sym), 2.0, Controls(sample_every=0.2))
    assert moment_rate_check(tr) <= 2e-2


def test_moment_rate_check_degenerate(sym):
    g = make_grid(5, 64)
    z = RadialField.zeros(g)
    tr = evolve(initial_state(z, z, sym), 1.0, Controls(sample_every=0.25))
    assert moment_rate_check(tr) == 0
    with pytest.raises(TooFewSamples):
        moment_rate_check(tr, samples=tr.states[:2])


def test_event_plumbing(sym):
    u, v = gaussian_pair(amp=3.0)
    s = initial_state(u, v, sym)
    with pytest.raises(ValueError):
        evolve(s, 0.0)
    with pytest.raises(ValueError):
        evolve(s, 1.0, Controls(linf_cap=-1))
    tr = evolve(s, 1.0, Controls(sample_every=0.5, dt_min=1e3))
    assert tr.terminal_event is Event.DT_COLLAPSE
    with pytest.raises(StepBudgetExhausted):
        evolve(s, 1.0, Controls(sample_every=1.0, max_steps=10))


def test_grid_too_small_flag(sym):
    g = make_grid(4, 128)
    u = RadialField(g, np.exp(-(((g.r - 3.5) / 0.3) ** 2)))
    tr = evolve(initial_state(u, u, sym), 1e-3, Controls(sample_every=1e-3))
    assert tr.grid_too_small


def test_trace_csv(super_run, tmp_path):
    tr, _, _ = super_run
    path = tmp_path / "trace.csv"
    tr.to_csv(path, ["critchemo test"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# critchemo test"
    assert lines[1] == ",".join(TRACE_COLUMNS)
    assert lines[-1].startswith(f"# event,{tr.terminal_event.value},")
    body = [ln for ln in lines[2:] if not ln.startswith("#")]
    assert len(body) == len(tr.rows)
    assert [float(x) for x in body[-1].split(",")] == list(tr.rows[-1])
