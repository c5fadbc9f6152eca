import statistics

import numpy as np
import pytest

from fchosim import engine
from fchosim.config import HoMode, SimConfig, UeScheme
from fchosim.engine import Simulation, SweepError, aggregate, config_for, sweep, sweep_configs
from fchosim.signaling import EventKind as K, events_csv_text


def tiny(**dotted) -> SimConfig:
    c = SimConfig.desk()
    c.ue.n_ue = 6
    c.run.duration_s = 4.0
    for k, v in dotted.items():
        c.set(k, v)
    return c.validate()


STRESS = {"link.gamma_out_db": 0.0, "link.gamma_in_db": 2.0, "link.t_rlf_ms": 500}


def test_default_run_length():
    c = SimConfig()
    assert c.ue.n_ue == 420
    assert c.n_ticks == 6000
    assert c.n_ticks * c.run.dt_ms // c.run.ssb_period_ms == 3000


def test_tick_and_ssb_counts():
    r = Simulation(tiny()).run()
    assert r.ticks == 400 and r.ssb_instants == 200


def test_deterministic():
    a, b = Simulation(tiny(**{"run.seed": 3})).run(), Simulation(tiny(**{"run.seed": 3})).run()
    assert a.events == b.events
    assert a.report == b.report
    assert events_csv_text(a.events, a.meta.to_header()) == events_csv_text(b.events, b.meta.to_header())


def test_seeds_differ():
    a, b = Simulation(tiny(**{"run.seed": 1})).run(), Simulation(tiny(**{"run.seed": 2})).run()
    assert a.events != b.events


def test_fading_toggle_keeps_motion():
    def track(cfg):
        pos = []
        Simulation(cfg, observer=lambda sim, t: pos.append(sim.mobility.positions.copy()) if t % 500 == 0 else None).run()
        return np.array(pos)

    assert np.array_equal(track(tiny()), track(tiny(**{"channel.fast_fading": True})))


def test_scheme_keeps_motion():
    def track(cfg):
        pos = []
        Simulation(cfg, observer=lambda sim, t: pos.append(sim.mobility.positions.copy()) if t % 500 == 0 else None).run()
        return np.array(pos)

    assert np.array_equal(track(tiny()), track(tiny(**{"ue.scheme": "mpue-a1"})))


@pytest.mark.parametrize("mode", ["cho", "fcho"])
def test_failures_reestablish_and_clear_set(mode):
    cfg = tiny(**STRESS, **{"handover.mode": mode, "run.duration_s": 8.0, "ue.n_ue": 10})
    cleared = []

    def obs(sim, t):
        for ev in sim.ledger._events:
            if ev.time == t and ev.kind in (K.HOF, K.RLF, K.REESTABLISH):
                cleared.append(len(sim.logic.sets[ev.ue_id]))

    r = Simulation(cfg, observer=obs).run()
    fails = [e for e in r.events if e.kind in (K.HOF, K.RLF)]
    reest = [e for e in r.events if e.kind is K.REESTABLISH]
    assert fails, "stress link should produce failures"
    assert len(reest) >= len(fails) - cfg.ue.n_ue
    assert all(n == 0 for n in cleared)


def test_stress_mode_changes_signalling():
    cho = Simulation(tiny(**STRESS)).run().report
    fcho = Simulation(tiny(**STRESS, **{"handover.mode": "fcho"})).run().report
    assert fcho.fcho_cfg_events > 0 and cho.fcho_cfg_events == 0


def test_sweep_product_order():
    cfgs = sweep_configs(tiny(), [HoMode.CHO, HoMode.FCHO], list(UeScheme), [60.0], [1])
    assert len(cfgs) == 6
    assert [(c.handover.mode, c.ue.scheme) for c in cfgs][:3] == [(HoMode.CHO, s) for s in UeScheme]
    assert len(sweep_configs(tiny(), list(HoMode), list(UeScheme), [60.0], range(1, 6))) == 30


def test_sweep_empty_axis():
    with pytest.raises(ValueError):
        sweep_configs(tiny(), [], [UeScheme.ISO], [60.0], [1])


def test_sweep_and_aggregate():
    reps = sweep(tiny(**{"ue.n_ue": 3, "run.duration_s": 3.0}), [HoMode.CHO], [UeScheme.ISO], [60.0], [1, 2])
    assert [r.seed for r in reps] == [1, 2]
    (row,) = aggregate(reps)
    assert row["n_seeds"] == 2
    assert row["outage_pct_mean"] == pytest.approx(statistics.fmean(r.outage_pct for r in reps))
    assert row["ho_attempts_per_ue_min_std"] == pytest.approx(statistics.stdev(r.ho_attempts_per_ue_min for r in reps))


def test_sweep_error_keeps_partial(monkeypatch):
    real = engine._run_report
    calls = []

    def flaky(cfg):
        calls.append(cfg.run.seed)
        if len(calls) == 2:
            raise RuntimeError("boom")
        return real(cfg)

    monkeypatch.setattr(engine, "_run_report", flaky)
    with pytest.raises(SweepError) as ei:
        sweep(tiny(**{"ue.n_ue": 2, "run.duration_s": 3.0}), [HoMode.CHO], [UeScheme.ISO], [60.0], [1, 2, 3])
    assert [r.seed for r in ei.value.partial] == [1]
    assert "seed2" in str(ei.value)


def test_config_for_copies():
    base = tiny()
    c = config_for(base, **{"run.seed": 9})
    assert c.run.seed == 9 and base.run.seed == 1


def test_string_mode_is_coerced():
    c = tiny()
    c.handover.mode = "fcho"
    r = Simulation(c).run()
    assert r.meta.mode == "fcho"
