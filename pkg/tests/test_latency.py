from fractions import Fraction

import pytest

from paratalk.config import RuntimeConfig
from paratalk.serve.latency import (
    LatencyReport,
    LatencyStamps,
    LoopbackScenario,
    SimulatedScenario,
    VirtualClock,
    default_messages,
    measure_latency,
)

# stamps shaped after a measured 0.4652 s total / 0.3590 s first-chunk row
PREFILL, STEP, STEPS_TO_FIRST = "0.132", "0.0227", 10
UPLINK, DOWNLINK = "0.05", "0.0562"


def _scenario(**kw):
    args = dict(prefill_s=float(PREFILL), step_s=float(STEP), uplink_s=float(UPLINK), downlink_s=float(DOWNLINK))
    args.update(kw)
    return SimulatedScenario(RuntimeConfig(), default_messages(), **args)


def test_injected_stamps_give_exact_network():
    s = LatencyStamps(Fraction(0), Fraction("0.4652"), Fraction(0), Fraction("0.3590"))
    r = LatencyReport.from_stamps([s])
    assert r.derived_network_s == Fraction("0.1062")
    assert r.to_dict()["derived_network_s"] == 0.1062


def test_float_stamps_identity():
    r = LatencyReport.from_stamps([LatencyStamps(0.0, 0.4652, 0.0, 0.3590)])
    assert r.derived_network_s == r.total_s - r.first_chunk_s
    assert abs(r.derived_network_s - 0.1062) < 1e-12


def test_simulated_reproduces_row():
    r = measure_latency(5, _scenario())
    # first chunk = prefill + 10 steps; total adds uplink and downlink
    assert r.first_chunk_s == Fraction(PREFILL) + STEPS_TO_FIRST * Fraction(STEP) == Fraction("0.359")
    assert r.total_s == Fraction("0.4652")
    assert r.derived_network_s == Fraction(UPLINK) + Fraction(DOWNLINK) == Fraction("0.1062")
    assert r.per_step_s == Fraction(STEP)
    assert not r.partial and r.runs == 5


def test_per_step_pooled_mean():
    stamps = [
        LatencyStamps(0.0, 1.0, 0.0, 0.5, step_durations=(0.01,) * 4),
        LatencyStamps(0.0, 1.0, 0.0, 0.5, step_durations=(0.02, 0.04)),
    ]
    r = LatencyReport.from_stamps(stamps)
    assert abs(r.per_step_s - (4 * 0.01 + 0.02 + 0.04) / 6) < 1e-12


def test_ten_ms_steps():
    r = measure_latency(1, _scenario(prefill_s=0.0, step_s=0.01, uplink_s=0.0, downlink_s=0.0))
    assert r.per_step_s == Fraction("0.01")
    assert r.first_chunk_s == STEPS_TO_FIRST * Fraction("0.01")
    assert r.derived_network_s == 0


def test_zero_cost_clock():
    r = measure_latency(2, _scenario(prefill_s=0, step_s=0, uplink_s=0, downlink_s=0))
    assert r.total_s == r.first_chunk_s == r.per_step_s == r.derived_network_s == 0


def test_failed_runs_give_partial_report():
    def flaky(i):
        if i % 2:
            raise RuntimeError("boom")
        return LatencyStamps(0.0, 0.3, 0.0, 0.2)

    r = measure_latency(4, flaky)
    assert r.partial and r.failed_runs == 2 and r.runs == 2
    assert abs(r.total_s - 0.3) < 1e-12
    none = measure_latency(1, lambda i: 1 / 0)
    assert none.partial and none.runs == 0
    with pytest.raises(ValueError):
        measure_latency(0, flaky)


def test_virtual_clock():
    c = VirtualClock()
    c.advance(0.5)
    assert c() == 0.5
    with pytest.raises(ValueError):
        c.advance(-1)


def test_loopback_is_consistent():
    r = measure_latency(2, LoopbackScenario(RuntimeConfig(), default_messages()))
    assert not r.partial
    assert r.total_s > 0 and r.first_chunk_s > 0 and r.per_step_s > 0
    assert r.derived_network_s == r.total_s - r.first_chunk_s
