import math

import pytest

from coexqkd.linkmodel import (ClassicalChannel, ClassicalPlan, FiberSpan, FilterElement,
                               LinkTopology, LumpedLoss, loss_budget, received_classical_power,
                               received_classical_power_dbm, receiver_filter_chain, transmittance)
from coexqkd.mathcore import linear_to_db


def test_loss_budget_rows_and_totals():
    b = loss_budget(receiver_filter_chain())
    assert [r[1] for r in b.rows] == [0.8, 0.6, 0.8, 1.0, 4.0, 1.9]
    assert [r[2] for r in b.rows] == [45.0, 45.0, 45.0, 32.9, 30.0, None]
    assert [r[3] for r in b.rows] == [True, True, True, False, True, False]
    assert b.total_insertion_db == pytest.approx(9.1)
    # the transmitter-side CWDM does not isolate the receiver
    assert b.total_rx_isolation_db == pytest.approx(152.9)


def test_budget_format_marks_lower_bounds():
    text = loss_budget(receiver_filter_chain()).format()
    assert "> 45" in text and "32.9" in text and "> 30" in text
    assert text.splitlines()[-1].split()[-2:] == ["9.1", "152.9"]


def test_filter_validation():
    with pytest.raises(ValueError):
        FilterElement("x", -0.1)
    with pytest.raises(ValueError):
        FilterElement("x", 1.0, location="middle")
    with pytest.raises(ValueError):
        FilterElement("x", 1.0, kind="magic")
    fbg = receiver_filter_chain()[4]
    assert fbg.noise_db == 1.8
    assert fbg.isolation_label() == "> 30"


def test_fiber_transmittance():
    link = LinkTopology((FiberSpan(95.5),))
    assert linear_to_db(transmittance(link, 1310.0)) == pytest.approx(34.8002)
    assert linear_to_db(transmittance(link, 1550.0)) == pytest.approx(20.055)
    assert transmittance(link, 1310.0, 10.0, 10.0) == 1.0


def test_lumped_losses_are_band_dependent():
    att = tuple(LumpedLoss(51.5 * f, 5.0, 5.583, f"a{i}") for i, f in enumerate((0.25, 0.5, 0.75)))
    link = LinkTopology((FiberSpan(51.5, 0.371),), att)
    assert linear_to_db(transmittance(link, 1310.0)) == pytest.approx(34.1065)
    assert linear_to_db(transmittance(link, 1550.0)) == pytest.approx(51.5 * 0.21 + 3 * 5.583)
    # interval (from, to] contains only the middle attenuator
    assert linear_to_db(transmittance(link, 1310.0, 20.0, 30.0)) == pytest.approx(10 * 0.371 + 5)


def test_element_at_origin_counts_once():
    link = LinkTopology((FiberSpan(10.0),), (LumpedLoss(0.0, 3.0),))
    assert linear_to_db(transmittance(link, 1310.0)) == pytest.approx(3.644 + 3.0)
    assert linear_to_db(transmittance(link, 1310.0, 1.0, 10.0)) == pytest.approx(9 * 0.3644)


def test_topology_validation():
    with pytest.raises(ValueError):
        LinkTopology(())
    with pytest.raises(ValueError):
        LinkTopology((FiberSpan(10.0),), (LumpedLoss(12.0, 1.0),))
    with pytest.raises(ValueError):
        LinkTopology((FiberSpan(10.0),), (LumpedLoss(5.0, 1.0), LumpedLoss(2.0, 1.0)))
    with pytest.raises(ValueError):
        FiberSpan(10.0, alpha_q_db_per_km=3.0)
    with pytest.raises(ValueError):
        LumpedLoss(1.0, -1.0)


def test_segments_split_at_lumped_elements():
    link = LinkTopology((FiberSpan(10.0), FiberSpan(20.0, 0.4)),
                        (LumpedLoss(5.0, 1.0, name="a"), LumpedLoss(10.0, 2.0, name="b")))
    segs = [(k, getattr(o, "name", None), L) for k, o, L in link.segments()]
    assert segs == [("fiber", None, 5.0), ("lumped", "a", 0.0), ("fiber", None, 5.0),
                    ("lumped", "b", 0.0), ("fiber", None, 20.0)]
    assert link.length_km == 30.0


def test_scaled_to_length_keeps_relative_positions():
    att = (LumpedLoss(12.875, 5.0), LumpedLoss(25.75, 5.0))
    link = LinkTopology((FiberSpan(51.5),), att).scaled_to_length(103.0)
    assert link.length_km == pytest.approx(103.0)
    assert [el.position_km for el in link.lumped] == pytest.approx([25.75, 51.5])


def test_dwdm_grid():
    plan = ClassicalPlan.dwdm_grid(8.9)
    assert len(plan.channels) == 13
    assert plan.total_launch_dbm == pytest.approx(8.9, abs=1e-12)
    wl = [c.wavelength_nm for c in plan.channels]
    assert wl[6] == pytest.approx(1550.1)
    assert wl == sorted(wl, reverse=True)  # ascending frequency
    assert 1545.0 < wl[-1] < wl[0] < 1555.0
    assert ClassicalPlan.dwdm_grid(10.0, count=0).channels == ()


def test_plan_validation_and_rescale():
    with pytest.raises(ValueError):
        ClassicalPlan((ClassicalChannel(1310.0, 0.0),))
    ClassicalPlan((ClassicalChannel(1310.0, 0.0),), allow_out_of_band=True)
    with pytest.raises(ValueError):
        ClassicalPlan((), direction="sideways")
    plan = ClassicalPlan.dwdm_grid(8.9).with_total_power(16.7)
    assert plan.total_launch_dbm == pytest.approx(16.7, abs=1e-12)
    with pytest.raises(ValueError):
        ClassicalPlan(()).with_total_power(0.0)


def test_received_classical_power():
    link = LinkTopology((FiberSpan(95.5),))
    assert received_classical_power_dbm(link, ClassicalPlan.dwdm_grid(8.9)) == pytest.approx(-12.095)
    att = tuple(LumpedLoss(51.5 * f, 5.0, 5.583) for f in (0.25, 0.5, 0.75))
    link51 = LinkTopology((FiberSpan(51.5, 0.371),), att)
    assert received_classical_power_dbm(link51, ClassicalPlan.dwdm_grid(16.7)) == pytest.approx(-11.804)
    assert received_classical_power(link, ClassicalPlan(())) == 0.0
    assert math.isinf(received_classical_power_dbm(link, ClassicalPlan(())))
