import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from femtoprop.campaign import bundled_campaign
from femtoprop.errors import DataError, DegenerateFitError, NoDataError
from femtoprop.geometry import Point, crossing_counts
from femtoprop.fitting import (
    LinkObservation,
    PartitionLossEstimate,
    RankDeficiencyWarning,
    default_pl_d0,
    estimate_sigma,
    fit_exponent,
    fit_free_intercept,
    fit_partitions_composite,
    fit_partitions_nnls,
    format_links,
    normalize_loss,
    objective,
    parse_links,
    residual_std,
    sse,
    synthetic_links,
)
from femtoprop.propagation import BAND_2P5, BAND_60, free_space_path_loss, partition_path_loss
from femtoprop.reference import THICKNESS_CM, partition_truth
from femtoprop.sitemodel import demo_site

TABLE1 = bundled_campaign(2.5).points()
TABLE2 = bundled_campaign(60).points()


def link(lid, d, excess, band=BAND_2P5, **counts):
    return LinkObservation(lid, d, band, free_space_path_loss(band, d) + excess, counts)


# exponent --------------------------------------------------------------------

def test_table1_exponent():
    n = fit_exponent(TABLE1, 1.0, 40.4)
    assert n == pytest.approx(2.40, abs=0.05)
    assert n == pytest.approx(2.403556012529270, abs=1e-12)


def test_exact_line_recovered():
    pts = [(d, 40.0 + 30.0 * math.log10(d)) for d in (1.5, 2, 5, 9, 17, 30)]
    assert fit_exponent(pts, 1.0, 40.0) == pytest.approx(3.0, abs=1e-9)


def test_single_point_solve():
    assert fit_exponent([(10.0, 40.4 + 24.0)], 1.0, 40.4) == pytest.approx(2.4, abs=1e-12)


def test_fit_errors():
    with pytest.raises(NoDataError, match="no observations"):
        fit_exponent([], 1.0, 40.0)
    with pytest.raises(DegenerateFitError):
        fit_exponent([(1.0, 50.0), (1.0, 52.0)], 1.0, 40.0)
    with pytest.raises(ValueError):
        fit_exponent([(-1.0, 50.0)], 1.0, 40.0)


@pytest.mark.parametrize("pts", [TABLE1, TABLE2])
@pytest.mark.parametrize("delta", [0.01, -0.01, 0.1, -0.1])
def test_perturbation_increases_sse(pts, delta):
    pl_d0 = 40.4 if pts is TABLE1 else default_pl_d0(BAND_60)
    n = fit_exponent(pts, 1.0, pl_d0)
    assert sse(pts, 1.0, pl_d0, n + delta) > sse(pts, 1.0, pl_d0, n)


point_sets = st.lists(st.tuples(st.floats(0.5, 100), st.floats(20, 140)), min_size=1, max_size=30)


@given(point_sets, st.integers(2, 5))
def test_duplication_invariance(pts, k):
    assume(any(abs(math.log10(d)) > 1e-3 for d, _ in pts))
    assert fit_exponent(pts * k, 1.0, 40.0) == pytest.approx(fit_exponent(pts, 1.0, 40.0), rel=1e-9)


@given(point_sets)
def test_fit_optimal_against_perturbation(pts):
    assume(any(abs(math.log10(d)) > 1e-2 for d, _ in pts))
    n = fit_exponent(pts, 1.0, 40.0)
    best = sse(pts, 1.0, 40.0, n)
    for delta in (0.01, -0.01, 0.1, -0.1):
        assert sse(pts, 1.0, 40.0, n + delta) > best


def test_sigma_examples():
    exact = [(d, 40.0 + 25.0 * math.log10(d)) for d in (2, 4, 8)]
    assert estimate_sigma(exact, 1.0, 40.0, 2.5) == pytest.approx(0.0, abs=1e-12)
    pts = [(10.0, 40.0 + 20.0 + 3.0), (10.0, 40.0 + 20.0 - 3.0)]
    assert estimate_sigma(pts, 1.0, 40.0, 2.0) == pytest.approx(3.0, abs=1e-12)


def test_table1_sigma_oracle():
    n = fit_exponent(TABLE1, 1.0, 40.4)
    sigma = estimate_sigma(TABLE1, 1.0, 40.4, n)
    assert 5.0 <= sigma <= 6.2
    assert sigma == pytest.approx(5.534076815974, abs=1e-9)


def test_table2_sigma_and_sample_std():
    pl0 = default_pl_d0(BAND_60)
    n = fit_exponent(TABLE2, 1.0, pl0)
    assert estimate_sigma(TABLE2, 1.0, pl0, n) == pytest.approx(7.931334694659439, abs=1e-9)
    assert residual_std(TABLE2, 1.0, pl0, n) == pytest.approx(8.0848, abs=1e-3)


@given(point_sets, st.floats(1, 4))
def test_sigma_nonnegative_and_zero_iff_exact(pts, n):
    s = estimate_sigma(pts, 1.0, 40.0, n)
    assert s >= 0
    exact = [(d, 40.0 + 10 * n * math.log10(d)) for d, _ in pts]
    assert estimate_sigma(exact, 1.0, 40.0, n) == pytest.approx(0.0, abs=1e-9)


def test_free_intercept_diagnostic():
    pts = [(d, 35.0 + 27.0 * math.log10(d)) for d in (1.5, 3, 7, 20)]
    pl0, n = fit_free_intercept(pts)
    assert (pl0, n) == (pytest.approx(35.0), pytest.approx(2.7))


# composite -------------------------------------------------------------------

def test_single_link_composite():
    est = fit_partitions_composite([link("a", 5.0, 5.4, drywall=1)])
    e = est.get("drywall", 2.5)
    assert e.mean_loss_db == pytest.approx(5.4, abs=1e-12)
    assert e.std_db == 0.0
    assert e.sample_count == 1


def test_composite_hand_example():
    # clear_glass and drywall each appear on two links; the tie goes to
    # clear_glass, then drywall sees the glass estimate
    links = [link("a", 4.0, 5.0, drywall=1),
             link("b", 6.0, 12.0, drywall=1, clear_glass=1),
             link("c", 8.0, 6.0, clear_glass=1)]
    est = fit_partitions_composite(links)
    glass, dry = est.get("clear_glass", 2.5), est.get("drywall", 2.5)
    assert glass.mean_loss_db == pytest.approx(9.0, abs=1e-9)
    assert glass.std_db == pytest.approx(3.0, abs=1e-9)
    assert dry.mean_loss_db == pytest.approx(4.0, abs=1e-9)
    assert dry.std_db == pytest.approx(1.0, abs=1e-9)


def test_composite_counts_scale_attribution():
    est = fit_partitions_composite([link("a", 5.0, 10.8, drywall=2)])
    assert est.get("drywall", 2.5).mean_loss_db == pytest.approx(5.4, abs=1e-12)


def test_sub_free_space_link_lowers_mean():
    low = LinkObservation("2.1", 7.8, BAND_60, 73.0, {"drywall": 1})
    assert low.excess_db == pytest.approx(73.0 - 85.85, abs=0.01)
    normal = link("x", 5.0, 6.0, band=BAND_60, drywall=1)
    alone = fit_partitions_composite([normal]).get("drywall", 60.0).mean_loss_db
    both = fit_partitions_composite([normal, low]).get("drywall", 60.0).mean_loss_db
    assert both < alone
    assert both == pytest.approx((6.0 + low.excess_db) / 2, abs=1e-9)


def test_bands_fitted_separately():
    links = [link("a", 5.0, 5.4, drywall=1), link("b", 5.0, 6.0, band=BAND_60, drywall=1)]
    est = fit_partitions_composite(links)
    assert est.bands() == [2.5, 60.0]
    assert est.get("drywall", 60.0).mean_loss_db == pytest.approx(6.0)


def test_no_data_errors():
    with pytest.raises(NoDataError):
        fit_partitions_composite([])
    with pytest.raises(NoDataError):
        fit_partitions_nnls([])
    with pytest.raises(NoDataError, match="whiteboard"):
        fit_partitions_nnls([link("a", 5.0, 1.0, drywall=1, whiteboard=0)])


# nnls ------------------------------------------------------------------------

def _full_rank_links(truth, band, noise=0.0, seed=0, n=40):
    rng = np.random.default_rng(seed)
    names = sorted(truth)
    links = []
    for i in range(n):
        counts = {m: int(rng.integers(0, 3)) for m in names}
        counts[names[i % len(names)]] += 1
        d = float(rng.uniform(2, 30))
        excess = sum(c * truth[m] for m, c in counts.items())
        links.append(link(f"L{i}", d, excess + noise * rng.standard_normal(), band=band, **counts))
    return links


@pytest.mark.parametrize("band", [BAND_2P5, BAND_60])
def test_nnls_noiseless_recovery(band):
    truth = partition_truth(band.frequency_ghz)
    est = fit_partitions_nnls(_full_rank_links(truth, band))
    for m, x in truth.items():
        assert est.get(m, band.frequency_ghz).mean_loss_db == pytest.approx(x, abs=1e-6)
    assert est.residual_norm_db[band.frequency_ghz] < 1e-6


def test_nnls_clamps_negative_truth():
    truth = {"drywall": 5.0, "clear_glass": -3.0}
    est = fit_partitions_nnls(_full_rank_links(truth, BAND_2P5))
    assert est.get("clear_glass", 2.5).mean_loss_db == 0.0
    assert est.residual_norm_db[2.5] > 0


def _kkt_gradient(est, links, band):
    names = sorted({m for l in links for m in l.counts})
    A = np.array([[l.counts.get(m, 0) for m in names] for l in links], dtype=float)
    b = np.array([l.excess_db for l in links])
    x = np.array([est.get(m, band).mean_loss_db for m in names])
    return x, A.T @ (A @ x - b)


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.floats(0, 4))
def test_nnls_kkt_conditions(seed, noise):
    truth = {"drywall": 5.4, "clear_glass": 0.3, "mesh_glass": 7.7, "clutter": -1.0}
    links = _full_rank_links(truth, BAND_2P5, noise=noise, seed=seed, n=25)
    est = fit_partitions_nnls(links)
    x, grad = _kkt_gradient(est, links, 2.5)
    scale = max(1.0, float(np.abs(grad).max(initial=0)), 1e3)
    assert np.all(x >= 0)
    assert np.all(grad >= -1e-8 * scale)
    assert np.all(np.abs(grad[x > 0]) <= 1e-8 * scale)


def test_nnls_warns_on_proportional_columns():
    links = [link("a", 5.0, 10.0, drywall=1, clear_glass=1),
             link("b", 7.0, 20.0, drywall=2, clear_glass=2)]
    with pytest.warns(RankDeficiencyWarning, match="clear_glass"):
        est = fit_partitions_nnls(links)
    assert est.get("drywall", 2.5).mean_loss_db + est.get("clear_glass", 2.5).mean_loss_db == pytest.approx(10.0)


def test_nnls_silent_on_full_rank():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit_partitions_nnls(_full_rank_links({"drywall": 5.0, "clutter": 2.0}, BAND_2P5))


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(0.1, 0.6))
def test_nnls_never_worse_than_nonnegative_composite(seed, mixed):
    truth = partition_truth(2.5)
    links = synthetic_links(BAND_2P5, truth, n_links=30, seed=seed, mixed_fraction=mixed)
    comp = fit_partitions_composite(links)
    assume(all(e.mean_loss_db >= 0 for e in comp.entries))
    assert objective(fit_partitions_nnls(links), links) <= objective(comp, links) + 1e-9


@pytest.mark.parametrize("band", [BAND_2P5, BAND_60])
def test_round_trip_through_forward_model(band):
    site = demo_site()
    rng = np.random.default_rng(3)
    links = []
    while len(links) < 300:
        tx = Point(*rng.uniform(0, 16, 2))
        rx = Point(*rng.uniform(0, 16, 2))
        if tx.distance_to(rx) < 1.0:
            continue
        br = partition_path_loss(site, tx, rx, band)
        counts = {t.material: t.count for t in br.walls}
        assert counts == crossing_counts(site, tx, rx)
        for t in br.clutter:
            counts[t.material] = counts.get(t.material, 0) + t.count
        if counts:
            links.append(LinkObservation(str(len(links)), br.distance_m, band, br.total_pl_db, counts))
    est = fit_partitions_nnls(links)
    for m in est.materials():
        expected = site.materials[m].loss_at(band.frequency_ghz)
        assert est.get(m, band.frequency_ghz).mean_loss_db == pytest.approx(expected, abs=1e-6)


# normalization ---------------------------------------------------------------

def _estimate(pairs, band=60.0):
    from femtoprop.fitting import MaterialLoss
    return PartitionLossEstimate("composite", tuple(MaterialLoss(m, band, v, 0.0, 1) for m, v in pairs))


def test_normalize_examples():
    est = normalize_loss(_estimate([("drywall", 6.0), ("mesh_glass", 10.2), ("clutter", 1.2)]),
                         THICKNESS_CM)
    assert est.get("drywall", 60).normalized_db_per_cm == pytest.approx(2.4, abs=1e-12)
    assert est.get("mesh_glass", 60).normalized_db_per_cm == pytest.approx(31.875, abs=1e-12)
    assert round(est.get("mesh_glass", 60).normalized_db_per_cm, 1) == 31.9
    assert est.get("clutter", 60).normalized_db_per_cm is None


def test_normalize_accepts_material_objects():
    est = normalize_loss(_estimate([("drywall", 6.0), ("clutter", 1.2)]), demo_site().materials)
    assert est.get("drywall", 60).normalized_db_per_cm == pytest.approx(2.4)
    assert est.get("clutter", 60).normalized_db_per_cm is None


def test_empty_estimate_is_falsy():
    assert not PartitionLossEstimate("nnls")


# synthetic generator and links file ------------------------------------------

def test_synthetic_links_deterministic_and_noiseless_exact():
    truth = partition_truth(2.5)
    a = synthetic_links(BAND_2P5, truth, seed=5)
    assert a == synthetic_links(BAND_2P5, truth, seed=5)
    clean = synthetic_links(BAND_2P5, truth, noise_db=0.0, seed=5)
    for l in clean:
        assert l.excess_db == pytest.approx(sum(c * truth[m] for m, c in l.counts.items()), abs=1e-9)


def test_links_csv_round_trip():
    links = synthetic_links(BAND_60, partition_truth(60.0), n_links=12, seed=1, mixed_fraction=0.5)
    text = format_links(links)
    back = parse_links(text)
    assert [(l.link_id, l.distance_m, l.band, l.measured_pl_db) for l in back] == \
        [(l.link_id, l.distance_m, l.band, l.measured_pl_db) for l in links]
    for a, b in zip(links, back):
        assert {m: n for m, n in b.counts.items() if n} == dict(a.counts)


@pytest.mark.parametrize("text", [
    "",
    "id,d,f,pl\n",
    "link_id,distance_m,freq_ghz,measured_pl_db,drywall\nA,5,2.5,60\n",
    "link_id,distance_m,freq_ghz,measured_pl_db,drywall\nA,5,2.5,60,x\n",
    "link_id,distance_m,freq_ghz,measured_pl_db,drywall\nA,-5,2.5,60,1\n",
])
def test_links_csv_errors(text):
    with pytest.raises(DataError):
        parse_links(text)
