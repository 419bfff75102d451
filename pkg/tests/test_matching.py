import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcpreg import similarity, synth
from gcpreg.core import GroundControlPoint, RasterImage, WindowSpec, extract_window
from gcpreg.errors import EmptyGcpList, GcpOutOfBounds, TooSmall
from gcpreg.matching import (
    MatchConfig,
    SimilaritySurface,
    build_surface,
    edge_extract,
    match_all,
    match_gcp,
)

SMALL = WindowSpec(7, 17)


def brute_surface(ref, sensed, gcp, spec, measure, bins=64):
    """Per-offset evaluation with the scalar measures."""
    R = spec.radius
    t = extract_window(ref, gcp.ref_coord, spec.target_size)
    out = np.full((2 * R + 1, 2 * R + 1), np.nan)
    for i in range(-R, R + 1):
        for j in range(-R, R + 1):
            s = extract_window(sensed, (gcp.ref_coord[0] + i, gcp.ref_coord[1] + j), spec.target_size)
            try:
                out[i + R, j + R] = similarity.evaluate(measure, t, s, bins, 255)
            except (similarity.ZeroVariance, similarity.DegenerateHistogram):
                pass
    return out


@pytest.fixture(scope="module")
def shifted_pair():
    ref = synth.textured_reference(128, 128, seed=3)
    sensed, _ = synth.generate_sensed(ref, synth.DistortionSpec("shift", (2, 3)))
    return ref, sensed


@pytest.mark.parametrize("measure", ["ssd", "ncc", "cra", "mi"])
def test_surface_matches_scalar_oracle(shifted_pair, measure):
    ref, sensed = shifted_pair
    gcp = GroundControlPoint("g", (60, 70))
    cfg = MatchConfig(SMALL, bins=16)
    surf = build_surface(ref, sensed, gcp, cfg, measure)
    brute = brute_surface(ref, sensed, gcp, SMALL, measure, bins=16)
    np.testing.assert_array_equal(surf.valid, np.isfinite(brute))
    np.testing.assert_allclose(surf.scores[surf.valid], brute[surf.valid], rtol=1e-12, atol=1e-12)


def test_surface_with_flat_cells_matches_oracle(shifted_pair):
    ref, sensed = shifted_pair
    data = np.array(sensed.samples)
    data[50:65, 60:75] = 77
    flat = RasterImage(data, 255)
    gcp = GroundControlPoint("g", (60, 70))
    for measure in ("ncc", "cra", "mi"):
        surf = build_surface(ref, flat, gcp, MatchConfig(SMALL, bins=16), measure)
        brute = brute_surface(ref, flat, gcp, SMALL, measure, bins=16)
        np.testing.assert_array_equal(surf.valid, np.isfinite(brute))
        np.testing.assert_allclose(surf.scores[surf.valid], brute[surf.valid], rtol=1e-12, atol=1e-12)
    assert not build_surface(ref, flat, gcp, MatchConfig(SMALL), "ncc").valid.all()


def test_identical_images_ssd_zero_at_origin(small_reference):
    gcp = GroundControlPoint("g", (64, 64))
    surf = build_surface(small_reference, small_reference, gcp, MatchConfig(SMALL), "ssd")
    assert surf.at((0, 0)) == 0
    assert surf.best() == ((0, 0), 0.0)


def test_translated_surface_is_shifted_copy(shifted_pair):
    ref, sensed = shifted_pair
    gcp = GroundControlPoint("g", (60, 70))
    cfg = MatchConfig(SMALL)
    moved = build_surface(ref, sensed, gcp, cfg, "ssd").scores
    still = build_surface(ref, ref, gcp, cfg, "ssd").scores
    # S_moved(o) = S_still(o - (2, 3)) wherever both are defined
    np.testing.assert_array_equal(moved[2:, 3:], still[:-2, :-3])
    assert build_surface(ref, sensed, gcp, cfg, "ssd").best()[0] == (2, 3)


def test_vhrr_surface_dimensions(reference):
    surf = build_surface(reference, reference, GroundControlPoint("g", (100, 100)), MatchConfig(), "ncc")
    assert surf.scores.shape == (21, 21)
    assert surf.radius == 10
    assert np.isfinite(surf.scores).all()


def test_build_surface_out_of_bounds(small_reference):
    with pytest.raises(GcpOutOfBounds):
        build_surface(small_reference, small_reference, GroundControlPoint("edge", (5, 64)), MatchConfig(SMALL), "ssd")


def test_tie_break_prefers_small_offsets():
    scores = np.zeros((5, 5))
    surf = SimilaritySurface("ncc", 2, scores)
    assert surf.best()[0] == (0, 0)
    scores = np.full((5, 5), 0.2)
    scores[0, 4] = scores[4, 0] = scores[1, 2] = 0.9
    assert SimilaritySurface("ncc", 2, scores).best()[0] == (-1, 0)
    scores = np.full((5, 5), 0.2)
    scores[3, 2] = scores[2, 1] = scores[2, 3] = 0.9
    # all magnitude 1: row-major order -> (0, -1) comes first
    assert SimilaritySurface("ncc", 2, scores).best()[0] == (0, -1)


def test_match_identical(reference):
    res = match_gcp(reference, reference, GroundControlPoint("g", (200, 300)))
    assert res.matched
    assert res.offset == (0, 0)
    assert res.ncc_score == pytest.approx(1.0, abs=1e-12)
    assert res.ssd_score == 0.0


def test_cloud_occlusion_unmatched(reference):
    data = np.array(reference.samples)
    data[200 - 25:200 + 26, 300 - 25:300 + 26] = 250
    res = match_gcp(reference, RasterImage(data, 255), GroundControlPoint("g", (200, 300)))
    assert not res.matched
    assert res.reason in ("zero_variance", "low_score")
    assert res.offset is None and res.sensed_coord is None


def test_partial_cloud_low_score(reference):
    rng = np.random.default_rng(0)
    data = np.array(reference.samples)
    # sensed search area replaced by unrelated noise: no correlation peak above threshold
    data[200 - 15:200 + 16, 300 - 15:300 + 16] = rng.integers(0, 256, (31, 31))
    res = match_gcp(reference, RasterImage(data, 255), GroundControlPoint("g", (200, 300)))
    assert not res.matched
    assert res.reason in ("low_score", "criterion_disagreement")


def test_combined_rejects_disagreeing_optima():
    rng = np.random.default_rng(5)
    ref_data = 2 * rng.integers(0, 100, (41, 41))
    ref = RasterImage(ref_data, 255)
    spec = WindowSpec(5, 15)
    t = ref_data[18:23, 18:23]
    sens = rng.integers(0, 256, (41, 41))
    # offset (2, 2): exact brightness-scaled copy -> NCC = 1, large SSD
    sens[20:25, 20:25] = t // 2 + 60
    # offset (-3, -3): copy plus +-1 noise -> small SSD, NCC slightly below 1
    sens[15:20, 15:20] = t + rng.choice([-1, 1], (5, 5))
    sensed = RasterImage(np.clip(sens, 0, 255), 255)
    gcp = GroundControlPoint("g", (20, 20))
    cfg = MatchConfig(spec)
    assert build_surface(ref, sensed, gcp, cfg, "ncc").best()[0] == (2, 2)
    assert build_surface(ref, sensed, gcp, cfg, "ssd").best()[0] == (-3, -3)
    res = match_gcp(ref, sensed, gcp, cfg)
    assert not res.matched
    assert res.reason == "criterion_disagreement"
    assert match_gcp(ref, sensed, gcp, MatchConfig(spec, mode="ncc")).offset == (2, 2)
    assert match_gcp(ref, sensed, gcp, MatchConfig(spec, mode="ssd")).offset == (-3, -3)


@pytest.mark.parametrize("mode", ["ssd", "ncc", "cra", "mi"])
def test_single_modes_recover_shift(shifted_pair, mode):
    ref, sensed = shifted_pair
    res = match_gcp(ref, sensed, GroundControlPoint("g", (60, 70)), MatchConfig(SMALL, mode=mode, bins=32))
    assert res.matched
    assert res.offset == (2, 3)
    assert res.measure == mode


def test_mi_cra_reject_flat_search_window(reference):
    data = np.array(reference.samples)
    data[200 - 25:200 + 26, 300 - 25:300 + 26] = 3
    sensed = RasterImage(data, 255)
    for mode in ("mi", "cra"):
        res = match_gcp(reference, sensed, GroundControlPoint("g", (200, 300)), MatchConfig(mode=mode))
        assert not res.matched
        assert res.reason == "low_score"


def test_match_all_identical_29(reference):
    gcps = synth.grid_gcps(reference, 29, 30)
    assert len(gcps) == 29
    results, census = match_all(reference, reference, gcps)
    assert census["matched"] == 29
    assert all(r.offset == (0, 0) for r in results)
    assert [r.gcp_id for r in results] == [g.id for g in gcps]


def test_match_all_out_of_bounds_gcp_isolated(reference):
    gcps = synth.grid_gcps(reference, 9, 40)
    gcps.insert(4, GroundControlPoint("edge", (2, 250)))
    results, census = match_all(reference, reference, gcps)
    assert census["out_of_bounds"] == 1
    assert census["matched"] == 9
    assert results[4].gcp_id == "edge" and results[4].reason == "out_of_bounds"


def test_match_all_occluded_26_to_23(reference):
    gcps = synth.grid_gcps(reference, 26, 40)
    assert len(gcps) == 26
    occluded = [gcps[3], gcps[12], gcps[20]]
    spec = synth.DistortionSpec("shift", (1, -2), occlusions=[(g.ref_coord, 26, 128) for g in occluded])
    sensed, _ = synth.generate_sensed(reference, spec)
    results, census = match_all(reference, sensed, gcps)
    assert census["matched"] == 23
    assert sum(v for k, v in census.items() if k != "matched") == 3
    bad = {r.gcp_id for r in results if not r.matched}
    assert bad == {g.id for g in occluded}


def test_match_all_empty():
    img = RasterImage(np.zeros((40, 40)), 255)
    with pytest.raises(EmptyGcpList):
        match_all(img, img, [])


def test_match_all_workers_deterministic(reference):
    sensed, _ = synth.generate_sensed(reference, synth.DistortionSpec("quadratic", (
        0.5, 1.002, 0.001, 1.2e-5, -6e-6, 6e-6, -1.0, 0.002, 0.998, -6e-6, 1.2e-5, 6e-6)))
    gcps = synth.grid_gcps(reference, 30, 30)
    a, _ = match_all(reference, sensed, gcps, workers=1)
    b, _ = match_all(reference, sensed, gcps, workers=4)
    c, _ = match_all(reference, sensed, gcps, workers=1)
    assert a == b == c


def test_edge_extract_constant():
    out = edge_extract(RasterImage(np.full((6, 6), 40), 255))
    assert not out.samples.any()


def test_edge_extract_vertical_step():
    data = np.zeros((6, 8), dtype=int)
    data[:, 4:] = 100
    out = edge_extract(RasterImage(data, 1023)).samples
    # Sobel across the step: (100 - 0) * (1 + 2 + 1) = 400 on both adjacent columns
    np.testing.assert_array_equal(out[:, 3], 400)
    np.testing.assert_array_equal(out[:, 4], 400)
    assert not out[:, [0, 1, 2, 5, 6, 7]].any()


def test_edge_extract_clamps():
    data = np.zeros((6, 8), dtype=int)
    data[:, 4:] = 255
    assert edge_extract(RasterImage(data, 255)).samples.max() == 255


def test_edge_extract_too_small():
    with pytest.raises(TooSmall):
        edge_extract(RasterImage(np.zeros((2, 5)), 255))


def test_edge_matching_identical_inputs(reference):
    gcps = synth.grid_gcps(reference, 12, 40)
    raw, _ = match_all(reference, reference, gcps)
    edge, _ = match_all(reference, reference, gcps, MatchConfig(edge_preprocess=True))
    assert [r.offset for r in raw] == [r.offset for r in edge]


def test_edge_matching_recovers_shift(shifted_pair):
    ref, sensed = shifted_pair
    res = match_gcp(ref, sensed, GroundControlPoint("g", (60, 70)), MatchConfig(SMALL, edge_preprocess=True))
    assert res.matched and res.offset == (2, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        MatchConfig(ncc_threshold=0.0)
    with pytest.raises(ValueError):
        MatchConfig(mode="sad")
    with pytest.raises(ValueError):
        MatchConfig(bins=1)


@settings(max_examples=15, deadline=None)
@given(st.integers(-7, 7), st.integers(-7, 7))
def test_translation_covariance(u, v):
    ref = synth.textured_reference(160, 160, seed=11)
    sensed, _ = synth.generate_sensed(ref, synth.DistortionSpec("shift", (u, v)))
    gcps = synth.grid_gcps(ref, 9, 15 + 8)
    results, census = match_all(ref, sensed, gcps)
    assert census["matched"] == len(gcps)
    assert all(r.offset == (u, v) for r in results)
