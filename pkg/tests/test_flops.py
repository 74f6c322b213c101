"""
Analytic FLOP counts and the runtime ordering of deeper hierarchies.
"""

import pytest

from src import config
from src.exceptions import UsageError
from src.model.baseline import DmsnModel
from src.model.blocks import CodecConfig
from src.model.flops import decode_flops, encode_flops, level_costs, model_flops
from src.model.hierarchy import DmphnModel, parse_pattern
from src.model.stacking import StackModel
from src.run_bench import bench_model

FULL = CodecConfig()
H, W = 720, 1280


def dmphn(pattern, codec=FULL):
    return DmphnModel.create(parse_pattern(pattern), codec, seed=0)


def test_codec_flops_scale_with_pixel_count():
    assert encode_flops(FULL, 360, 1280) * 2 == encode_flops(FULL, 720, 1280)
    assert decode_flops(FULL, 180, 640) * 8 == decode_flops(FULL, 720, 1280)


def test_first_layer_flops():
    small = CodecConfig(stage_channels=(1, 1, 1), res_blocks_per_stage=0)
    # entry 3->1 (3x3) at 8x8, then two stride-2 entries 1->1 at 4x4 and 2x2
    expected = (2 * 27 + 1) * 64 + (2 * 9 + 1) * 16 + (2 * 9 + 1) * 4
    assert encode_flops(small, 8, 8) == expected


def test_level_breakdown_of_deepest_hierarchy():
    costs = level_costs(dmphn("1-2-4-8"), H, W)
    assert [c.name for c in costs] == ["level1", "level2", "level3", "level4"]
    assert [c.patches for c in costs] == [1, 2, 4, 8]
    assert [c.patch_size for c in costs] == [(720, 1280), (360, 1280), (360, 640), (180, 640)]


def test_levels_cost_the_same_within_one_percent():
    flops = [c.flops for c in level_costs(dmphn("1-2-4-8"), H, W)]
    assert max(flops) / min(flops) - 1 < 0.01


def test_model_flops_grow_with_levels():
    totals = [model_flops(dmphn(p), H, W) for p in ("1", "1-2", "1-2-4", "1-2-4-8")]
    assert totals == sorted(totals)
    assert totals[3] / totals[0] == pytest.approx(4.0, rel=0.01)


def test_stacks_multiply_cost():
    spec = parse_pattern("1-2-4")
    single = model_flops(dmphn("1-2-4"), H, W)
    stacked = StackModel.create("stack-dmphn", spec, FULL, seed=0, count=3)
    vmphn = StackModel.create("vmphn", spec, FULL, seed=0)
    assert model_flops(stacked, H, W) == pytest.approx(3 * single, rel=0.01)
    assert model_flops(vmphn, H, W) == pytest.approx(2 * single, rel=0.01)
    names = [c.name for c in level_costs(vmphn, H, W)]
    assert names[0] == "unit1.down.level1"
    assert names[-1] == "unit1.up.level3"


def test_dmsn_costs_shrink_per_scale():
    costs = level_costs(DmsnModel.create(3, FULL, seed=0), H, W)
    assert [c.patch_size for c in costs] == [(720, 1280), (360, 640), (180, 320)]
    assert costs[0].flops > costs[1].flops > costs[2].flops


def test_bench_reports_timing_and_rate():
    model = dmphn("1-2", CodecConfig(stage_channels=config.DESK_STAGE_CHANNELS))
    row = bench_model(model, 30, 40, iters=2)
    assert row["size"] == "30x40"
    assert row["iters"] == 2
    assert 0 < row["p50_ms"] <= row["p95_ms"]
    assert row["gflops"] == pytest.approx(model_flops(model, 32, 40) / 1e9)
    assert row["gflops_per_s"] > 0


@pytest.mark.parametrize("iters,warmup", [(0, 0), (1, -1)])
def test_bench_rejects_bad_counts(iters, warmup):
    model = dmphn("1", CodecConfig(stage_channels=(4, 6, 8)))
    with pytest.raises(UsageError):
        bench_model(model, 16, 16, iters=iters, warmup=warmup)


@pytest.mark.slow
def test_runtime_ordering_follows_depth():
    codec = CodecConfig(stage_channels=config.DESK_STAGE_CHANNELS)
    medians = [bench_model(dmphn(p, codec), 720, 1280, iters=3, warmup=1)["p50_ms"]
               for p in ("1", "1-2", "1-2-4", "1-2-4-8")]
    assert medians == sorted(medians)
