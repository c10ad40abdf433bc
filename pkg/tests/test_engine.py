"""Policy selection, workload synthesis and the simulation's counting metrics."""

import itertools

import pytest

from ldesc_sim import (
    AccessEvent,
    CtaGrid,
    InsertionClass,
    LocalityType,
    PrefetchKind,
    SharingType,
    SystemConfig,
    Workload,
    assign_clusters,
    baseline_round_robin,
    form_clusters,
    generate_accesses,
    normal_policies,
    place_and_partition,
    select_policies,
    simulate,
    validate_descriptor_set,
    working_set,
)
from ldesc_sim.cache import CacheConfig
from ldesc_sim.descriptor import AccessPattern
from ldesc_sim.engine import preset
from ldesc_sim.errors import ConfigMismatch
from ldesc_sim.numa import xor_hash
from ldesc_sim.sched import assign_clusters_by_zone

from conftest import make_desc

KB = 1024


def histo_workload(seed=1):
    desc = make_desc()
    grid = CtaGrid((5, 8, 1))
    return Workload(grid, validate_descriptor_set([desc], grid), seed)


def stripe_workload(tiles=16, tile_kb=16, seed=1):
    grid = CtaGrid((tiles, 1, 1))
    desc = make_desc(
        elem=4,
        data_dims=(tiles * tile_kb * KB // 4, 1, 1),
        dtile=(tile_kb * KB // 4, 1, 1),
        ctile=(1, 1, 1),
        cdmap=(1, 0, 0),
    )
    return Workload(grid, validate_descriptor_set([desc], grid), seed)


# -- select_policies ---------------------------------------------------------


def test_policies_coaccessed_regular():
    d = make_desc()
    p = select_policies([d]).by_desc[d]
    assert p.schedule_with_clusters
    assert p.insertion is InsertionClass.SOFT_PIN
    assert p.prefetch is PrefetchKind.STRIDE


def test_policies_intra_thread():
    d = make_desc(ltype=LocalityType.INTRA_THREAD)
    p = select_policies([d]).by_desc[d]
    assert not p.schedule_with_clusters
    assert p.insertion is InsertionClass.HARD_PIN
    assert p.prefetch is PrefetchKind.NONE


def test_policies_no_reuse():
    d = make_desc(ltype=LocalityType.NO_REUSE)
    p = select_policies([d]).by_desc[d]
    assert p.insertion is InsertionClass.BYPASS
    assert p.prefetch is PrefetchKind.NONE


def test_policies_nearby_and_irregular():
    nearby = make_desc(sharing=SharingType.NEARBY)
    irregular = make_desc(pattern=AccessPattern.irregular())
    pol = select_policies([nearby])
    assert pol.by_desc[nearby].prefetch is PrefetchKind.NEXTLINE
    pol = select_policies([irregular])
    assert pol.by_desc[irregular].prefetch is PrefetchKind.NONE
    assert pol.by_desc[irregular].insertion is InsertionClass.SOFT_PIN


# -- generate_accesses -------------------------------------------------------


def test_generate_regular_walk_ascending():
    # One 4 KiB tile at line-size stride: 32 ascending line addresses.
    grid = CtaGrid((1, 1, 1), warps_per_cta=4)
    desc = make_desc(data_dims=(KB, 1, 1), dtile=(KB, 1, 1), ctile=(1, 1, 1), cdmap=(1, 0, 0))
    pairs = generate_accesses(desc, (0, 0, 0), grid, seed=1)
    addrs = [a for _, a in pairs]
    assert addrs == list(range(0, 4 * KB, 128))
    assert [w for w, _ in pairs[:5]] == [0, 1, 2, 3, 0]


def test_generate_coaccessed_identical_multisets(histo_desc, histo_grid):
    a = generate_accesses(histo_desc, (2, 0, 0), histo_grid, seed=1)
    b = generate_accesses(histo_desc, (2, 7, 0), histo_grid, seed=1)
    assert sorted(x for _, x in a) == sorted(x for _, x in b)


def test_generate_irregular_deterministic():
    desc = make_desc(pattern=AccessPattern.irregular())
    grid = CtaGrid((5, 8, 1))
    a = generate_accesses(desc, (1, 2, 0), grid, seed=7)
    b = generate_accesses(desc, (1, 2, 0), grid, seed=7)
    c = generate_accesses(desc, (1, 2, 0), grid, seed=8)
    assert a == b
    assert a != c
    assert sorted(x for _, x in a) == sorted(x for _, x in c)


def test_generate_nearby_windows_overlap_one_line():
    grid = CtaGrid((1, 4, 1), warps_per_cta=1)
    desc = make_desc(
        data_dims=(8 * KB, 1, 1),  # 32 KiB, 256 lines
        dtile=(8 * KB, 1, 1),
        ctile=(1, 4, 1),
        sharing=SharingType.NEARBY,
        cdmap=(1, 0, 0),
    )
    windows = [
        {a for _, a in generate_accesses(desc, (0, y, 0), grid, 1)} for y in range(4)
    ]
    for y in range(3):
        shared = windows[y] & windows[y + 1]
        assert len(shared) == 2  # one line each side of the boundary


def test_generate_intra_thread_two_passes():
    grid = CtaGrid((1, 1, 1), warps_per_cta=2)
    desc = make_desc(
        ltype=LocalityType.INTRA_THREAD,
        data_dims=(2 * KB, 1, 1),
        dtile=(2 * KB, 1, 1),
        ctile=(1, 1, 1),
        cdmap=(1, 0, 0),
    )
    pairs = generate_accesses(desc, (0, 0, 0), grid, seed=1)
    per_warp = {}
    for w, a in pairs:
        per_warp.setdefault(w, []).append(a)
    for w, seq in per_warp.items():
        assert seq == seq[: len(seq) // 2] * 2  # same sub-range twice
    assert set(per_warp[0]) & set(per_warp[1]) == set()  # private ranges


def test_generate_no_reuse_single_pass():
    grid = CtaGrid((2, 1, 1), warps_per_cta=2)
    desc = make_desc(
        ltype=LocalityType.NO_REUSE,
        data_dims=(2 * KB, 1, 1),
        dtile=(KB, 1, 1),
        ctile=(1, 1, 1),
        cdmap=(1, 0, 0),
    )
    pairs = generate_accesses(desc, (0, 0, 0), grid, seed=1)
    addrs = [a for _, a in pairs]
    assert len(addrs) == len(set(addrs))  # no repeats


# -- simulate ----------------------------------------------------------------


def test_histo_working_set_reduction():
    wl = histo_workload()
    cfg = SystemConfig(sm_count=4)
    rr = simulate(wl, cfg, baseline_round_robin(wl.grid, 4), policies=normal_policies(wl.descs))
    assert rr.working_set[0] == 5 * 32
    cls = form_clusters(wl.descs, wl.grid, 4)
    led = simulate(wl, cfg, assign_clusters(cls, wl.grid, 4))
    assert led.working_set[0] == 2 * 32
    assert led.working_set[1:] == [32, 32, 32]


def test_conservation_and_totals_invariance():
    wl = histo_workload()
    cfg = SystemConfig(sm_count=4)
    totals = set()
    for sched in (
        baseline_round_robin(wl.grid, 4),
        assign_clusters(form_clusters(wl.descs, wl.grid, 4), wl.grid, 4),
    ):
        m = simulate(wl, cfg, sched)
        assert m.hits + m.inflight_hits + m.misses == m.demand_accesses
        totals.add(m.demand_accesses)
    assert len(totals) == 1


def test_determinism_bit_identical():
    wl = histo_workload()
    cfg = SystemConfig(sm_count=4)
    sched = baseline_round_robin(wl.grid, 4)
    a = simulate(wl, cfg, sched).json_str()
    b = simulate(wl, cfg, sched).json_str()
    assert a == b


def test_single_sm_closed_loop_hits():
    # CTAs co-accessing one cached tile on one SM: only the first fetch of
    # each line misses, so the hit rate climbs toward 1 with more CTAs.
    def rate(ctas):
        grid = CtaGrid((ctas, 1, 1), warps_per_cta=2)
        desc = make_desc(
            data_dims=(2 * KB, 1, 1), dtile=(2 * KB, 1, 1), ctile=(ctas, 1, 1),
            cdmap=(1, 0, 0),
        )
        wl = Workload(grid, validate_descriptor_set([desc], grid), 1)
        m = simulate(wl, SystemConfig(sm_count=1), baseline_round_robin(grid, 1))
        return m.l1_hit_rate

    r16, r64 = rate(16), rate(64)
    assert r64 > r16
    assert r64 > 0.9


def test_clustering_never_worse_average_working_set():
    # All CTAs of a C-tile share one D-tile: clustered scheduling never
    # averages a larger per-SM working set than round robin.
    for gx, gy in itertools.product(range(1, 7), range(1, 9)):
        grid = CtaGrid((gx, gy, 1), warps_per_cta=2)
        for cx in [d for d in range(1, gx + 1) if gx % d == 0]:
            for cy in [d for d in range(1, gy + 1) if gy % d == 0]:
                n_ct = (gx // cx) * (gy // cy)
                desc = make_desc(
                    data_dims=(n_ct * 64, 1, 1),
                    dtile=(64, 1, 1),
                    ctile=(cx, cy, 1),
                    cdmap=(1, 2, 3),
                )
                wl = Workload(grid, [desc], 1)
                for sm in (2, 3, 4):
                    events_rr: list[AccessEvent] = []
                    events_cl: list[AccessEvent] = []
                    cfg = SystemConfig(sm_count=sm)
                    simulate(
                        wl, cfg, baseline_round_robin(grid, sm),
                        policies=normal_policies(wl.descs), trace_sink=events_rr,
                    )
                    cls = form_clusters(wl.descs, grid, sm)
                    simulate(
                        wl, cfg, assign_clusters(cls, grid, sm),
                        policies=normal_policies(wl.descs), trace_sink=events_cl,
                    )
                    ws_rr = working_set(events_rr)
                    ws_cl = working_set(events_cl)
                    avg_rr = sum(ws_rr.values()) / sm
                    avg_cl = sum(ws_cl.values()) / sm
                    assert avg_cl <= avg_rr + 1e-9, (gx, gy, cx, cy, sm)


def test_numa_stripe_efficiency_exact():
    wl = stripe_workload()
    cfg = preset("desk-numa")
    plan = place_and_partition(wl.descs, wl.grid, 4)
    cls = form_clusters(wl.descs, wl.grid, 4)
    sched = assign_clusters_by_zone(cls, wl.grid, plan.cta_partition, 16, 4)
    m = simulate(wl, cfg, sched, placement=plan)
    assert m.access_efficiency == 1.0
    assert m.zone_access_distribution == [0.25, 0.25, 0.25, 0.25]


def test_numa_xor_spreads_accesses():
    wl = stripe_workload()
    cfg = preset("desk-numa")
    m = simulate(
        wl, cfg, baseline_round_robin(wl.grid, 16),
        placement=xor_hash(4), policies=normal_policies(wl.descs),
    )
    assert m.access_efficiency == pytest.approx(0.25, abs=0.05)
    for share in m.zone_access_distribution:
        assert share == pytest.approx(0.25, abs=0.02)


def test_xor_uniform_on_irregular_workload():
    # Seed-fixed statistical replay: randomized walks under the address
    # hash spread close to evenly across zones.
    grid = CtaGrid((8, 1, 1), warps_per_cta=2)
    desc = make_desc(
        elem=4, data_dims=(64 * KB, 1, 1), dtile=(64 * KB, 1, 1), ctile=(8, 1, 1),
        pattern=AccessPattern.irregular(), cdmap=(1, 0, 0),
    )
    wl = Workload(grid, validate_descriptor_set([desc], grid), seed=3)
    cfg = preset("desk-numa")
    m = simulate(
        wl, cfg, baseline_round_robin(grid, 16),
        placement=xor_hash(4), policies=normal_policies(wl.descs),
    )
    for share in m.zone_access_distribution:
        assert share == pytest.approx(0.25, abs=0.02)


def test_remote_link_capacity_throttles():
    # Same remote-heavy run, half the link rate: strictly more cycles.
    wl = stripe_workload()
    plan = place_and_partition(wl.descs, wl.grid, 4)
    # Deliberately anti-affine: every CTA on a remote zone's SMs.
    sched = baseline_round_robin(wl.grid, 16)
    import dataclasses

    fast = preset("desk-numa")
    slow = dataclasses.replace(fast, remote_link_capacity=0.1)
    m_fast = simulate(wl, fast, sched, placement=plan, policies=normal_policies(wl.descs))
    m_slow = simulate(wl, slow, sched, placement=plan, policies=normal_policies(wl.descs))
    assert m_slow.remote_traffic == m_fast.remote_traffic > 0
    assert m_slow.total_cycles > m_fast.total_cycles


def test_pure_intra_workload_needs_no_clusters():
    d = make_desc(ltype=LocalityType.INTRA_THREAD)
    assert not select_policies([d]).wants_clusters()


def test_sequential_stream_prefetch_accuracy():
    # One active tile, pure sequential regular stream: nearly every
    # prefetched line is demanded later.
    grid = CtaGrid((1, 1, 1), warps_per_cta=4)
    desc = make_desc(
        data_dims=(8 * KB, 1, 1), dtile=(8 * KB, 1, 1), ctile=(1, 1, 1),
        cdmap=(1, 0, 0),
    )
    wl = Workload(grid, validate_descriptor_set([desc], grid), 1)
    m = simulate(wl, SystemConfig(sm_count=1), baseline_round_robin(grid, 1))
    assert m.prefetches_issued > 0
    assert m.prefetch_accuracy >= 0.9


def test_randomized_workloads_keep_invariants():
    # Seeded fuzz over mixed descriptor sets: conservation, bounded rates,
    # zone shares summing to one, and scheduler-independent totals.
    import random as _random

    rng = _random.Random(123)
    for trial in range(12):
        gx = rng.randint(2, 6)
        gy = rng.randint(1, 4)
        grid = CtaGrid((gx, gy, 1), warps_per_cta=rng.choice([1, 2, 4]))
        n_ct = gx * gy
        descs = []
        for i, ltype in enumerate(
            rng.sample(
                [LocalityType.INTER_THREAD, LocalityType.INTRA_THREAD,
                 LocalityType.NO_REUSE],
                k=rng.randint(1, 3),
            )
        ):
            sharing = (
                rng.choice([SharingType.COACCESSED, SharingType.NEARBY])
                if ltype is LocalityType.INTER_THREAD
                else None
            )
            pattern = (
                AccessPattern.regular_stride(rng.choice([128, 256]))
                if rng.random() < 0.7
                else AccessPattern.irregular()
            )
            tile_elems = rng.choice([64, 128, 256])
            descs.append(
                make_desc(
                    name=f"s{i}",
                    base=i << 20,
                    elem=4,
                    data_dims=(tile_elems * n_ct, 1, 1),
                    dtile=(tile_elems, 1, 1),
                    ctile=(1, 1, 1),
                    cdmap=(1, 2, 3),
                    ltype=ltype,
                    sharing=sharing,
                    pattern=pattern,
                    priority=i,
                )
            )
        wl = Workload(grid, validate_descriptor_set(descs, grid), seed=trial)
        cfg = SystemConfig(sm_count=4)
        totals = set()
        for sched in (
            baseline_round_robin(grid, 4),
            assign_clusters(form_clusters(wl.descs, grid, 4), grid, 4),
        ):
            m = simulate(wl, cfg, sched)
            assert m.hits + m.inflight_hits + m.misses == m.demand_accesses
            assert 0.0 <= m.l1_hit_rate <= 1.0
            assert 0.0 <= m.inflight_hit_rate <= 1.0
            assert 0.0 <= m.prefetch_accuracy <= 1.0
            assert abs(sum(m.zone_access_distribution) - 1.0) < 1e-9
            totals.add(m.demand_accesses)
        assert len(totals) == 1


def test_working_set_op_examples():
    one_line = [AccessEvent(0, 0, 0, 128 * 5 + 3, c) for c in range(100)]
    assert working_set(one_line) == {0: 1}
    disjoint = [
        AccessEvent(1, 0, 0, t * 4096 + l * 128, 0)
        for t in range(5)
        for l in range(32)
    ]
    assert working_set(disjoint) == {1: 160}
    assert working_set([]) == {}


def test_presets_match_published_parameters():
    single = preset("paper-single")
    assert single.sm_count == 15
    assert single.l1.capacity == 32 * KB and single.l1.ways == 4
    assert single.l2.capacity == 768 * KB and single.l2.ways == 16
    numa = preset("paper-numa")
    assert numa.sm_count == 64 and numa.zone_count == 4
    assert numa.l2.capacity == 4 * KB * KB and numa.l2.ways == 16
    desk = preset("desk")
    assert desk.sm_count == 8 and desk.zone_count == 1
    with pytest.raises(ConfigMismatch):
        preset("warp9")


def test_schedule_grid_mismatch_raises():
    wl = histo_workload()
    bad = baseline_round_robin(CtaGrid((4, 4, 1)), 4)
    with pytest.raises(ConfigMismatch):
        simulate(wl, SystemConfig(sm_count=4), bad)


def test_sm_count_mismatch_raises():
    wl = histo_workload()
    with pytest.raises(ConfigMismatch):
        simulate(wl, SystemConfig(sm_count=8), baseline_round_robin(wl.grid, 4))


def test_zone_without_placement_raises():
    wl = histo_workload()
    cfg = SystemConfig(sm_count=8, zone_count=4)
    with pytest.raises(ConfigMismatch):
        simulate(wl, cfg, baseline_round_robin(wl.grid, 8))


def test_trace_replay_reproduces_metrics():
    wl = histo_workload()
    cfg = SystemConfig(sm_count=4)
    sched = assign_clusters(form_clusters(wl.descs, wl.grid, 4), wl.grid, 4)
    events: list[AccessEvent] = []
    live = simulate(wl, cfg, sched, trace_sink=events)
    replay = simulate(wl, cfg, sched, trace_in=events)
    assert live.json_str() == replay.json_str()


def test_trace_replay_with_prefetch_and_pins():
    grid = CtaGrid((8, 1, 1), warps_per_cta=4)
    inter = make_desc(
        data_dims=(8 * KB, 1, 1), dtile=(KB, 1, 1), ctile=(1, 1, 1), cdmap=(1, 0, 0)
    )
    intra = make_desc(
        name="b", base=1 << 20, ltype=LocalityType.INTRA_THREAD,
        data_dims=(16 * KB, 1, 1), dtile=(2 * KB, 1, 1), ctile=(1, 1, 1),
        cdmap=(1, 0, 0), priority=1,
    )
    wl = Workload(grid, validate_descriptor_set([inter, intra], grid), 3)
    cfg = SystemConfig(sm_count=2, l1=CacheConfig(2 * KB, ways=4, pin_reset_period=500))
    sched = baseline_round_robin(grid, 2)
    events: list[AccessEvent] = []
    live = simulate(wl, cfg, sched, trace_sink=events)
    replay = simulate(wl, cfg, sched, trace_in=events)
    assert live.json_str() == replay.json_str()
    assert live.prefetches_issued > 0
