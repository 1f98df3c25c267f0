use dycore_perf::dyncore::SimError;
use dycore_perf::{
    build_mesh, ratio_report, simulate, strong_scaling_study, thread_sweep, CostModel,
    DecompositionMode, MachineConfig, RunSpec, ScalingRow, DEFAULT_BYTES_PER_CELL,
};

const LEVELS: u32 = 120;
const WEAK: [(u32, u32); 3] = [(256, 12), (512, 48), (1024, 192)];

fn run(n: u32, nodes: u32, threads: u32) -> RunSpec {
    RunSpec::new(
        build_mesh(n, LEVELS).unwrap(),
        MachineConfig::archer2(),
        nodes,
        128 / threads,
        threads,
    )
}

/// Closed-form per-step components for square `side × side` blocks with a
/// depth-one halo: four neighbours each sending one block edge.
fn closed_form(c: &CostModel, side: f64, ranks: f64, threads: u32) -> [f64; 4] {
    let t = f64::from(threads);
    let user = side * side * f64::from(LEVELS) * c.c_cell / (t * c.efficiency(threads));
    let msg = c.p2p_alpha + side * DEFAULT_BYTES_PER_CELL as f64 / c.p2p_beta;
    let p2p = f64::from(c.halo_exchanges_per_step) * 4.0 * msg;
    let stages = ranks.log2().ceil();
    let coll = f64::from(c.allreduces_per_step)
        * stages
        * (c.coll_alpha + c.allreduce_bytes as f64 / c.coll_beta);
    let etc = f64::from(c.parallel_regions_per_step) * c.barrier_cost * t + c.etc_fixed;
    [user, p2p, coll, etc]
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn weak_scaling_triple_matches_closed_form() {
    let cost = CostModel::default();
    for (n, nodes) in WEAK {
        let b = simulate(&run(n, nodes, 4)).unwrap();
        let ranks = f64::from(nodes * 32);
        let [user, p2p, coll, etc] = closed_form(&cost, 32.0, ranks, 4);
        assert!(close(b.user_s, user), "C{n} user {} vs {user}", b.user_s);
        assert!(close(b.mpi_p2p_s, p2p), "C{n} p2p {} vs {p2p}", b.mpi_p2p_s);
        assert!(close(b.mpi_coll_s, coll), "C{n} coll {} vs {coll}", b.mpi_coll_s);
        assert!(close(b.etc_s, etc), "C{n} etc {} vs {etc}", b.etc_s);
    }
}

#[test]
fn weak_scaling_growth_is_collective() {
    let b: Vec<_> = WEAK.iter().map(|&(n, nodes)| simulate(&run(n, nodes, 4)).unwrap()).collect();
    for w in b.windows(2) {
        assert!((w[1].user_s / w[0].user_s - 1.0).abs() < 0.01);
        assert!(w[1].mpi_coll_s > w[0].mpi_coll_s);
    }
    let growth = b[2].total_s - b[0].total_s;
    let coll = b[2].mpi_coll_s - b[0].mpi_coll_s;
    assert!(growth > 0.0 && coll / growth >= 0.9, "{coll} of {growth}");
}

#[test]
fn thread_sweep_prefers_few_threads() {
    let sweep = thread_sweep(&run(512, 48, 4), &[1, 2, 4, 8, 16]).unwrap();
    assert!([1, 2, 4].contains(&sweep.best_threads));
    let min = sweep.rows.iter().map(|r| r.breakdown.total_s).fold(f64::INFINITY, f64::min);
    for r in sweep.rows.iter().filter(|r| r.threads >= 8) {
        assert!(r.breakdown.total_s > min);
    }
}

#[test]
fn sixteen_threads_double_halos_and_quarter_participants() {
    let t4 = simulate(&run(512, 48, 4)).unwrap();
    let t16 = simulate(&run(512, 48, 16)).unwrap();
    assert_eq!(t16.max_rank_halo_bytes, 2 * t4.max_rank_halo_bytes);
    assert_eq!(t4.exchange_participants, 4 * t16.exchange_participants);
}

#[test]
fn etc_grows_with_threads() {
    let sweep = thread_sweep(&run(256, 12, 1), &[1, 2, 4, 8, 16]).unwrap();
    for w in sweep.rows.windows(2) {
        assert!(w[1].breakdown.etc_s > w[0].breakdown.etc_s);
    }
}

#[test]
fn local_area_is_256_then_128_cells_per_core() {
    for (n, nodes) in WEAK {
        let cells = 6 * u64::from(n) * u64::from(n);
        assert_eq!(cells, 256 * u64::from(nodes) * 128);
        assert_eq!(cells, 128 * u64::from(2 * nodes) * 128);
    }
}

#[test]
fn strong_scaling_deviation_grows_for_c1024() {
    let table = strong_scaling_study(&run(1024, 48, 4), &[48, 96, 192]).unwrap();
    assert!(table.skipped.is_empty());
    let dev = table.deviation_from_ideal();
    assert_eq!(dev[0], 0.0);
    assert!(dev.windows(2).all(|w| w[1] > w[0]), "{dev:?}");
}

#[test]
fn single_node_count_is_one_simulate() {
    let base = run(256, 12, 4);
    let table = strong_scaling_study(&base, &[12]).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].row.breakdown, simulate(&base).unwrap());
}

#[test]
fn doubling_nodes_halves_user_time() {
    let a = simulate(&run(256, 12, 4)).unwrap();
    let b = simulate(&run(256, 24, 4)).unwrap();
    assert!(close(a.user_s, 2.0 * b.user_s));
}

#[test]
fn memory_guard_skips_oversubscribed_runs() {
    let err = simulate(&run(1024, 192, 1)).unwrap_err();
    assert!(matches!(err, SimError::OutOfMemory { .. }));
    let table = strong_scaling_study(&run(1024, 96, 1), &[96, 192]).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.skipped.len(), 1);
}

fn row(spec: &RunSpec) -> ScalingRow {
    let b = simulate(spec).unwrap();
    ScalingRow {
        mesh: spec.mesh.panel_size(),
        nodes: spec.nodes,
        ranks: b.ranks,
        threads: spec.threads_per_rank,
        breakdown: b,
    }
}

#[test]
fn setonix_beats_archer2() {
    let a = run(512, 48, 4);
    let mut s = a.clone();
    s.machine = MachineConfig::setonix();
    s.cost = CostModel::default_for(&s.machine);
    let r = ratio_report(&[row(&a)], &[row(&s)]).unwrap();
    assert!(r[0].total > 1.0);
}

#[test]
fn ratios_against_self_and_scaled_costs() {
    let a = run(256, 12, 4);
    let same = ratio_report(&[row(&a)], &[row(&a)]).unwrap();
    assert!([same[0].user, same[0].mpi_p2p, same[0].mpi_coll, same[0].etc, same[0].total]
        .iter()
        .all(|&x| x == 1.0));
    let scaled = a.clone().with_cost(a.cost.scaled(2.0));
    let half = ratio_report(&[row(&a)], &[row(&scaled)]).unwrap();
    for x in [half[0].user, half[0].mpi_p2p, half[0].mpi_coll, half[0].etc, half[0].total] {
        assert!((x - 0.5).abs() < 1e-12, "{x}");
    }
}

#[test]
fn redundant_compute_trades_messages_for_work() {
    let base = run(256, 12, 4);
    let red = base.clone().with_mode(DecompositionMode::RedundantCompute);
    let (e, r) = (simulate(&base).unwrap(), simulate(&red).unwrap());
    assert!(r.max_rank_cells > e.max_rank_cells);
    assert!(r.user_s > e.user_s);
    assert!(r.p2p_messages_per_step < e.p2p_messages_per_step);
}
