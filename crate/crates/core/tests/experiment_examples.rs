use std::collections::BTreeSet;

use matcomp::experiments::{
    completable_count_curve, ingest_ratings, rcore_curve, sweep_density, sweep_regular, write_frequencies,
    write_records, CheckConfig, ClosurePipeline, DensitySweep, RegularFamily, RegularSweep,
};
use matcomp::jacobian::RankBackend;
use matcomp::Mask;

#[test]
fn rowwise_family_stays_incomplete_at_the_marker() {
    let mut checks = CheckConfig::new(2);
    checks.minor_closure = false;
    let cfg = RegularSweep {
        n: 40,
        offsets: vec![0],
        trials: 20,
        seed_base: 40,
        families: vec![RegularFamily::Rowwise],
        checks,
    };
    let res = sweep_regular(&cfg).unwrap();
    assert!(res.rows[0].completable <= 0.5, "{:?}", res.rows[0]);
    assert!(res.violations().is_empty());
    assert!(sweep_regular(&RegularSweep { offsets: vec![-161], ..cfg }).is_err());
}

#[test]
fn frequencies_grow_along_prefixes_and_csv_is_reproducible() {
    let cfg = DensitySweep {
        m: 12,
        n: 12,
        edge_counts: (0..=144).step_by(12).collect(),
        trials: 12,
        seed_base: 3,
        checks: CheckConfig::new(2),
    };
    let a = sweep_density(&cfg).unwrap();
    for trial in 0..cfg.trials {
        let recs: Vec<_> = a.records.iter().filter(|r| r.trial == trial).collect();
        for w in recs.windows(2) {
            let (x, y) = (&w[0].conditions, &w[1].conditions);
            assert!(!x.min_degree || y.min_degree);
            assert!(!x.edge_connected || y.edge_connected);
            assert!(x.completable != Some(true) || y.completable == Some(true));
            assert!(x.minor_closable != Some(true) || y.minor_closable == Some(true));
        }
    }
    for w in a.rows.windows(2) {
        assert!(w[0].completable <= w[1].completable);
        assert!(w[0].min_degree <= w[1].min_degree);
    }
    let b = sweep_density(&cfg).unwrap();
    let csv = |res: &matcomp::experiments::SweepResult| {
        let mut f = Vec::new();
        write_frequencies(&res.rows, &mut f).unwrap();
        let mut r = Vec::new();
        write_records(&res.records, false, &mut r).unwrap();
        (f, r)
    };
    assert_eq!(csv(&a), csv(&b));
}

#[test]
fn movielens_layout_is_reindexed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.data");
    let mut text = String::new();
    for (u, i, v) in [(196, 242, 3), (186, 302, 3), (22, 377, 1), (196, 377, 4), (22, 242, 2)] {
        text.push_str(&format!("{u}\t{i}\t{v}\t881250949\n"));
    }
    text.push_str("196\t242\t5\t881250950\n");
    std::fs::write(&path, text).unwrap();
    let t = ingest_ratings(&path).unwrap();
    assert_eq!(t.user_ids, vec![22, 186, 196]);
    assert_eq!(t.item_ids, vec![242, 302, 377]);
    assert_eq!(t.mask.len(), 5);
    let values = t.values.unwrap();
    let k = t.mask.index_of(matcomp::Position::new(2, 0)).unwrap();
    assert_eq!(values[k], 5.0);
    let users: BTreeSet<usize> = t.mask.iter().map(|p| p.row).collect();
    assert_eq!(users.len(), 3);
}

#[test]
fn glued_fixture_cores() {
    let g = Mask::from_one_based(
        5,
        5,
        &[
            (1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3), (3, 1), (3, 2),
            (3, 4), (3, 5), (4, 3), (4, 4), (4, 5), (5, 3), (5, 4), (5, 5),
        ],
    )
    .unwrap();
    let curve = rcore_curve(&g, 10);
    assert_eq!(curve[2].entries, 16);
    assert_eq!(curve[3].entries, 0);
    assert_eq!(curve.len(), 4);
}

#[test]
fn tree_plus_one_edge_closes_its_cycle() {
    // spanning tree of K_{3,4} plus (2,2), which closes the cycle r1 c1 r2 c2
    let tree = [(1, 1), (1, 2), (1, 3), (1, 4), (2, 1), (3, 1)];
    let mask = Mask::from_one_based(3, 4, &tree).unwrap();
    let rows = completable_count_curve(&mask, &[1], RankBackend::FloatSvd, ClosurePipeline::Closure, None, 1);
    // rank one: every position whose endpoints are connected is completable
    assert_eq!(rows[0].new_positions, Some(12 - 6));
    let with = mask.with(matcomp::Position::one_based(2, 2));
    let core = matcomp::graph::k_core(&with.bipartite(), 2);
    assert_eq!(core.positions.len(), 4);
    let rows = completable_count_curve(&with, &[2], RankBackend::FloatSvd, ClosurePipeline::Closure, None, 1);
    assert_eq!(rows[0].core_entries, 4);
    assert_eq!(rows[0].new_positions, Some(0));
}
