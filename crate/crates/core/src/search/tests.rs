use super::*;
use crate::mask::Grid;
use crate::testbed::Mixture;

fn world() -> PatchWorld {
    PatchWorld::homogeneous(
        Grid::new(3, 3).unwrap(),
        Mixture::gaussian(vec![0.0, 0.5], 0.3).unwrap(),
    )
    .unwrap()
}

fn schedule() -> NoiseSchedule {
    NoiseSchedule::cosine(1.0, 12).unwrap()
}

fn generator(w: &PatchWorld) -> Generator<'_> {
    Generator::new(w, schedule(), Some(DefectSpec::fixed(2, 2.5))).unwrap()
}

fn cfg(s: usize, k: usize) -> SearchConfig {
    SearchConfig::new(s, k, ResampleConfig::default_for(&schedule()).unwrap()).unwrap()
}

#[test]
fn without_refinements_search_is_best_of_s() {
    let w = world();
    let g = generator(&w);
    for seed in 0..5 {
        let a = dfs_search(&g, &OracleMasks, &cfg(4, 0), seed).unwrap();
        let b = best_of_n(&g, 4, seed).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn single_refinement_is_a_two_way_max() {
    let w = world();
    let g = generator(&w);
    let out = dfs_search(&g, &OracleMasks, &cfg(1, 1), 7).unwrap();
    assert_eq!(out.evaluated.len(), 2);
    let m = out.evaluated[0].1.max(out.evaluated[1].1);
    assert_eq!(out.best.score, m);
}

#[test]
fn best_is_the_maximum_and_accounting_is_exact() {
    let w = world();
    let g = generator(&w);
    for (s, k) in [(1, 0), (2, 1), (3, 2), (2, 4)] {
        let c = cfg(s, k);
        let out = dfs_search(&g, &SyntheticMasks::default(), &c, 11).unwrap();
        assert_eq!(out.evaluated.len(), c.candidates());
        let max = out.evaluated.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.best.score, max);
        let first = out.evaluated.iter().find(|e| e.1 == max).unwrap().0;
        assert_eq!(out.best.lineage, first);
        assert_eq!(out.nfe, c.nfe(&schedule()));
        assert_eq!(out.best.score, w.score(&out.best.state.x).unwrap());
    }
}

#[test]
fn evaluation_order_is_seed_major() {
    let w = world();
    let g = generator(&w);
    let out = dfs_search(&g, &OracleMasks, &cfg(2, 2), 3).unwrap();
    let order: Vec<_> = out.evaluated.iter().map(|e| e.0).collect();
    assert_eq!(
        order,
        [
            Lineage::Base { seed: 0 },
            Lineage::Refined { seed: 0, refinement: 0 },
            Lineage::Refined { seed: 0, refinement: 1 },
            Lineage::Base { seed: 1 },
            Lineage::Refined { seed: 1, refinement: 0 },
            Lineage::Refined { seed: 1, refinement: 1 },
        ]
    );
}

#[test]
fn ties_go_to_the_earliest_candidate() {
    // Empty mask with t_g = 0 reproduces the base exactly.
    let w = world();
    let g = generator(&w);
    let c = SearchConfig::new(2, 3, ResampleConfig::new(0.5, 0.0, 4, 0).unwrap()).unwrap();
    let empty = DefectMask::empty(w.grid());
    let out = dfs_search(&g, &empty, &c, 5).unwrap();
    assert!(matches!(out.best.lineage, Lineage::Base { .. }));
    for chunk in out.evaluated.chunks(4) {
        assert!(chunk.iter().all(|e| e.1 == chunk[0].1));
    }
}

#[test]
fn refinement_never_lowers_the_search_result() {
    let w = world();
    let g = generator(&w);
    for seed in 0..10 {
        let base = best_of_n(&g, 3, seed).unwrap();
        let out = dfs_search(&g, &OracleMasks, &cfg(3, 2), seed).unwrap();
        assert!(out.best.score >= base.best.score);
        let bases: Vec<f64> = out
            .evaluated
            .iter()
            .filter(|e| matches!(e.0, Lineage::Base { .. }))
            .map(|e| e.1)
            .collect();
        let shared: Vec<f64> = base.evaluated.iter().map(|e| e.1).collect();
        assert_eq!(bases, shared);
    }
}

#[test]
fn best_of_n_is_prefix_max() {
    let w = world();
    let g = generator(&w);
    let all = best_of_n(&g, 8, 2).unwrap();
    for n in 1..=8 {
        let m = all.evaluated[..n].iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best_of_n(&g, n, 2).unwrap().best.score, m);
    }
    assert_eq!(all.nfe, 8 * 12);
    assert!(best_of_n(&g, 0, 2).is_err());
}

#[test]
fn split_follows_the_budget_table() {
    assert_eq!(lotts_split(1, 2).unwrap(), (1, 0));
    assert_eq!(lotts_split(3, 2).unwrap(), (1, 2));
    assert_eq!(lotts_split(6, 2).unwrap(), (2, 2));
    assert_eq!(lotts_split(9, 2).unwrap(), (3, 2));
    assert!(lotts_split(4, 2).is_err());
    assert!(lotts_split(0, 2).is_err());
}

#[test]
fn scaling_rows_and_determinism() {
    let w = world();
    let g = generator(&w);
    let sc = ScalingConfig {
        lotts_grid: vec![1, 3, 6],
        bon_grid: vec![1, 3, 6, 12],
        refinements: 2,
        trials: 24,
    };
    let rc = ResampleConfig::default_for(&schedule()).unwrap();
    let a = scaling_sweep(&g, &OracleMasks, &rc, &sc, 9, 1).unwrap();
    let b = scaling_sweep(&g, &OracleMasks, &rc, &sc, 9, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 7);
    assert_eq!(a.rows[0].mean_score, a.rows[3].mean_score);
    assert_eq!(a.rows[0].stderr, a.rows[3].stderr);
    assert_eq!(a.rows[6].nfe, 12 * 12);
    assert_eq!(a.rows[2].nfe, 2 * 12 + 4 * rc.nfe());
    assert_eq!(a.comparison.unwrap().n, 6);
    let bad = ScalingConfig { lotts_grid: vec![4], ..sc };
    assert!(scaling_sweep(&g, &OracleMasks, &rc, &bad, 9, 1).is_err());
}

#[test]
fn expected_best_of_n_is_monotone() {
    let w = world();
    let g = generator(&w);
    let sc = ScalingConfig {
        lotts_grid: vec![1],
        bon_grid: vec![1, 2, 4, 8],
        refinements: 2,
        trials: 200,
    };
    let r = scaling_sweep(&g, &OracleMasks, &ResampleConfig::default_for(&schedule()).unwrap(), &sc, 1, 0)
        .unwrap();
    let bon: Vec<_> = r.rows.iter().filter(|r| r.method == Method::BestOfN).collect();
    for w in bon.windows(2) {
        assert!(w[1].mean_score >= w[0].mean_score);
    }
}

#[test]
fn p_value_tail() {
    assert!((one_sided_p(1.6448536269514722) - 0.05).abs() < 1e-9);
    assert!((one_sided_p(0.0) - 0.5).abs() < 1e-15);
}
