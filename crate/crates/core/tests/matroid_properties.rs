//! Matroid, closure, stress and combinatorial invariants on random masks.

use proptest::prelude::*;

use matcomp::completability::{completable_closure, is_completable, sample_stress, stress_rank};
use matcomp::completion::{minor_closure_mask, MinorClosureOptions};
use matcomp::graph::{k_core, rank_r_sparse, SparsityVerdict};
use matcomp::jacobian::{rank_of, PrimeChoice, RankBackend};
use matcomp::random_masks::{monotone_order, sample_er};
use matcomp::{ambient_dimension, Mask, Position};

fn mask_strategy(max_m: usize, max_n: usize) -> impl Strategy<Value = Mask> {
    (2..=max_m, 2..=max_n).prop_flat_map(|(m, n)| {
        proptest::collection::vec(any::<bool>(), m * n).prop_map(move |bits| {
            let pos = bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(k, _)| Position::new(k / n, k % n));
            Mask::new(m, n, pos).unwrap()
        })
    })
}

fn transpose(mask: &Mask) -> Mask {
    Mask::new(mask.cols(), mask.rows(), mask.iter().map(|p| Position::new(p.col, p.row))).unwrap()
}

fn modp() -> RankBackend {
    RankBackend::modp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_is_bounded_and_monotone(mask in mask_strategy(7, 7), r in 1usize..=3, drop in any::<prop::sample::Index>()) {
        let rank = rank_of(&mask, r, modp(), 1).unwrap();
        prop_assert!(rank <= mask.len());
        prop_assert!(rank <= ambient_dimension(mask.rows(), mask.cols(), r));
        if !mask.is_empty() {
            let p = mask.positions()[drop.index(mask.len())];
            let smaller = rank_of(&mask.without(p), r, modp(), 2).unwrap();
            prop_assert!(smaller <= rank && rank <= smaller + 1);
        }
    }

    #[test]
    fn rank_is_submodular(a in mask_strategy(6, 6), bits in proptest::collection::vec(any::<bool>(), 36), r in 1usize..=2) {
        let (m, n) = (a.rows(), a.cols());
        let b = Mask::new(m, n, (0..m * n).filter(|&k| bits[k]).map(|k| Position::new(k / n, k % n))).unwrap();
        let rk = |x: &Mask| rank_of(x, r, modp(), 3).unwrap();
        let union = a.union(&b).unwrap();
        let inter = a.intersection(&b).unwrap();
        prop_assert!(rk(&union) + rk(&inter) <= rk(&a) + rk(&b));
    }

    #[test]
    fn transposition_preserves_rank(mask in mask_strategy(7, 6), r in 1usize..=3) {
        prop_assert_eq!(
            rank_of(&mask, r, modp(), 4).unwrap(),
            rank_of(&transpose(&mask), r, modp(), 5).unwrap()
        );
    }

    #[test]
    fn backends_agree(mask in mask_strategy(8, 8), r in 1usize..=3) {
        let f = completable_closure(&mask, r, RankBackend::FloatSvd, 6).unwrap();
        let p = completable_closure(&mask, r, modp(), 6).unwrap();
        let big = RankBackend::ModP { prime: PrimeChoice::Mersenne61, samples: 2 };
        let q = completable_closure(&mask, r, big, 6).unwrap();
        prop_assert_eq!(&f.closure, &p.closure);
        prop_assert_eq!(&p.closure, &q.closure);
        prop_assert_eq!(f.rank, p.rank);
    }

    #[test]
    fn closure_axioms(mask in mask_strategy(7, 7), r in 1usize..=2, drop in any::<prop::sample::Index>()) {
        let cl = completable_closure(&mask, r, modp(), 7).unwrap();
        prop_assert!(mask.is_subset(&cl.closure));
        let again = completable_closure(&cl.closure, r, modp(), 8).unwrap();
        prop_assert_eq!(&again.closure, &cl.closure);
        prop_assert_eq!(again.rank, cl.rank);
        if !mask.is_empty() {
            let sub = mask.without(mask.positions()[drop.index(mask.len())]);
            let smaller = completable_closure(&sub, r, modp(), 9).unwrap();
            prop_assert!(smaller.closure.is_subset(&cl.closure));
        }
        prop_assert_eq!(cl.is_everything(), is_completable(&mask, r, modp(), 10).unwrap());
    }

    #[test]
    fn closure_stays_in_the_r_core(mask in mask_strategy(8, 8), r in 1usize..=3) {
        let cl = completable_closure(&mask, r, modp(), 11).unwrap();
        let core = k_core(&mask.bipartite(), r);
        for p in cl.added() {
            prop_assert!(core.contains_row(p.row) && core.contains_col(p.col), "{:?}", p);
        }
    }

    #[test]
    fn independent_masks_are_sparse(mask in mask_strategy(6, 6), r in 1usize..=2) {
        if rank_of(&mask, r, modp(), 12).unwrap() == mask.len() {
            prop_assert_eq!(rank_r_sparse(&mask, r, 1 << 27, 0), SparsityVerdict::Verified);
        }
    }

    #[test]
    fn minor_closure_is_inside_the_closure(mask in mask_strategy(7, 7), r in 1usize..=2) {
        let opts = MinorClosureOptions::default();
        let minor = minor_closure_mask(&mask, r, &opts);
        prop_assert_eq!(minor.exhausted_searches, 0);
        let cl = completable_closure(&mask, r, modp(), 13).unwrap();
        prop_assert!(minor.closure.is_subset(&cl.closure));
        prop_assert_eq!(transpose(&minor.closure), minor_closure_mask(&transpose(&mask), r, &opts).closure);
    }

    #[test]
    fn stresses_are_supported_and_bounded(mask in mask_strategy(7, 7), r in 1usize..=3, seed in any::<u64>()) {
        if let Some(s) = sample_stress(&mask, r, seed).unwrap() {
            for i in 0..mask.rows() {
                for j in 0..mask.cols() {
                    if !mask.contains(Position::new(i, j)) {
                        prop_assert_eq!(s.entries[(i, j)], 0.0);
                    }
                }
            }
            let (ru, rv) = s.factor_residuals();
            prop_assert!(ru <= 1e-8 && rv <= 1e-8, "{} {}", ru, rv);
            prop_assert!(s.kernel_residual(&mask) <= 1e-8);
        }
        let bound = mask.rows().min(mask.cols()).saturating_sub(r);
        prop_assert!(stress_rank(&mask, r, seed).unwrap() <= bound);
    }
}

#[test]
fn conditions_are_monotone_along_prefixes() {
    for seed in 0..10 {
        let order = monotone_order(9, 9, seed);
        let mut seen = false;
        for k in (0..=81).step_by(3) {
            let now = is_completable(&order.prefix(k), 2, modp(), seed).unwrap();
            assert!(now || !seen, "seed {seed}: completable lost at {k}");
            seen = now;
        }
        assert!(seen);
    }
}

#[test]
fn completable_masks_have_at_least_d_r_edges() {
    for seed in 0..40 {
        let mask = sample_er(8, 9, 0.55, seed).unwrap();
        if is_completable(&mask, 2, modp(), seed).unwrap() {
            assert!(mask.len() >= ambient_dimension(8, 9, 2));
        }
    }
}
