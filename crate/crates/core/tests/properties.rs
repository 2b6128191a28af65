use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use stardil_core::algebroid::sample_cp_check;
use stardil_core::algebroid::sqrt_one_minus;
use stardil_core::dilation::{dilate, verify_dilation};
use stardil_core::free::{free_semigroupoid, free_star_semigroupoid, reduce, DirectedGraph, Letter};
use stardil_core::io::{parse_json, to_json, MapDocument, SgdDocument};
use stardil_core::leftreg::{left_regular, multiplicity_profile};
use stardil_core::linalg::{
    hermitian_eig, hermitian_eig_min, identity, lstsq, max_abs, max_abs_diff, op_norm, psd_factor, CMatrix, RANK_TOL,
};
use stardil_core::psd::{check_psd, AggregationMap};
use stardil_core::random::{self, aggregation, free_pullback, pair_groupoid_pullback, seeded};
use stardil_core::table::{monoid, ObjectId};

fn graph_strategy() -> impl Strategy<Value = DirectedGraph> {
    (1usize..=3).prop_flat_map(|v| {
        prop::collection::vec((0..v, 0..v), 1..=3).prop_map(move |edges| DirectedGraph::new(v, edges).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn psd_factor_reconstructs(seed in any::<u64>(), n in 1usize..=6, r in 1usize..=6) {
        let mut rng = seeded(seed);
        let x = random::matrix(&mut rng, n, r);
        let g = &x * x.adjoint();
        let f = psd_factor(&g, RANK_TOL).unwrap();
        prop_assert!(f.rank <= r.min(n));
        prop_assert!(max_abs_diff(&(f.q.adjoint() * &f.q), &g) < 1e-10 * max_abs(&g).max(1.0));
    }

    #[test]
    fn eigenpairs_are_consistent(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = seeded(seed);
        let h = random::hermitian(&mut rng, n);
        let (vals, vecs) = hermitian_eig(&h).unwrap();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!((hermitian_eig_min(&h).unwrap() - vals[0]).abs() < 1e-12);
        for (i, &l) in vals.iter().enumerate() {
            let v = CMatrix::from_column_slice(n, 1, vecs.column(i).as_slice());
            prop_assert!(max_abs_diff(&(&h * &v), &(v.scale(l))) < 1e-10);
        }
    }

    #[test]
    fn lstsq_solves_consistent_systems(seed in any::<u64>(), n in 1usize..=6, k in 1usize..=4) {
        let mut rng = seeded(seed);
        let a = random::matrix(&mut rng, n + 2, n);
        let x = random::matrix(&mut rng, n, k);
        let b = &a * &x;
        let sol = lstsq(&a, &b).unwrap();
        prop_assert!(sol.residual < 1e-9);
        prop_assert!(max_abs_diff(&(&a * &sol.x), &b) < 1e-9);
    }

    #[test]
    fn free_tables_are_valid_and_counted(g in graph_strategy(), max_len in 1usize..=3) {
        let plain = free_semigroupoid(&g, max_len, true).unwrap();
        prop_assert!(plain.table.validate().is_valid());
        let counts = g.path_counts(max_len);
        prop_assert_eq!(plain.table.n_elements() as u128, counts.iter().sum::<u128>());
        let starred = free_star_semigroupoid(&g, max_len).unwrap();
        prop_assert!(starred.table.validate().is_valid());
        let doubled = g.doubled().path_counts(max_len);
        prop_assert_eq!(starred.table.n_elements() as u128, doubled.iter().sum::<u128>());
    }

    #[test]
    fn reduction_is_confluent(seed in any::<u64>(), len in 0usize..=12) {
        let mut rng = seeded(seed);
        let letters: Vec<Letter> =
            (0..len).map(|_| Letter { edge: rng.random_range(0..2), starred: rng.random_bool(0.5) }).collect();
        // cancel adjacent inverse pairs in a random order until none is left
        let mut w = letters.clone();
        loop {
            let mut spots: Vec<usize> = (0..w.len().saturating_sub(1)).filter(|&i| w[i + 1] == w[i].flipped()).collect();
            if spots.is_empty() {
                break;
            }
            spots.shuffle(&mut rng);
            w.drain(spots[0]..spots[0] + 2);
        }
        prop_assert_eq!(reduce(&letters), w);
    }

    #[test]
    fn pullbacks_are_positive_and_dilate(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=4) {
        let mut rng = seeded(seed);
        let k = rng.random_range(1..=n);
        let tau = aggregation(&mut rng, n, k);
        let dims = (0..k).map(|_| rng.random_range(1..=3)).collect();
        let t = pair_groupoid_pullback(&mut rng, n, tau, dims, m).unwrap();
        prop_assert!(check_psd(&t).unwrap().passed());
        let d = dilate(&t).unwrap();
        let r = verify_dilation(&t, &d).unwrap();
        prop_assert!(r.passed(), "{:?}", r);
        for a in t.table().elements() {
            // contractive: the pulled-back representation is unitary
            prop_assert!(op_norm(d.rep(a)) <= 1.0 + 1e-8);
            let p = d.rep(a).adjoint() * d.rep(a);
            if p.nrows() > 0 {
                prop_assert!(hermitian_eig_min(&p).unwrap() >= -1e-10);
            }
        }
    }

    #[test]
    fn truncated_pullbacks_dilate(seed in any::<u64>(), g in graph_strategy()) {
        let mut rng = seeded(seed);
        let free = free_star_semigroupoid(&g, 2).unwrap();
        let dims = (0..g.vertices).map(|_| rng.random_range(1..=3)).collect();
        let t = free_pullback(&mut rng, &free, AggregationMap::identity(g.vertices), dims, false).unwrap();
        let d = dilate(&t).unwrap();
        let r = verify_dilation(&t, &d).unwrap();
        prop_assert!(r.passed(), "{:?}", r);
    }

    #[test]
    fn map_documents_round_trip(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = seeded(seed);
        let t = pair_groupoid_pullback(&mut rng, n, AggregationMap::identity(n), vec![2; n], 2).unwrap();
        let text = to_json(&MapDocument::from_map(&t));
        let doc: MapDocument = parse_json(&text).unwrap();
        prop_assert_eq!(to_json(&doc), text.clone());
        prop_assert_eq!(doc.to_map(None).unwrap(), t.clone());
        let sgd = to_json(&SgdDocument::from_table(t.table()));
        let back: SgdDocument = parse_json(&sgd).unwrap();
        prop_assert_eq!(to_json(&back), sgd);
    }

    #[test]
    fn check_psd_is_permutation_invariant(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = seeded(seed);
        let t = pair_groupoid_pullback(&mut rng, n, AggregationMap::identity(n), vec![1; n], 1).unwrap();
        let off = t.table().elements().find(|&a| t.table().src(a) != t.table().tgt(a));
        let t = match off {
            Some(a) => {
                let b = t.table().star(a).unwrap();
                let bump = CMatrix::from_element(1, 1, t.mat(a)[(0, 0)] * 3.0);
                let bump_star = bump.adjoint();
                t.clone().with_mat(a, bump).with_mat(b, bump_star)
            }
            None => t,
        };
        let perm = random::permutation(&mut rng, t.table().n_elements());
        let p = t.permute_elements(&perm).unwrap();
        let (r1, r2) = (check_psd(&t).unwrap(), check_psd(&p).unwrap());
        for s in 0..n {
            let (a, b) = (r1.lambda_min(ObjectId(s)).unwrap(), r2.lambda_min(ObjectId(s)).unwrap());
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn sqrt_series_commutes_with_a_star_a(seed in any::<u64>(), n in 1usize..=6, norm in 0.0f64..0.9) {
        let mut rng = seeded(seed);
        let a = random::with_norm(&mut rng, n, n, norm);
        let h = a.adjoint() * &a;
        let b = sqrt_one_minus(&a, 1e-12).unwrap().b;
        prop_assert!(max_abs_diff(&(&b * &h), &(&h * &b)) < 1e-8);
        prop_assert!(max_abs_diff(&(&b * &b), &(identity(n) - h)) < 1e-8);
    }

    #[test]
    fn left_regular_norm_within_multiplicity(n in 1usize..=6) {
        // truncated addition on 0..n: the top element absorbs
        let mul: Vec<Vec<usize>> = (0..n).map(|i| (0..n).map(|j| (i + j).min(n - 1)).collect()).collect();
        let table = monoid(&mul, Some(0), None).unwrap();
        let space = left_regular(&table, &AggregationMap::identity(1));
        for a in table.elements() {
            let big_n = multiplicity_profile(&table, a).max_multiplicity as f64;
            prop_assert!(op_norm(space.matrix(a)) <= big_n + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn positive_maps_pass_cp_sampling(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = seeded(seed);
        let t = pair_groupoid_pullback(&mut rng, n, AggregationMap::full(n), vec![2], 2).unwrap();
        prop_assert!(check_psd(&t).unwrap().passed());
        let r = sample_cp_check(&t, 3, 20, seed).unwrap();
        prop_assert!(r.passed(), "worst {:e}", r.worst_lambda_min());
    }
}
