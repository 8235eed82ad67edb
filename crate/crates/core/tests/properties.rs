use ndarray::{Array1, Array2};
use proptest::prelude::*;
use unilabel_core::data::{attention_targets, mask_partial};
use unilabel_core::fusion::{build_weight_map, fuse, fuse_weighted, FusedPrediction, ZeroAttentionFallback};
use unilabel_core::labelspace::{build_unified, DomainDecl, DomainRole, DomainSpec};
use unilabel_core::oracle::{fuse_scalar, weight_map_scalar};
use unilabel_core::psf::{complete_source, label_target, Provenance};
use unilabel_core::{TaxonomyConflict, VOID};

fn distribution(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, c).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

/// `K` probability maps of `n` elements over `c` classes plus attention.
fn branches(k: usize, n: usize, c: usize) -> impl Strategy<Value = (Vec<Array2<f64>>, Vec<Array1<f64>>)> {
    (
        prop::collection::vec(prop::collection::vec(distribution(c), n), k),
        prop::collection::vec(prop::collection::vec(0.0f64..=1.0, n), k),
    )
        .prop_map(move |(p, a)| {
            let probs = p
                .into_iter()
                .map(|rows| Array2::from_shape_vec((n, c), rows.concat()).unwrap())
                .collect();
            let att = a.into_iter().map(Array1::from).collect();
            (probs, att)
        })
}

fn sized_branches() -> impl Strategy<Value = (Vec<Array2<f64>>, Vec<Array1<f64>>)> {
    (1usize..=4, 1usize..=16, 2usize..=6).prop_flat_map(|(k, n, c)| branches(k, n, c))
}

fn run(p: &[Array2<f64>], a: &[Array1<f64>]) -> FusedPrediction {
    let pv: Vec<_> = p.iter().map(|x| x.view()).collect();
    let av: Vec<_> = a.iter().map(|x| x.view()).collect();
    fuse(&pv, &av, ZeroAttentionFallback::Mean).unwrap()
}

fn nested(p: &[Array2<f64>]) -> Vec<Vec<Vec<f64>>> {
    p.iter()
        .map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect())
        .collect()
}

proptest! {
    #[test]
    fn fused_rows_are_distributions((p, a) in sized_branches()) {
        let f = run(&p, &a);
        for row in f.probs.rows() {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fusion_is_scale_invariant((p, a) in sized_branches(), scale in 0.01f64..1.0) {
        let scaled: Vec<Array1<f64>> = a.iter().map(|x| x * scale).collect();
        let f = run(&p, &a);
        let g = run(&p, &scaled);
        for (x, y) in f.probs.iter().zip(g.probs.iter()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn fusion_is_permutation_equivariant((p, a) in sized_branches(), rot in 0usize..4) {
        let k = p.len();
        let order: Vec<usize> = (0..k).map(|i| (i + rot) % k).collect();
        let pp: Vec<_> = order.iter().map(|&i| p[i].clone()).collect();
        let aa: Vec<_> = order.iter().map(|&i| a[i].clone()).collect();
        let f = run(&p, &a);
        let g = run(&pp, &aa);
        for (x, y) in f.probs.iter().zip(g.probs.iter()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn fusion_matches_scalar_oracle((p, a) in sized_branches()) {
        let f = run(&p, &a);
        let av: Vec<Vec<f64>> = a.iter().map(|x| x.to_vec()).collect();
        let want = fuse_scalar(&nested(&p), &av, None);
        for (e, row) in want.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                prop_assert!((f.probs[[e, j]] - v).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn weight_map_only_touches_fine_slots((p, a) in (2usize..=3, 1usize..=12, 3usize..=5).prop_flat_map(|(k, n, c)| branches(k, n, c)), v in 1.0f64..10.0) {
        let c = p[0].ncols();
        let conflicts = [TaxonomyConflict { fine_domain: 1, fine_class: 0, coarse_domain: 2, coarse_class: c - 1 }];
        let pv: Vec<_> = p.iter().map(|x| x.view()).collect();
        let maps = build_weight_map(&pv, &conflicts, v).unwrap();
        for (i, m) in maps.iter().enumerate() {
            for ((_, j), &w) in m.weights.indexed_iter() {
                if !(i == 0 && j == 0) {
                    prop_assert_eq!(w, 1.0);
                }
            }
        }
        let want = weight_map_scalar(&nested(&p), &[(1, 0, 2, c - 1)], v);
        for (i, m) in maps.iter().enumerate() {
            for ((e, j), &w) in m.weights.indexed_iter() {
                prop_assert_eq!(w, want[i][e][j]);
            }
        }
        let av: Vec<_> = a.iter().map(|x| x.view()).collect();
        let f = fuse_weighted(&pv, &av, &maps, ZeroAttentionFallback::Mean).unwrap();
        let avs: Vec<Vec<f64>> = a.iter().map(|x| x.to_vec()).collect();
        let g = fuse_scalar(&nested(&p), &avs, Some(&want));
        for (e, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                prop_assert!((f.probs[[e, j]] - v).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn mask_is_idempotent_and_consistent(labels in prop::collection::vec(-1i64..10, 0..64), lo in 0usize..5) {
        let d = DomainSpec::new(1, "s", DomainRole::Source, (lo..lo + 5).collect());
        let once = mask_partial(&labels, &d);
        prop_assert_eq!(mask_partial(&once, &d), once.clone());
        for (&y, t) in once.iter().zip(attention_targets(&once)) {
            prop_assert_eq!(t == 1.0, y != VOID);
            prop_assert!(y == VOID || d.is_labeled(y));
        }
    }

    #[test]
    fn union_of_sources_is_the_unified_space(blocks in prop::collection::vec(prop::collection::btree_set(0u8..20, 1..8), 1..5)) {
        let decls: Vec<DomainDecl> = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| DomainDecl::source(format!("s{i}"), b.iter().map(|c| format!("k{c}"))))
            .collect();
        match build_unified(&decls) {
            Ok((space, doms)) => {
                let union: std::collections::BTreeSet<usize> = doms.iter().flat_map(|d| d.labeled_classes()).collect();
                prop_assert_eq!(union, (0..space.len()).collect());
                for d in &doms {
                    for local in 0..d.num_labeled() {
                        prop_assert_eq!(d.to_local(d.to_unified(local).unwrap()), Some(local));
                    }
                }
            }
            Err(_) => {
                let distinct: std::collections::BTreeSet<_> = blocks.iter().flatten().collect();
                prop_assert!(distinct.len() < 2);
            }
        }
    }

    #[test]
    fn source_completion_is_a_fixed_point((p, a) in (1usize..=3, 1usize..=16, 2usize..=5).prop_flat_map(|(k, n, c)| branches(k, n, c)), delta in 0.0f64..1.0, seed in any::<u64>()) {
        let f = run(&p, &a);
        let c = f.num_classes() as i64;
        let y: Vec<i64> = (0..f.num_elements())
            .map(|e| {
                let h = seed.wrapping_mul(e as u64 + 1).wrapping_add(0x9e37_79b9) >> 33;
                if h % 3 == 0 { VOID } else { (h as i64) % c }
            })
            .collect();
        let once = complete_source(&y, &f, delta).unwrap();
        let twice = complete_source(&once.labels, &f, delta).unwrap();
        prop_assert_eq!(&twice.labels, &once.labels);
        for e in 0..y.len() {
            if y[e] != VOID {
                prop_assert_eq!(once.labels[e], y[e]);
                prop_assert_eq!(once.provenance[e], Provenance::GroundTruth);
            }
            if once.provenance[e] == Provenance::Pseudo {
                prop_assert!(f.confidence[e] > delta);
            }
        }
        let t = label_target(&f, delta).unwrap();
        prop_assert!(t.provenance.iter().all(|&p| p != Provenance::GroundTruth));
    }
}
