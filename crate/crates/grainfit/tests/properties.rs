//! Randomized property tests for the library's structural invariants.

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use grainfit::diagram::{
    assign, empty_cells, floor_spd, power_distance, ModelKind, Tessellation, LAMBDA_MIN,
};
use grainfit::edt::edt_squared;
use grainfit::gdfit::soft_assignment;
use grainfit::grid::GrainMap;
use grainfit::heuristics::hq_weight;
use grainfit::lpfit::dual_to_weights;
use grainfit::metrics::{descriptors, f_missing};
use grainfit::Generator;

fn gen_strategy(dims: [usize; 3]) -> impl Strategy<Value = Generator> {
    (
        0.0..dims[0] as f64,
        0.0..dims[1] as f64,
        0.0..dims[2] as f64,
        -5.0..5.0f64,
        prop::array::uniform3(0.3..2.0f64),
    )
        .prop_map(|(x, y, z, w, d)| Generator {
            site: Vector3::new(x, y, z),
            weight: w,
            matrix: Matrix3::from_diagonal(&Vector3::new(d[0], d[1], d[2])),
        })
}

proptest! {
    #[test]
    fn assignment_labels_cover_one_to_n(
        gens in prop::collection::vec(gen_strategy([8, 8, 8]), 1..6)
    ) {
        let n = gens.len();
        let tess = Tessellation::new(ModelKind::DiagonalGbpd, [8, 8, 8], gens).unwrap();
        let field = assign(&tess, [8, 8, 8]);
        prop_assert_eq!(field.labels.len(), 512);
        prop_assert!(field.labels.iter().all(|&l| (1..=n as u32).contains(&l)));
        // missing-cell fraction agrees with the empty-cell set
        let empties = empty_cells(&field, n);
        prop_assert_eq!(f_missing(&field, n), empties.len() as f64 / n as f64);
    }

    #[test]
    fn lowest_index_wins_ties(
        g in gen_strategy([8, 8, 8]),
        extra in prop::collection::vec(gen_strategy([8, 8, 8]), 0..3)
    ) {
        // duplicate generator: the copy at the higher index must never win
        let mut gens = vec![g.clone()];
        gens.extend(extra);
        let dup = gens.len();
        gens.push(g);
        let tess = Tessellation::new(ModelKind::DiagonalGbpd, [8, 8, 8], gens).unwrap();
        let field = assign(&tess, [8, 8, 8]);
        prop_assert!(field.labels.iter().all(|&l| l as usize != dup + 1));
    }

    #[test]
    fn power_distance_reduces_to_euclidean(
        p in prop::array::uniform3(-10.0..10.0f64),
        q in prop::array::uniform3(-10.0..10.0f64)
    ) {
        let g = Generator::isotropic(Vector3::from(p), 0.0);
        let y = Vector3::from(q);
        let d = power_distance(&g, &y);
        prop_assert!((d - (y - g.site).norm_squared()).abs() < 1e-9);
    }

    #[test]
    fn softmax_is_a_distribution(
        gens in prop::collection::vec(gen_strategy([8, 8, 8]), 1..6),
        p in prop::array::uniform3(0.0..8.0f64),
        tau in 0.01..50.0f64
    ) {
        let tess = Tessellation::new(ModelKind::DiagonalGbpd, [8, 8, 8], gens).unwrap();
        let probs = soft_assignment(&Vector3::from(p), &tess, tau);
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(probs.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn hq_weight_positive_and_monotone(v in 2.0..1e5f64, det in 0.1..100.0f64) {
        let w = hq_weight(v, det);
        prop_assert!(w > 0.0);
        prop_assert!(hq_weight(v * 2.0, det) > w);
        prop_assert!(hq_weight(v, det * 2.0) < w);
    }

    #[test]
    fn dual_weights_shift_to_zero_min(t in prop::collection::vec(-1e3..1e3f64, 1..10)) {
        let w = dual_to_weights(&t);
        let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(min.abs() < 1e-12);
        // pairwise differences are preserved
        for i in 0..t.len() {
            for j in 0..t.len() {
                prop_assert!(((w[i] - w[j]) - (t[i] - t[j])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn floored_matrices_are_spd(entries in prop::array::uniform6(-3.0..3.0f64)) {
        let [a, b, c, d, e, f] = entries;
        let sym = Matrix3::new(a, b, c, b, d, e, c, e, f);
        let (m, _) = floor_spd(&sym, LAMBDA_MIN).unwrap();
        let eig = m.symmetric_eigen();
        // reconstruction error scales with the matrix norm
        let tol = LAMBDA_MIN - 1e-13 * (1.0 + sym.norm());
        prop_assert!(eig.eigenvalues.iter().all(|&l| l >= tol));
        prop_assert!((m - m.transpose()).norm() < 1e-9);
    }

    #[test]
    fn descriptor_ratios_are_ordered(
        voxels in prop::collection::btree_set((0usize..6, 0usize..6, 0usize..6), 2..40)
    ) {
        let vs: Vec<[usize; 3]> = voxels.into_iter().map(|(x, y, z)| [x, y, z]).collect();
        let d = descriptors([6, 6, 6], &vs);
        // both ratios divide a shorter half-axis by a longer one, so each
        // lies in (0, 1]; they need not be ordered against each other
        prop_assert!(d.phi_d > 0.0);
        prop_assert!(d.phi_flat > 0.0 && d.phi_flat <= 1.0 + 1e-12);
        prop_assert!(d.phi_elo > 0.0 && d.phi_elo <= 1.0 + 1e-12);
    }

    #[test]
    fn edt_matches_brute_force(seeds in prop::collection::vec(any::<bool>(), 64)) {
        prop_assume!(seeds.iter().any(|&s| s));
        let dims = [4usize, 4, 4];
        let d = edt_squared(dims, |i| seeds[i]);
        for idx in 0..64 {
            let (x, y, z) = (idx % 4, (idx / 4) % 4, idx / 16);
            let mut best = f64::INFINITY;
            for (j, &s) in seeds.iter().enumerate() {
                if s {
                    let (sx, sy, sz) = (j % 4, (j / 4) % 4, j / 16);
                    let dd = (x as f64 - sx as f64).powi(2)
                        + (y as f64 - sy as f64).powi(2)
                        + (z as f64 - sz as f64).powi(2);
                    best = best.min(dd);
                }
            }
            prop_assert!((d[idx] - best).abs() < 1e-9);
        }
    }

    #[test]
    fn grain_map_rejects_bad_labels(n in 1usize..4, bad in 5u32..10) {
        // a label above the declared grain count must be rejected
        let mut labels = vec![0u32; 27];
        for (i, l) in labels.iter_mut().enumerate().take(2 * n) {
            *l = (i % n) as u32 + 1;
        }
        labels[26] = bad;
        prop_assert!(GrainMap::new([3, 3, 3], 1.0, labels, n).is_err());
    }
}
