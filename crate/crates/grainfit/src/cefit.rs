//! Cross-entropy fitting of Laguerre generators: minimize an interface-based
//! discrepancy (sum of squared distances from ground-truth interface test
//! points to the corresponding fitted facets) by iteratively sampling
//! parameter vectors from a Gaussian, keeping an elite subset, and moving
//! the sampling distribution onto the elite statistics.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;

use crate::diagram::{facet_distance_laguerre, Generator, ModelKind, Tessellation};
use crate::error::{Error, Result};
use crate::grid::GrainMap;
use crate::heuristics;

#[derive(Debug, Clone)]
pub struct CeConfig {
    pub sample_size: usize,
    pub elite_size: usize,
    /// Maximum test points per adjacent grain pair.
    pub test_points_per_interface: usize,
    /// Initial sampling std for site coordinates, in voxels.
    pub coord_std: f64,
    /// Initial sampling std for weights; `None` derives it from the scale of
    /// the Hq weights.
    pub weight_std: Option<f64>,
    /// Stop when the best objective improves by less than this relative
    /// threshold over the stagnation window.
    pub stagnation_threshold: f64,
    pub stagnation_window: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for CeConfig {
    fn default() -> Self {
        CeConfig {
            sample_size: 4000,
            elite_size: 200,
            test_points_per_interface: 10,
            coord_std: 2.0,
            weight_std: None,
            stagnation_threshold: 1e-3,
            stagnation_window: 10,
            max_iterations: 200,
            seed: 0,
        }
    }
}

/// Test points sampled from the ground-truth interfaces: for each adjacent
/// pair (i, j) with i < j (1-based), a nonempty subset of the interface
/// voxels.
#[derive(Debug, Clone)]
pub struct TestPointSet {
    pub pairs: Vec<((usize, usize), Vec<Vector3<f64>>)>,
}

impl TestPointSet {
    pub fn num_points(&self) -> usize {
        self.pairs.iter().map(|(_, p)| p.len()).sum()
    }
}

/// Uniform without-replacement sample of at most `k` interface voxels per
/// adjacent grain pair. Deterministic in `seed`.
pub fn sample_test_points(map: &GrainMap, k: usize, seed: u64) -> Result<TestPointSet> {
    if k < 1 {
        return Err(Error::Data("test point budget must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = map.neighbor_sets();
    let mut pairs = Vec::new();
    for i in 1..=map.n_grains() {
        for &j in &sets[i] {
            let j = j as usize;
            if j <= i {
                continue;
            }
            let mut voxels = map.interface_voxels(i, j);
            if voxels.is_empty() {
                continue;
            }
            // Partial Fisher-Yates: the first min(k, len) entries are a
            // uniform without-replacement sample.
            let take = k.min(voxels.len());
            for t in 0..take {
                let u = Uniform::new(t, voxels.len()).unwrap();
                voxels.swap(t, u.sample(&mut rng));
            }
            let points = voxels[..take]
                .iter()
                .map(|&[x, y, z]| Vector3::new(x as f64, y as f64, z as f64))
                .collect();
            pairs.push(((i, j), points));
        }
    }
    Ok(TestPointSet { pairs })
}

/// Sum over all test points of the squared distance to the corresponding
/// facet of `tess` (including the empty-facet fallback). Zero iff every test
/// point lies on its facet.
pub fn interface_discrepancy(tess: &Tessellation, points: &TestPointSet) -> Result<f64> {
    if !matches!(tess.kind, ModelKind::Voronoi | ModelKind::Laguerre) {
        return Err(Error::Capability(
            "interface discrepancy needs affine facets (Voronoi or Laguerre)".into(),
        ));
    }
    let mut total = 0.0;
    for ((i, j), pts) in &points.pairs {
        for p in pts {
            total += facet_distance_laguerre(p, i - 1, j - 1, tess)?.dist_sq;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct CeFit {
    pub tessellation: Tessellation,
    /// Best-so-far objective after initialization and after each iteration.
    pub trace: Vec<f64>,
    pub notes: Vec<String>,
}

fn params_to_tessellation(
    params: &[f64],
    n: usize,
    dims: [usize; 3],
) -> Result<Tessellation> {
    let generators = (0..n)
        .map(|i| Generator {
            site: Vector3::new(params[3 * i], params[3 * i + 1], params[3 * i + 2]),
            weight: params[3 * n + i],
            matrix: nalgebra::Matrix3::identity(),
        })
        .collect();
    Tessellation::new(ModelKind::Laguerre, dims, generators)
}

/// Cross-entropy optimization of a Laguerre tessellation, initialized from
/// the Hq heuristic. Parameter vector layout: all site coordinates, then all
/// weights (4n entries).
pub fn fit_ce(map: &GrainMap, config: &CeConfig) -> Result<CeFit> {
    if map.n_grains() < 2 {
        return Err(Error::Data("cross-entropy fitting needs at least 2 grains".into()));
    }
    if config.elite_size >= config.sample_size || config.elite_size == 0 {
        return Err(Error::Data("elite size must be in [1, sample_size)".into()));
    }
    let n = map.n_grains();
    let dims = map.dims();
    let points = sample_test_points(map, config.test_points_per_interface, config.seed)?;
    let (init, _) = heuristics::fit_hq(map, ModelKind::Laguerre)?;

    let dim = 4 * n;
    let mut mean = vec![0.0f64; dim];
    for (i, g) in init.generators.iter().enumerate() {
        mean[3 * i] = g.site.x;
        mean[3 * i + 1] = g.site.y;
        mean[3 * i + 2] = g.site.z;
        mean[3 * n + i] = g.weight;
    }
    let weight_std = config.weight_std.unwrap_or_else(|| {
        let mean_abs =
            init.generators.iter().map(|g| g.weight.abs() + 1.0).sum::<f64>() / n as f64;
        0.5 * mean_abs
    });
    let mut std = vec![config.coord_std; dim];
    for s in std[3 * n..].iter_mut() {
        *s = weight_std;
    }

    let evaluate = |params: &[f64]| -> Result<f64> {
        interface_discrepancy(&params_to_tessellation(params, n, dims)?, &points)
    };
    let mut best_params = mean.clone();
    let mut best_obj = evaluate(&mean)?;
    let mut trace = vec![best_obj];
    let mut notes = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    for iter in 0..config.max_iterations {
        if std.iter().all(|&s| s < 1e-12) {
            notes.push(format!("iteration {iter}: sampling distribution collapsed"));
            break;
        }
        // Draw all samples single-threaded, evaluate in parallel.
        let samples: Vec<Vec<f64>> = (0..config.sample_size)
            .map(|_| {
                (0..dim)
                    .map(|d| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mean[d] + std[d] * z
                    })
                    .collect()
            })
            .collect();
        let objectives: Vec<f64> = samples
            .par_iter()
            .map(|s| evaluate(s))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..config.sample_size).collect();
        order.sort_by(|&a, &b| objectives[a].total_cmp(&objectives[b]).then(a.cmp(&b)));
        let elite = &order[..config.elite_size];
        if objectives[elite[0]] < best_obj {
            best_obj = objectives[elite[0]];
            best_params = samples[elite[0]].clone();
        }
        trace.push(best_obj);
        // Move the sampling distribution onto the elite statistics.
        for d in 0..dim {
            let m = elite.iter().map(|&e| samples[e][d]).sum::<f64>() / config.elite_size as f64;
            let var = elite.iter().map(|&e| (samples[e][d] - m).powi(2)).sum::<f64>()
                / config.elite_size as f64;
            mean[d] = m;
            std[d] = var.sqrt();
        }
        // Stagnation: relative improvement over the window below threshold.
        if trace.len() > config.stagnation_window {
            let past = trace[trace.len() - 1 - config.stagnation_window];
            let improvement = (past - best_obj) / past.abs().max(1e-30);
            if improvement < config.stagnation_threshold {
                break;
            }
        }
    }
    Ok(CeFit { tessellation: params_to_tessellation(&best_params, n, dims)?, trace, notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::assign;
    use crate::metrics;
    use crate::synth::{self, Count, SynthSpec};
    use approx::assert_relative_eq;

    fn small_map() -> GrainMap {
        let spec = SynthSpec::isotropic([12, 12, 12], ModelKind::Laguerre, Count::Fixed(4), 9);
        synth::generate(&spec).unwrap().1
    }

    #[test]
    fn test_points_cover_all_when_budget_large() {
        let map = small_map();
        let t = sample_test_points(&map, usize::MAX / 2, 0).unwrap();
        for ((i, j), pts) in &t.pairs {
            let mut got: Vec<_> = pts
                .iter()
                .map(|p| [p.x as usize, p.y as usize, p.z as usize])
                .collect();
            got.sort();
            let mut want = map.interface_voxels(*i, *j);
            want.sort();
            assert_eq!(got, want, "pair {i},{j}");
        }
    }

    #[test]
    fn test_points_k1_and_determinism() {
        let map = small_map();
        let t = sample_test_points(&map, 1, 7).unwrap();
        assert!(t.pairs.iter().all(|(_, p)| p.len() == 1));
        let again = sample_test_points(&map, 1, 7).unwrap();
        for (a, b) in t.pairs.iter().zip(&again.pairs) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
        }
        // all sampled points really lie on the named interface
        for ((i, j), pts) in &t.pairs {
            let iface = map.interface_voxels(*i, *j);
            for p in pts {
                assert!(iface.contains(&[p.x as usize, p.y as usize, p.z as usize]));
            }
        }
    }

    #[test]
    fn discrepancy_zero_on_exact_facets_and_squared_offset() {
        // Two generators split 8x1x1 at x = 3.5; a test point on the plane
        // scores 0, one at distance 3 scores 9.
        let tess = Tessellation::new(
            ModelKind::Laguerre,
            [8, 4, 4],
            vec![
                Generator::isotropic(Vector3::new(1.5, 1.5, 1.5), 0.0),
                Generator::isotropic(Vector3::new(5.5, 1.5, 1.5), 0.0),
            ],
        )
        .unwrap();
        let on_plane = TestPointSet {
            pairs: vec![((1, 2), vec![Vector3::new(3.5, 1.5, 1.5)])],
        };
        assert_relative_eq!(
            interface_discrepancy(&tess, &on_plane).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        let off_plane = TestPointSet {
            pairs: vec![((1, 2), vec![Vector3::new(0.5, 1.5, 1.5)])],
        };
        assert_relative_eq!(
            interface_discrepancy(&tess, &off_plane).unwrap(),
            9.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn discrepancy_rejects_gbpd() {
        let map = small_map();
        let (tess, _) = heuristics::fit_h0(&map, ModelKind::Gbpd).unwrap();
        let t = sample_test_points(&map, 2, 0).unwrap();
        assert!(matches!(
            interface_discrepancy(&tess, &t),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn fit_ce_improves_and_trace_monotone() {
        let map = small_map();
        let config = CeConfig {
            sample_size: 300,
            elite_size: 30,
            max_iterations: 15,
            seed: 3,
            ..CeConfig::default()
        };
        let fit = fit_ce(&map, &config).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(
            *fit.trace.last().unwrap() < fit.trace[0],
            "no improvement over Hq: {:?}",
            (fit.trace.first(), fit.trace.last())
        );
        // the improved generators also classify more voxels correctly
        let (hq, _) = heuristics::fit_hq(&map, ModelKind::Laguerre).unwrap();
        let fc_hq = metrics::f_correct(&map, &assign(&hq, map.dims())).unwrap();
        let fc_ce = metrics::f_correct(&map, &assign(&fit.tessellation, map.dims())).unwrap();
        assert!(fc_ce >= fc_hq - 0.02, "F_c degraded: {fc_ce} vs {fc_hq}");
    }

    #[test]
    fn fit_ce_deterministic() {
        let map = small_map();
        let config = CeConfig {
            sample_size: 100,
            elite_size: 10,
            max_iterations: 3,
            seed: 11,
            ..CeConfig::default()
        };
        let a = fit_ce(&map, &config).unwrap();
        let b = fit_ce(&map, &config).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(
            serde_json::to_string(&a.tessellation).unwrap(),
            serde_json::to_string(&b.tessellation).unwrap()
        );
    }

    #[test]
    fn fit_ce_rejects_single_grain() {
        let map = GrainMap::new([4, 1, 1], 1.0, vec![1; 4], 1).unwrap();
        assert!(fit_ce(&map, &CeConfig::default()).is_err());
    }
}
