//! Synthetic ground-truth generation: sample generators from a Poisson (or
//! fixed-count) point process with uniform marks, discretize, and relabel so
//! the returned tessellation reproduces the returned grain map exactly. This
//! is the fixture factory for all inversion tests.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::diagram::{assign, Generator, ModelKind, Tessellation};
use crate::error::{Error, Result};
use crate::grid::GrainMap;

/// Number of full redraws before [`generate`] gives up on producing a map
/// whose cells all contain more than one voxel.
pub const RESAMPLE_BUDGET: usize = 20;

/// How many generators to sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Count {
    /// Poisson-distributed count with the given expectation (whole window).
    Poisson(f64),
    Fixed(usize),
}

/// Parameters of one synthetic draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dims: [usize; 3],
    pub kind: ModelKind,
    pub count: Count,
    /// Weights are uniform on this interval (ignored for Voronoi).
    pub weight_range: [f64; 2],
    /// Per-axis half-axis ranges of the ellipsoidal norm (GBPD kinds only).
    pub half_axis_ranges: [[f64; 2]; 3],
    pub seed: u64,
}

impl SynthSpec {
    /// Isotropic defaults: weights uniform on (window diagonal)·[0.025, 0.075],
    /// half-axes uniform on [0.8, 1.2] per axis.
    pub fn isotropic(dims: [usize; 3], kind: ModelKind, count: Count, seed: u64) -> Self {
        let diag = Vector3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64).norm();
        SynthSpec {
            dims,
            kind,
            count,
            weight_range: [0.025 * diag, 0.075 * diag],
            half_axis_ranges: [[0.8, 1.2]; 3],
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.weight_range[0] > self.weight_range[1] {
            return Err(Error::Data("weight range lower bound exceeds upper bound".into()));
        }
        for r in &self.half_axis_ranges {
            if r[0] <= 0.0 || r[0] > r[1] {
                return Err(Error::Data(format!("invalid half-axis range [{}, {}]", r[0], r[1])));
            }
        }
        let expected = match self.count {
            Count::Poisson(lambda) => lambda,
            Count::Fixed(n) => n as f64,
        };
        if expected < 2.0 {
            return Err(Error::Data(format!(
                "expected generator count {expected} < 2"
            )));
        }
        Ok(())
    }
}

/// Stretch the first half-axis range so the ratio of range midpoints between
/// the longest and shortest axis is 3, producing elongated GBPD cells.
pub fn anisotropize(spec: &SynthSpec) -> SynthSpec {
    let mut out = spec.clone();
    let mids: Vec<f64> = out.half_axis_ranges.iter().map(|r| (r[0] + r[1]) / 2.0).collect();
    let min_mid = mids.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = 3.0 * min_mid / mids[0];
    out.half_axis_ranges[0] = [spec.half_axis_ranges[0][0] * scale, spec.half_axis_ranges[0][1] * scale];
    out
}

fn sample_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let q = Quaternion::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    *UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix()
}

fn sample_matrix(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    match spec.kind {
        ModelKind::Voronoi | ModelKind::Laguerre => Matrix3::identity(),
        ModelKind::DiagonalGbpd | ModelKind::Gbpd => {
            let a: Vec<f64> = spec
                .half_axis_ranges
                .iter()
                .map(|r| rng.random_range(r[0]..=r[1]))
                .collect();
            let d = Matrix3::from_diagonal(&Vector3::new(
                1.0 / (a[0] * a[0]),
                1.0 / (a[1] * a[1]),
                1.0 / (a[2] * a[2]),
            ));
            if spec.kind == ModelKind::DiagonalGbpd {
                d
            } else {
                let r = sample_rotation(rng);
                r * d * r.transpose()
            }
        }
    }
}

fn sample_generators(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Generator>> {
    let n = match spec.count {
        Count::Fixed(n) => n,
        Count::Poisson(lambda) => {
            let draw: f64 = Poisson::new(lambda)
                .map_err(|e| Error::Data(format!("bad Poisson intensity: {e}")))?
                .sample(rng);
            draw as usize
        }
    };
    if n < 2 {
        return Err(Error::Data(format!("drawn generator count {n} < 2")));
    }
    let mut generators = Vec::with_capacity(n);
    for _ in 0..n {
        let site = Vector3::new(
            rng.random_range(0.0..spec.dims[0] as f64),
            rng.random_range(0.0..spec.dims[1] as f64),
            rng.random_range(0.0..spec.dims[2] as f64),
        );
        let weight = if spec.kind == ModelKind::Voronoi {
            0.0
        } else {
            rng.random_range(spec.weight_range[0]..=spec.weight_range[1])
        };
        let matrix = sample_matrix(spec, rng);
        generators.push(Generator { site, weight, matrix });
    }
    Ok(generators)
}

/// Draw a tessellation and its discretization. Draws are rejected and redrawn
/// (up to [`RESAMPLE_BUDGET`] times) until every nonempty cell has more than
/// one voxel; generators of empty cells are dropped and the labels compacted,
/// so re-discretizing the returned tessellation reproduces the map exactly.
pub fn generate(spec: &SynthSpec) -> Result<(Tessellation, GrainMap)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..RESAMPLE_BUDGET {
        let generators = sample_generators(spec, &mut rng)?;
        let tess = Tessellation::new(spec.kind, spec.dims, generators)?;
        let field = assign(&tess, spec.dims);
        let mut counts = vec![0usize; tess.generators.len() + 1];
        for &l in &field.labels {
            counts[l as usize] += 1;
        }
        if counts[1..].iter().any(|&c| c == 1) {
            continue; // a one-voxel cell: reject the whole draw
        }
        // Compact: surviving generators keep their relative order, so the
        // lowest-index tie rule is unaffected by dropping empty cells.
        let mut remap = vec![0u32; tess.generators.len() + 1];
        let mut survivors = Vec::new();
        for (i, g) in tess.generators.iter().enumerate() {
            if counts[i + 1] > 0 {
                survivors.push(g.clone());
                remap[i + 1] = survivors.len() as u32;
            }
        }
        if survivors.len() < 2 {
            continue;
        }
        let labels: Vec<u32> = field.labels.iter().map(|&l| remap[l as usize]).collect();
        let n = survivors.len();
        let map = GrainMap::new(spec.dims, 1.0, labels, n)?;
        let tess = Tessellation::new(spec.kind, spec.dims, survivors)?;
        return Ok((tess, map));
    }
    Err(Error::Data(format!(
        "resampling budget of {RESAMPLE_BUDGET} draws exhausted without a valid map"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;

    #[test]
    fn rejects_single_generator() {
        let spec = SynthSpec::isotropic([8, 8, 8], ModelKind::Voronoi, Count::Fixed(1), 0);
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn two_voronoi_cells_split_by_bisector() {
        let spec = SynthSpec::isotropic([16, 16, 16], ModelKind::Voronoi, Count::Fixed(2), 7);
        let (tess, map) = generate(&spec).unwrap();
        assert_eq!(map.n_grains(), 2);
        for (idx, &l) in map.labels().iter().enumerate() {
            let y = Vector3::new(
                (idx % 16) as f64,
                ((idx / 16) % 16) as f64,
                (idx / 256) as f64,
            );
            let d0 = (y - tess.generators[0].site).norm_squared();
            let d1 = (y - tess.generators[1].site).norm_squared();
            let expect = if d0 <= d1 { 1 } else { 2 };
            assert_eq!(l, expect, "voxel {idx}");
        }
    }

    #[test]
    fn seed_stability_and_sensitivity() {
        let spec = SynthSpec::isotropic([12, 12, 12], ModelKind::Laguerre, Count::Poisson(8.0), 3);
        let (t1, m1) = generate(&spec).unwrap();
        let (t2, m2) = generate(&spec).unwrap();
        assert_eq!(m1.labels(), m2.labels());
        assert_eq!(
            serde_json::to_string(&t1).unwrap(),
            serde_json::to_string(&t2).unwrap()
        );
        let other = SynthSpec { seed: 4, ..spec };
        let (_, m3) = generate(&other).unwrap();
        assert_ne!(m1.labels(), m3.labels());
    }

    #[test]
    fn roundtrip_exact_for_every_kind() {
        for kind in ModelKind::ALL {
            let spec = SynthSpec::isotropic([14, 14, 14], kind, Count::Fixed(6), 11);
            let (tess, map) = generate(&spec).unwrap();
            let field = assign(&tess, map.dims());
            assert_eq!(field.labels, map.labels(), "{kind:?}");
            assert_eq!(metrics::f_correct(&map, &field).unwrap(), 1.0);
            assert_eq!(metrics::f_missing(&field, map.n_grains()), 0.0);
        }
    }

    #[test]
    fn budget_exhaustion_on_impossible_window() {
        // 3 voxels, 2 generators: every draw yields a cell with <= 1 voxel.
        let spec = SynthSpec::isotropic([3, 1, 1], ModelKind::Voronoi, Count::Fixed(2), 0);
        let err = generate(&spec).unwrap_err();
        assert!(err.to_string().contains("budget"));
    }

    #[test]
    fn anisotropize_sets_ratio_three() {
        let spec = SynthSpec::isotropic([16, 16, 16], ModelKind::Gbpd, Count::Fixed(5), 1);
        let aniso = anisotropize(&spec);
        let mid = |r: [f64; 2]| (r[0] + r[1]) / 2.0;
        let mids: Vec<f64> = aniso.half_axis_ranges.iter().map(|&r| mid(r)).collect();
        let max = mids.iter().cloned().fold(0.0, f64::max);
        let min = mids.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((max / min - 3.0).abs() < 1e-12);
    }

    #[test]
    fn anisotropic_gbpd_cells_are_elongated() {
        let spec = anisotropize(&SynthSpec::isotropic(
            [32, 32, 32],
            ModelKind::Gbpd,
            Count::Fixed(12),
            5,
        ));
        let (_, map) = generate(&spec).unwrap();
        let mut sum = 0.0;
        for i in 1..=map.n_grains() {
            let voxels = map.grain_voxels(i);
            sum += metrics::descriptors(map.dims(), &voxels).phi_elo;
        }
        let mean = sum / map.n_grains() as f64;
        assert!(mean < 0.7, "mean elongation {mean}");
    }
}
