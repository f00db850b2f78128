//! Linear-programming fitting.
//!
//! Two approaches: (a) a volume-constrained assignment LP, solved as a
//! min-cost flow, whose dual variables yield the weights of a Laguerre/GBPD
//! tessellation with sites and norms fixed from the data; (b) an SVM-style
//! LP over lifted 10-dimensional parameter vectors that optimizes sites,
//! norms and weights jointly by separating each cell's voxels from its
//! competitors' with slack on the boundary band.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::diagram::{floor_spd, Generator, ModelKind, Tessellation, LAMBDA_MIN};
use crate::edt::edt_squared;
use crate::error::{Error, Result};
use crate::grid::GrainMap;
use crate::heuristics;
use crate::netflow::{FlowSolution, MinCostFlow};
use crate::simplex::{DenseLp, Sense};

/// Per-grain volume interval `[κ_i⁻, κ_i⁺]` for the assignment LP.
#[derive(Debug, Clone)]
pub struct VolumeBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl VolumeBounds {
    /// Bounds `|C_i^GT| ± epsilon`, lower bounds clamped at zero.
    pub fn from_map(map: &GrainMap, epsilon: f64) -> Self {
        let mut counts = vec![0.0f64; map.n_grains() + 1];
        for &l in map.labels() {
            counts[l as usize] += 1.0;
        }
        VolumeBounds {
            lower: counts[1..].iter().map(|&c| (c - epsilon).max(0.0)).collect(),
            upper: counts[1..].iter().map(|&c| c + epsilon).collect(),
        }
    }

    /// Checks interval validity and the necessary feasibility condition
    /// `Σκ⁻ ≤ m ≤ Σκ⁺` for `m` fitting voxels.
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::Data("bound vectors differ in length".into()));
        }
        for (i, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo < 0.0 || lo > hi {
                return Err(Error::Data(format!(
                    "grain {}: invalid volume bounds [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        let sum_lo: f64 = self.lower.iter().sum();
        let sum_hi: f64 = self.upper.iter().sum();
        if sum_lo > m as f64 + 1e-9 || sum_hi < m as f64 - 1e-9 {
            return Err(Error::Infeasible(format!(
                "volume bounds cannot cover {m} voxels (Σκ⁻ = {sum_lo}, Σκ⁺ = {sum_hi})"
            )));
        }
        Ok(())
    }

    fn scaled(&self, factor: f64) -> VolumeBounds {
        VolumeBounds {
            lower: self.lower.iter().map(|&v| v * factor).collect(),
            upper: self.upper.iter().map(|&v| v * factor).collect(),
        }
    }
}

/// Stride-subsampled voxel subset per grain, split into the boundary band
/// (within `delta` of some non-grain voxel) and the `delta`-interior.
#[derive(Debug, Clone)]
pub struct Coreset {
    /// Per grain (1-based index - 1): linear voxel indices of band voxels.
    pub band: Vec<Vec<usize>>,
    /// Per grain: linear voxel indices of delta-interior voxels.
    pub interior: Vec<Vec<usize>>,
    pub stride: usize,
    pub delta: f64,
}

impl Coreset {
    /// All band voxels, ordered by grain then by linear index.
    pub fn band_voxels(&self) -> Vec<usize> {
        self.band.iter().flatten().copied().collect()
    }

    pub fn band_len(&self) -> usize {
        self.band.iter().map(Vec::len).sum()
    }
}

/// Squared distance from each voxel of grain `i` to the nearest voxel not in
/// grain `i`, computed on the grain's bounding box padded by one voxel (the
/// clamp of any outside voxel onto the padded box is itself non-grain and at
/// most as far, so the restriction is exact).
fn grain_boundary_dist_sq(map: &GrainMap, grain: usize) -> Vec<(usize, f64)> {
    let [nx, ny, nz] = map.dims();
    let voxels = map.grain_voxels(grain);
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for v in &voxels {
        for d in 0..3 {
            lo[d] = lo[d].min(v[d]);
            hi[d] = hi[d].max(v[d]);
        }
    }
    let dims = [nx, ny, nz];
    let lo = [
        lo[0].saturating_sub(1),
        lo[1].saturating_sub(1),
        lo[2].saturating_sub(1),
    ];
    let hi = [
        (hi[0] + 1).min(dims[0] - 1),
        (hi[1] + 1).min(dims[1] - 1),
        (hi[2] + 1).min(dims[2] - 1),
    ];
    let bdims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let labels = map.labels();
    let seed = |idx: usize| {
        let x = lo[0] + idx % bdims[0];
        let y = lo[1] + (idx / bdims[0]) % bdims[1];
        let z = lo[2] + idx / (bdims[0] * bdims[1]);
        labels[x + nx * (y + ny * z)] != grain as u32
    };
    let dist = edt_squared(bdims, seed);
    voxels
        .iter()
        .map(|&[x, y, z]| {
            let b = (x - lo[0]) + bdims[0] * ((y - lo[1]) + bdims[1] * (z - lo[2]));
            (x + nx * (y + ny * z), dist[b])
        })
        .collect()
}

/// Every voxel whose coordinates are all multiples of `stride`, split by the
/// `delta`-interior test. `delta = 0` disables the interior entirely (all
/// grain voxels are at distance >= 1 from the complement).
pub fn build_coreset(map: &GrainMap, stride: usize, delta: f64) -> Result<Coreset> {
    if stride < 1 {
        return Err(Error::Data("coreset stride must be >= 1".into()));
    }
    if delta < 0.0 {
        return Err(Error::Data("coreset delta must be >= 0".into()));
    }
    let n = map.n_grains();
    let delta_sq = delta * delta;
    let mut band = vec![Vec::new(); n];
    let mut interior = vec![Vec::new(); n];
    for i in 1..=n {
        for (idx, dist_sq) in grain_boundary_dist_sq(map, i) {
            let [nx, ny, _] = map.dims();
            let (x, y, z) = (idx % nx, (idx / nx) % ny, idx / (nx * ny));
            if x % stride != 0 || y % stride != 0 || z % stride != 0 {
                continue;
            }
            if delta > 0.0 && dist_sq >= delta_sq {
                interior[i - 1].push(idx);
            } else {
                band[i - 1].push(idx);
            }
        }
        if band[i - 1].is_empty() {
            return Err(Error::Data(format!(
                "grain {i}: coreset is empty (stride {stride}, delta {delta}); \
                 the fit would be unconstrained there"
            )));
        }
    }
    Ok(Coreset { band, interior, stride, delta })
}

/// Weights from LP dual values: shifted so the minimum is zero (cell
/// assignment is invariant under a common weight shift).
pub fn dual_to_weights(duals: &[f64]) -> Vec<f64> {
    let min = duals.iter().cloned().fold(f64::INFINITY, f64::min);
    duals.iter().map(|&d| d - min).collect()
}

/// Primal/dual agreement of the assignment LP solve.
#[derive(Debug, Clone, Copy)]
pub struct LpCertificate {
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|primal - dual|`.
    pub duality_gap: f64,
    /// Largest complementary-slackness violation over assignment variables
    /// and volume constraints.
    pub slackness_residual: f64,
}

#[derive(Debug, Clone)]
pub struct LpDualFit {
    pub tessellation: Tessellation,
    /// Linear indices of the voxels the LP was solved over.
    pub fit_voxels: Vec<usize>,
    /// LP-optimal grain (1-based) per fitting voxel.
    pub assignment: Vec<u32>,
    pub certificate: LpCertificate,
    pub notes: Vec<String>,
}

/// Volume-constrained assignment LP. Sites are fixed at the barycenters
/// (overridable via `sites`, e.g. for inversion studies where the true
/// generator positions are known) and the norms at identity (Laguerre) or
/// the per-grain PCA matrices (GBPD kinds, overridable via `matrices`); only
/// the weights are optimized, as the duals of the volume constraints. When a
/// coreset is given the LP is restricted to its band voxels and the bounds
/// are scaled proportionally.
pub fn fit_lp_dual(
    map: &GrainMap,
    kind: ModelKind,
    bounds: &VolumeBounds,
    sites_override: Option<Vec<Vector3<f64>>>,
    matrices: Option<Vec<Matrix3<f64>>>,
    coreset: Option<&Coreset>,
) -> Result<LpDualFit> {
    if kind == ModelKind::Voronoi {
        return Err(Error::Capability(
            "the assignment LP optimizes weights; it cannot produce a Voronoi tessellation".into(),
        ));
    }
    let n = map.n_grains();
    if bounds.lower.len() != n {
        return Err(Error::Data(format!(
            "bounds cover {} grains, map has {n}",
            bounds.lower.len()
        )));
    }
    let mut notes = Vec::new();
    // Sites and norms.
    let mut sites = Vec::with_capacity(n);
    let mut mats = Vec::with_capacity(n);
    if let Some(s) = &sites_override {
        if s.len() != n {
            return Err(Error::Data(format!("{} sites for {n} grains", s.len())));
        }
    }
    for i in 1..=n {
        let mo = map.moments(i)?;
        sites.push(match &sites_override {
            Some(s) => s[i - 1],
            None => mo.barycenter,
        });
        let m = match &matrices {
            Some(ms) => {
                if ms.len() != n {
                    return Err(Error::Data(format!("{} matrices for {n} grains", ms.len())));
                }
                let (m, floored) = floor_spd(&ms[i - 1], LAMBDA_MIN)?;
                if floored {
                    notes.push(format!("grain {i}: supplied matrix floored"));
                }
                m
            }
            None => {
                let (m, floored) = heuristics::model_matrix(kind, &mo.covariance)?;
                if floored {
                    notes.push(format!("grain {i}: degenerate covariance, eigenvalues floored"));
                }
                m
            }
        };
        mats.push(m);
    }
    // Fitting voxel set: foreground voxels, or the coreset band.
    let [nx, ny, _] = map.dims();
    let fit_voxels: Vec<usize> = match coreset {
        Some(cs) => cs.band_voxels(),
        None => {
            (0..map.labels().len()).filter(|&idx| map.labels()[idx] > 0).collect()
        }
    };
    let m_fit = fit_voxels.len();
    let bounds = match coreset {
        Some(_) => {
            let factor = m_fit as f64 / map.foreground_count() as f64;
            notes.push(format!("volume bounds scaled by coreset fraction {factor:.4}"));
            bounds.scaled(factor)
        }
        None => bounds.clone(),
    };
    bounds.validate(m_fit)?;

    // Transportation costs γ_ij, voxel-major.
    let centers: Vec<Vector3<f64>> = fit_voxels
        .iter()
        .map(|&idx| {
            Vector3::new(
                (idx % nx) as f64,
                ((idx / nx) % ny) as f64,
                (idx / (nx * ny)) as f64,
            )
        })
        .collect();
    let (sites_ref, mats_ref) = (&sites, &mats);
    let gamma: Vec<f64> = centers
        .par_iter()
        .flat_map_iter(|y| {
            (0..n).map(move |i| {
                let d = y - sites_ref[i];
                (d.transpose() * mats_ref[i] * d)[0]
            })
        })
        .collect();

    // Min-cost flow: source S feeds each grain within its volume interval,
    // each fitting voxel demands one unit. Lower bounds are shifted into the
    // node supplies.
    let s = n + m_fit;
    let mut mcf = MinCostFlow::new(n + m_fit + 1);
    let sum_lower: f64 = bounds.lower.iter().sum();
    mcf.set_supply(s, m_fit as f64 - sum_lower);
    for i in 0..n {
        mcf.set_supply(i, bounds.lower[i]);
        mcf.add_arc(s, i, bounds.upper[i] - bounds.lower[i], 0.0);
    }
    for (j, _) in fit_voxels.iter().enumerate() {
        mcf.set_supply(n + j, -1.0);
    }
    for j in 0..m_fit {
        for i in 0..n {
            mcf.add_arc(i, n + j, 1.0, gamma[j * n + i]);
        }
    }
    let FlowSolution { flow, potential, objective } = mcf.solve()?;

    // Duals: grain potentials relative to the source.
    let t: Vec<f64> = (0..n).map(|i| potential[s] - potential[i]).collect();
    let weights = dual_to_weights(&t);

    // Per-voxel assignment from the integral optimal flow.
    let mut assignment = vec![0u32; m_fit];
    let mut cell_sizes = vec![0.0f64; n];
    for j in 0..m_fit {
        let mut best = 0usize;
        let mut best_flow = -1.0;
        for i in 0..n {
            let f = flow[n + j * n + i];
            if f > best_flow {
                best_flow = f;
                best = i;
            }
        }
        assignment[j] = best as u32 + 1;
        cell_sizes[best] += 1.0;
    }

    // Certificate: dual objective of (t, v) with v_j = min_i (γ_ij - t_i),
    // plus complementary-slackness residuals.
    let mut dual_obj = 0.0;
    for i in 0..n {
        dual_obj += if t[i] >= 0.0 { bounds.lower[i] * t[i] } else { bounds.upper[i] * t[i] };
    }
    let mut residual = 0.0f64;
    for j in 0..m_fit {
        let mut v = f64::INFINITY;
        for i in 0..n {
            v = v.min(gamma[j * n + i] - t[i]);
        }
        dual_obj += v;
        for i in 0..n {
            let f = flow[n + j * n + i];
            if f > 1e-9 {
                residual = residual.max(f * (gamma[j * n + i] - t[i] - v).abs());
            }
        }
    }
    // LP volumes come from the flow itself; the rounded per-voxel assignment
    // can differ fractionally when the bounds are non-integral.
    let mut flow_volumes = vec![0.0f64; n];
    for j in 0..m_fit {
        for i in 0..n {
            flow_volumes[i] += flow[n + j * n + i];
        }
    }
    for i in 0..n {
        // t_i != 0 requires the matching volume bound to be tight.
        if t[i] > 1e-9 {
            residual = residual.max(t[i].min(1.0) * (flow_volumes[i] - bounds.lower[i]).abs());
        } else if t[i] < -1e-9 {
            residual = residual.max((-t[i]).min(1.0) * (flow_volumes[i] - bounds.upper[i]).abs());
        }
    }
    let certificate = LpCertificate {
        primal_objective: objective,
        dual_objective: dual_obj,
        duality_gap: (objective - dual_obj).abs(),
        slackness_residual: residual,
    };

    let generators = (0..n)
        .map(|i| Generator { site: sites[i], weight: weights[i], matrix: mats[i] })
        .collect();
    Ok(LpDualFit {
        tessellation: Tessellation::new(kind, map.dims(), generators)?,
        fit_voxels,
        assignment,
        certificate,
        notes,
    })
}

/// Lifted voxel vector (1, y, quadratic monomials of y).
fn lift_point(y: Vector3<f64>) -> [f64; 10] {
    [
        1.0,
        y.x,
        y.y,
        y.z,
        y.x * y.x,
        y.x * y.y,
        y.x * y.z,
        y.y * y.y,
        y.y * y.z,
        y.z * y.z,
    ]
}

#[derive(Debug, Clone)]
pub struct LpSvmFit {
    pub tessellation: Tessellation,
    /// Optimal sum of slacks.
    pub objective: f64,
    /// Raw optimal lifted parameter vectors, one per grain, in coordinates
    /// centered on `center` (the LP is solved in centered coordinates for
    /// conditioning). Useful for checking the LP constraints directly, since
    /// decoding can floor an indefinite norm.
    pub lifted: Vec<[f64; 10]>,
    pub center: Vector3<f64>,
    pub notes: Vec<String>,
}

/// SVM-style LP: find lifted parameter vectors 𝔐_i whose induced power
/// distances separate each grain's delta-interior voxels from all other
/// cells with margin 1, minimizing the total slack over the boundary band.
/// Decodes the 𝔐_i back to (site, norm, weight) generators; non-SPD decoded
/// norms are floored and reported.
pub fn fit_lp_svm(map: &GrainMap, coreset: &Coreset) -> Result<LpSvmFit> {
    let n = map.n_grains();
    let [nx, ny, nz] = map.dims();
    let center = Vector3::new(
        (nx as f64 - 1.0) / 2.0,
        (ny as f64 - 1.0) / 2.0,
        (nz as f64 - 1.0) / 2.0,
    );
    let voxel_center = |idx: usize| {
        Vector3::new(
            (idx % nx) as f64,
            ((idx / nx) % ny) as f64,
            (idx / (nx * ny)) as f64,
        ) - center
    };

    // Variables: 𝔐_i split into positive and negative parts (20n), then one
    // slack per band voxel.
    let m_band = coreset.band_len();
    let num_vars = 20 * n + m_band;
    let mut objective = vec![0.0; num_vars];
    for z in 0..m_band {
        objective[20 * n + z] = 1.0;
    }
    let mut lp = DenseLp::minimize(objective);
    let pair_row = |lifted: &[f64; 10], i: usize, l: usize, zeta: Option<usize>| {
        let mut row = vec![0.0; num_vars];
        for (k, &v) in lifted.iter().enumerate() {
            row[20 * i + k] = v;
            row[20 * i + 10 + k] = -v;
            row[20 * l + k] = -v;
            row[20 * l + 10 + k] = v;
        }
        if let Some(z) = zeta {
            row[20 * n + z] = -1.0;
        }
        row
    };
    let mut zeta_index = 0usize;
    for i in 0..n {
        for &idx in &coreset.interior[i] {
            let lifted = lift_point(voxel_center(idx));
            for l in 0..n {
                if l != i {
                    lp.add_row(pair_row(&lifted, i, l, None), Sense::Le, -1.0);
                }
            }
        }
        for &idx in &coreset.band[i] {
            let lifted = lift_point(voxel_center(idx));
            for l in 0..n {
                if l != i {
                    lp.add_row(pair_row(&lifted, i, l, Some(zeta_index)), Sense::Le, 0.0);
                }
            }
            zeta_index += 1;
        }
    }
    let sol = lp.solve()?;

    // Decode each 𝔐_i = (α, aᵀ, M entries) to (x, M, w).
    let mut notes = Vec::new();
    let mut generators = Vec::with_capacity(n);
    let mut lifted_out = Vec::with_capacity(n);
    for i in 0..n {
        let e: Vec<f64> = (0..10).map(|k| sol.x[20 * i + k] - sol.x[20 * i + 10 + k]).collect();
        lifted_out.push([e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8], e[9]]);
        let alpha = e[0];
        let a = Vector3::new(e[1], e[2], e[3]);
        let m_raw = Matrix3::new(
            e[4],
            e[5] / 2.0,
            e[6] / 2.0,
            e[5] / 2.0,
            e[7],
            e[8] / 2.0,
            e[6] / 2.0,
            e[8] / 2.0,
            e[9],
        );
        let (m, floored) = floor_spd(&m_raw, LAMBDA_MIN)?;
        if floored {
            notes.push(format!("grain {}: decoded norm not positive definite, floored", i + 1));
        }
        let site_centered = m
            .try_inverse()
            .map(|inv| -(inv * a) / 2.0)
            .ok_or_else(|| Error::Numerical(format!("grain {}: singular decoded norm", i + 1)))?;
        // With 𝔐ᵀ𝔜 equal to the power distance, α = xᵀMx − w.
        let weight = (site_centered.transpose() * m * site_centered)[0] - alpha;
        generators.push(Generator { site: site_centered + center, weight, matrix: m });
    }
    // Common weight shift for tidiness; assignment is invariant.
    let min_w = generators.iter().map(|g| g.weight).fold(f64::INFINITY, f64::min);
    for g in &mut generators {
        g.weight -= min_w;
    }
    Ok(LpSvmFit {
        tessellation: Tessellation::new(ModelKind::Gbpd, map.dims(), generators)?,
        objective: sol.objective,
        lifted: lifted_out,
        center,
        notes,
    })
}
