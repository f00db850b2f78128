//! Gradient-based fitting: the hard voxel assignment is relaxed to a softmax
//! over negated power distances, scored with a (negative) binary
//! cross-entropy against the ground-truth labels, and maximized by
//! minibatch stochastic gradient ascent. Positive definiteness of the GBPD
//! norms is maintained by optimizing Cholesky factors `M = LLᵀ` with
//! log-parameterized diagonals.

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diagram::{Generator, ModelKind, Tessellation};
use crate::error::{Error, Result};
use crate::grid::GrainMap;
use crate::heuristics;
use crate::metrics::phi_d_from_volume;

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` before logarithms.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct GdConfig {
    /// Softmax temperature; `None` uses (mean volume-equivalent grain
    /// diameter)², which scales the squared distances into softmax range.
    pub tau: Option<f64>,
    pub lr_sites: f64,
    /// Learning rate for weights, as a multiple of the temperature (weights
    /// live on the scale of squared distances).
    pub lr_weights: f64,
    pub lr_factors: f64,
    pub minibatch: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            tau: None,
            lr_sites: 1e-1,
            lr_weights: 1e-1,
            lr_factors: 1e-2,
            minibatch: 4096,
            max_epochs: 25,
            seed: 0,
        }
    }
}

/// Optimization state: one Cholesky factor per generator, with the diagonal
/// stored as logarithms inside `log_diag` and `factor` holding the strict
/// lower triangle.
#[derive(Debug, Clone)]
struct Params {
    kind: ModelKind,
    sites: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    /// Lower-triangular Cholesky factors L (diagonal entries are exp of the
    /// optimized log-diagonal parameters).
    factors: Vec<Matrix3<f64>>,
}

impl Params {
    fn matrix(&self, i: usize) -> Matrix3<f64> {
        let l = self.factors[i];
        l * l.transpose()
    }

    fn tessellation(&self, dims: [usize; 3]) -> Result<Tessellation> {
        let generators = (0..self.sites.len())
            .map(|i| Generator {
                site: self.sites[i],
                weight: self.weights[i],
                matrix: self.matrix(i),
            })
            .collect();
        Tessellation::new(self.kind, dims, generators)
    }
}

/// All power distances from `x` to the generators of `tess`.
pub fn distance_vector(x: &Vector3<f64>, tess: &Tessellation) -> Vec<f64> {
    tess.generators
        .iter()
        .map(|g| {
            let d = x - g.site;
            (d.transpose() * g.matrix * d)[0] - g.weight
        })
        .collect()
}

/// Softmax of `-D/tau` with max-subtraction; components sum to one.
pub fn soft_assignment(x: &Vector3<f64>, tess: &Tessellation, tau: f64) -> Vec<f64> {
    assert!(tau > 0.0, "temperature must be positive");
    let d = distance_vector(x, tess);
    softmax_neg(&d, tau)
}

fn softmax_neg(d: &[f64], tau: f64) -> Vec<f64> {
    let s: Vec<f64> = d.iter().map(|&v| -v / tau).collect();
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = s.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

fn voxel_center(idx: usize, dims: [usize; 3]) -> Vector3<f64> {
    let [nx, ny, _] = dims;
    Vector3::new(
        (idx % nx) as f64,
        ((idx / nx) % ny) as f64,
        (idx / (nx * ny)) as f64,
    )
}

/// Relaxed fit quality: mean over the voxel subset of the per-voxel
/// log-likelihood `Σ_i [y_i log p_i + (1-y_i) log(1-p_i)]` with clamped
/// probabilities. Always <= 0; 0 is the saturated perfect fit.
pub fn objective_soft(
    map: &GrainMap,
    tess: &Tessellation,
    tau: f64,
    subset: &[usize],
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::Data("empty voxel subset".into()));
    }
    let dims = map.dims();
    let labels = map.labels();
    let total: f64 = subset
        .par_iter()
        .map(|&idx| {
            let p = soft_assignment(&voxel_center(idx, dims), tess, tau);
            let truth = labels[idx] as usize;
            let mut ll = 0.0;
            for (i, &pi) in p.iter().enumerate() {
                let pc = pi.clamp(P_CLAMP, 1.0 - P_CLAMP);
                ll += if i + 1 == truth { pc.ln() } else { (1.0 - pc).ln() };
            }
            ll
        })
        .sum();
    Ok(total / subset.len() as f64)
}

/// Gradient of [`objective_soft`] with respect to the free parameters of the
/// given kind (sites; plus weights except for Voronoi; plus Cholesky factors
/// for the GBPD kinds, diagonal entries differentiated in log space).
#[derive(Debug, Clone)]
pub struct SoftGradient {
    pub sites: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
    /// Per generator: gradient w.r.t. the factor parameters, stored in the
    /// matching triangle (diagonal = d/d log L_jj).
    pub factors: Vec<Matrix3<f64>>,
}

impl SoftGradient {
    fn zeros(n: usize) -> Self {
        SoftGradient {
            sites: vec![Vector3::zeros(); n],
            weights: vec![0.0; n],
            factors: vec![Matrix3::zeros(); n],
        }
    }

    fn add(&mut self, other: &SoftGradient) {
        for i in 0..self.sites.len() {
            self.sites[i] += other.sites[i];
            self.weights[i] += other.weights[i];
            self.factors[i] += other.factors[i];
        }
    }

    fn scale(&mut self, s: f64) {
        for i in 0..self.sites.len() {
            self.sites[i] *= s;
            self.weights[i] *= s;
            self.factors[i] *= s;
        }
    }
}

fn gradient_batch(params: &Params, map: &GrainMap, tau: f64, subset: &[usize]) -> SoftGradient {
    let n = params.sites.len();
    let dims = map.dims();
    let labels = map.labels();
    let mats: Vec<Matrix3<f64>> = (0..n).map(|i| params.matrix(i)).collect();
    // Deterministic parallel reduction: fixed chunks, summed in order.
    let chunks: Vec<SoftGradient> = subset
        .par_chunks(512)
        .map(|chunk| {
            let mut g = SoftGradient::zeros(n);
            for &idx in chunk {
                let x = voxel_center(idx, dims);
                let d: Vec<f64> = (0..n)
                    .map(|i| {
                        let dx = x - params.sites[i];
                        (dx.transpose() * mats[i] * dx)[0] - params.weights[i]
                    })
                    .collect();
                let p = softmax_neg(&d, tau);
                let truth = labels[idx] as usize;
                // dL/dp, zero where the clamp is active
                let gp: Vec<f64> = (0..n)
                    .map(|i| {
                        if p[i] < P_CLAMP || p[i] > 1.0 - P_CLAMP {
                            0.0
                        } else if i + 1 == truth {
                            1.0 / p[i]
                        } else {
                            -1.0 / (1.0 - p[i])
                        }
                    })
                    .collect();
                let dot: f64 = (0..n).map(|i| gp[i] * p[i]).sum();
                for k in 0..n {
                    // dL/dD_k through the softmax
                    let dld = -(p[k] * (gp[k] - dot)) / tau;
                    if dld == 0.0 {
                        continue;
                    }
                    let dx = x - params.sites[k];
                    g.sites[k] += dld * (-2.0 * (mats[k] * dx));
                    g.weights[k] += -dld;
                    // dD/dM = dx dxᵀ; chain to L: (G + Gᵀ) L = 2 G L here
                    let gm = dld * (dx * dx.transpose());
                    let gl = 2.0 * gm * params.factors[k];
                    g.factors[k] += gl;
                }
            }
            g
        })
        .collect();
    let mut total = SoftGradient::zeros(n);
    for c in &chunks {
        total.add(c);
    }
    total.scale(1.0 / subset.len() as f64);
    // Project onto the free parameters of the model kind.
    for k in 0..n {
        match params.kind {
            ModelKind::Voronoi => {
                total.weights[k] = 0.0;
                total.factors[k] = Matrix3::zeros();
            }
            ModelKind::Laguerre => {
                total.factors[k] = Matrix3::zeros();
            }
            ModelKind::DiagonalGbpd => {
                let f = total.factors[k];
                total.factors[k] = Matrix3::from_diagonal(&Vector3::new(f.m11, f.m22, f.m33));
            }
            ModelKind::Gbpd => {
                total.factors[k].m12 = 0.0;
                total.factors[k].m13 = 0.0;
                total.factors[k].m23 = 0.0;
            }
        }
        // log-diagonal chain rule: d/d log L_jj = L_jj * d/d L_jj
        let l = &params.factors[k];
        let f = &mut total.factors[k];
        f.m11 *= l.m11;
        f.m22 *= l.m22;
        f.m33 *= l.m33;
    }
    total
}

/// Public gradient entry point operating on a tessellation (factors are the
/// Cholesky factors of its matrices).
pub fn gradient_soft(
    map: &GrainMap,
    tess: &Tessellation,
    tau: f64,
    subset: &[usize],
) -> Result<SoftGradient> {
    if subset.is_empty() {
        return Err(Error::Data("empty voxel subset".into()));
    }
    let params = params_from_tessellation(tess)?;
    Ok(gradient_batch(&params, map, tau, subset))
}

fn params_from_tessellation(tess: &Tessellation) -> Result<Params> {
    let mut factors = Vec::with_capacity(tess.generators.len());
    for g in &tess.generators {
        let chol = g
            .matrix
            .cholesky()
            .ok_or_else(|| Error::Numerical("generator norm is not positive definite".into()))?;
        factors.push(chol.l());
    }
    Ok(Params {
        kind: tess.kind,
        sites: tess.generators.iter().map(|g| g.site).collect(),
        weights: tess.generators.iter().map(|g| g.weight).collect(),
        factors,
    })
}

/// Default temperature: squared mean volume-equivalent grain diameter.
pub fn default_tau(map: &GrainMap) -> f64 {
    let n = map.n_grains();
    let mut counts = vec![0usize; n + 1];
    for &l in map.labels() {
        counts[l as usize] += 1;
    }
    let mean_d =
        counts[1..].iter().map(|&c| phi_d_from_volume(c as f64)).sum::<f64>() / n as f64;
    mean_d * mean_d
}

#[derive(Debug, Clone)]
pub struct GdFit {
    pub tessellation: Tessellation,
    /// Full-data objective after initialization and after each epoch.
    pub trace: Vec<f64>,
    pub tau: f64,
    pub notes: Vec<String>,
}

/// Minibatch stochastic gradient ascent on [`objective_soft`], initialized
/// from Hq (H0 for Voronoi). Returns the state with the best full-data
/// objective seen at any epoch boundary.
pub fn fit_gd(map: &GrainMap, kind: ModelKind, config: &GdConfig) -> Result<GdFit> {
    let (init, mut notes) = match kind {
        ModelKind::Voronoi => heuristics::fit_h0(map, kind)?,
        _ => heuristics::fit_hq(map, kind)?,
    };
    let tau = match config.tau {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(Error::Data(format!("temperature {t} must be positive"))),
        None => default_tau(map),
    };
    let mut params = params_from_tessellation(&init)?;
    let foreground: Vec<usize> =
        (0..map.labels().len()).filter(|&i| map.labels()[i] > 0).collect();

    let mut best = params.clone();
    let mut best_obj = objective_soft(map, &params.tessellation(map.dims())?, tau, &foreground)?;
    let mut trace = vec![best_obj];
    let mut order = foreground.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lr_w = config.lr_weights * tau;
    for _ in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.minibatch) {
            let g = gradient_batch(&params, map, tau, batch);
            for k in 0..params.sites.len() {
                params.sites[k] += config.lr_sites * g.sites[k];
                params.weights[k] += lr_w * g.weights[k];
                let gl = g.factors[k];
                let l = &mut params.factors[k];
                l.m11 *= (config.lr_factors * gl.m11).exp();
                l.m22 *= (config.lr_factors * gl.m22).exp();
                l.m33 *= (config.lr_factors * gl.m33).exp();
                l.m21 += config.lr_factors * gl.m21;
                l.m31 += config.lr_factors * gl.m31;
                l.m32 += config.lr_factors * gl.m32;
            }
        }
        let obj = objective_soft(map, &params.tessellation(map.dims())?, tau, &foreground)?;
        trace.push(obj);
        if obj > best_obj {
            best_obj = obj;
            best = params.clone();
        }
    }
    if (trace.last().unwrap() - best_obj).abs() > 0.0 {
        notes.push("returned an earlier epoch with a better full-data objective".into());
    }
    Ok(GdFit { tessellation: best.tessellation(map.dims())?, trace, tau, notes })
}
