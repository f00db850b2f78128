//! Derivative-free Laguerre/Voronoi fitting in the style of Neper's
//! grain-by-grain reconstruction: minimize a normalized boundary-distance
//! objective with a Subplex-style optimizer (restricted Nelder–Mead cycling
//! over per-generator parameter blocks).

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::diagram::{assign, Generator, LabelField, ModelKind, Tessellation};
use crate::edt::edt_squared;
use crate::error::{Error, Result};
use crate::grid::GrainMap;
use crate::heuristics;
use crate::metrics::phi_d_from_volume;

#[derive(Debug, Clone)]
pub struct NeperConfig {
    /// Stop when the best objective improves by less than this over the last
    /// `stop_window_mult * n` evaluations.
    pub stop_abs: f64,
    pub stop_window_mult: usize,
    /// Initial simplex displacement for site coordinates (voxels).
    pub step_sites: f64,
    /// Initial simplex displacement for weights, as a multiple of the mean
    /// initial |weight| + 1.
    pub step_weights: f64,
    pub seed: u64,
}

impl Default for NeperConfig {
    fn default() -> Self {
        NeperConfig {
            stop_abs: 1e-3,
            stop_window_mult: 40,
            step_sites: 1.0,
            step_weights: 0.25,
            seed: 0,
        }
    }
}

/// Precomputed ground-truth quantities shared by every objective evaluation.
struct GtBoundary {
    /// Per grain: linear indices of its 6-connected boundary voxels.
    boundary: Vec<Vec<usize>>,
    /// 2 / (mean φ_d · Σ_i |∂C_i|), the normalization constant of O.
    norm: f64,
}

fn gt_boundary(map: &GrainMap) -> GtBoundary {
    let [nx, ny, _] = map.dims();
    let n = map.n_grains();
    let boundary: Vec<Vec<usize>> = (1..=n)
        .into_par_iter()
        .map(|i| {
            map.boundary_voxels_6(i)
                .into_iter()
                .map(|[x, y, z]| x + nx * (y + ny * z))
                .collect()
        })
        .collect();
    let total_boundary: usize = boundary.iter().map(Vec::len).sum();
    let mean_d = (1..=n)
        .map(|i| phi_d_from_volume(map.moments(i).unwrap().volume as f64))
        .sum::<f64>()
        / n as f64;
    GtBoundary { norm: 2.0 / (mean_d * total_boundary as f64), boundary }
}

fn cell_delta_precomputed(
    map: &GrainMap,
    tess: &Tessellation,
    field: &LabelField,
    gt: &GtBoundary,
) -> Vec<f64> {
    let dims = map.dims();
    let [nx, ny, _] = dims;
    (0..map.n_grains())
        .into_par_iter()
        .map(|i0| {
            let label = (i0 + 1) as u32;
            if !field.labels.iter().any(|&l| l == label) {
                // vanished cell: penalize by distance from each GT boundary
                // voxel to the generator site
                let s = tess.generators[i0].site;
                return gt.boundary[i0]
                    .iter()
                    .map(|&idx| {
                        let p = Vector3::new(
                            (idx % nx) as f64,
                            ((idx / nx) % ny) as f64,
                            (idx / (nx * ny)) as f64,
                        );
                        (p - s).norm_squared()
                    })
                    .sum::<f64>()
                    .sqrt();
            }
            let d2 = edt_squared(dims, |idx| field.labels[idx] == label);
            gt.boundary[i0].iter().map(|&idx| d2[idx]).sum::<f64>().sqrt()
        })
        .collect()
}

/// δ_i(φ): sqrt of the summed squared distances from the boundary voxels of
/// ground-truth cell i to the nearest voxel assigned to cell i in `field`.
/// If cell i is empty in `field`, distances are taken to the generator site.
pub fn cell_delta(map: &GrainMap, tess: &Tessellation, i: usize, field: &LabelField) -> f64 {
    let gt = gt_boundary(map);
    cell_delta_precomputed(map, tess, field, &gt)[i - 1]
}

/// Normalized boundary-distance objective
/// `O(φ) = 2 / (d̄ Σ|∂C_i|) · sqrt(Σ δ_i²)`.
pub fn objective_neper(map: &GrainMap, tess: &Tessellation) -> f64 {
    let gt = gt_boundary(map);
    let field = assign(tess, map.dims());
    objective_precomputed(map, tess, &field, &gt)
}

fn objective_precomputed(
    map: &GrainMap,
    tess: &Tessellation,
    field: &LabelField,
    gt: &GtBoundary,
) -> f64 {
    let deltas = cell_delta_precomputed(map, tess, field, gt);
    gt.norm * deltas.iter().map(|d| d * d).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct NeperFit {
    pub tessellation: Tessellation,
    /// Best objective so far, recorded at every evaluation (index 0 = init).
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub notes: Vec<String>,
}

struct Objective<'a> {
    map: &'a GrainMap,
    kind: ModelKind,
    gt: GtBoundary,
    dims: [usize; 3],
    best: f64,
    best_params: Vec<f64>,
    trace: Vec<f64>,
}

impl Objective<'_> {
    fn params_to_tessellation(&self, params: &[f64]) -> Tessellation {
        let per = if self.kind == ModelKind::Voronoi { 3 } else { 4 };
        let n = params.len() / per;
        let generators = (0..n)
            .map(|i| {
                let p = &params[per * i..per * (i + 1)];
                Generator::isotropic(
                    Vector3::new(p[0], p[1], p[2]),
                    if per == 4 { p[3] } else { 0.0 },
                )
            })
            .collect();
        Tessellation::new(self.kind, self.dims, generators).unwrap()
    }

    fn eval(&mut self, params: &[f64]) -> f64 {
        let tess = self.params_to_tessellation(params);
        let field = assign(&tess, self.dims);
        let o = objective_precomputed(self.map, &tess, &field, &self.gt);
        if o < self.best {
            self.best = o;
            self.best_params = params.to_vec();
        }
        self.trace.push(self.best);
        o
    }

    fn stop(&self, window: usize, threshold: f64) -> bool {
        let t = &self.trace;
        t.len() > window && t[t.len() - 1 - window] - t[t.len() - 1] < threshold
    }
}

/// One restricted Nelder–Mead pass over a parameter block `range` of the full
/// vector, holding everything else fixed. Mutates `params` to the block's
/// best point. Returns early if the caller's stopping rule fires.
#[allow(clippy::needless_range_loop)]
fn nelder_mead_block(
    obj: &mut Objective,
    params: &mut [f64],
    range: std::ops::Range<usize>,
    steps: &[f64],
    max_iters: usize,
    window: usize,
    threshold: f64,
) {
    let d = range.len();
    let full = |block: &[f64], params: &[f64]| {
        let mut p = params.to_vec();
        p[range.clone()].copy_from_slice(block);
        p
    };
    let x0: Vec<f64> = params[range.clone()].to_vec();
    // initial simplex: x0 plus one displaced vertex per coordinate
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.clone(), obj.eval(&full(&x0, params))));
    for j in 0..d {
        let mut v = x0.clone();
        v[j] += steps[j];
        let f = obj.eval(&full(&v, params));
        simplex.push((v, f));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..max_iters {
        if obj.stop(window, threshold) {
            break;
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|(v, _)| v[j]).sum::<f64>() / d as f64)
            .collect();
        let worst = simplex[d].0.clone();
        let reflect: Vec<f64> =
            (0..d).map(|j| centroid[j] + alpha * (centroid[j] - worst[j])).collect();
        let fr = obj.eval(&full(&reflect, params));
        if fr < simplex[0].1 {
            let expand: Vec<f64> =
                (0..d).map(|j| centroid[j] + gamma * (reflect[j] - centroid[j])).collect();
            let fe = obj.eval(&full(&expand, params));
            simplex[d] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (reflect, fr);
        } else {
            let contract: Vec<f64> =
                (0..d).map(|j| centroid[j] + rho * (worst[j] - centroid[j])).collect();
            let fc = obj.eval(&full(&contract, params));
            if fc < simplex[d].1 {
                simplex[d] = (contract, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for k in 1..=d {
                    let v: Vec<f64> = (0..d)
                        .map(|j| best[j] + sigma * (simplex[k].0[j] - best[j]))
                        .collect();
                    let f = obj.eval(&full(&v, params));
                    simplex[k] = (v, f);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    params[range].copy_from_slice(&simplex[0].0);
}

/// Subplex-style fit: cycles restricted Nelder–Mead over per-generator
/// blocks of the 4n (Laguerre) or 3n (Voronoi) parameter vector, starting
/// from Hq (H0 for Voronoi), until the best objective stagnates.
pub fn fit_neper(map: &GrainMap, kind: ModelKind, config: &NeperConfig) -> Result<NeperFit> {
    if !matches!(kind, ModelKind::Voronoi | ModelKind::Laguerre) {
        return Err(Error::Capability(format!(
            "derivative-free fitting supports voronoi and laguerre only, not {kind}"
        )));
    }
    if config.stop_abs <= 0.0 {
        return Err(Error::Data("stopping threshold must be positive".into()));
    }
    let (init, notes) = match kind {
        ModelKind::Voronoi => heuristics::fit_h0(map, kind)?,
        _ => heuristics::fit_hq(map, kind)?,
    };
    let n = map.n_grains();
    let per = if kind == ModelKind::Voronoi { 3 } else { 4 };
    let mut params = Vec::with_capacity(per * n);
    for g in &init.generators {
        params.extend_from_slice(&[g.site.x, g.site.y, g.site.z]);
        if per == 4 {
            params.push(g.weight);
        }
    }
    let mean_abs_w =
        init.generators.iter().map(|g| g.weight.abs()).sum::<f64>() / n as f64 + 1.0;
    let mut steps = vec![config.step_sites; per];
    if per == 4 {
        steps[3] = config.step_weights * mean_abs_w;
    }
    let window = config.stop_window_mult * n;
    let mut obj = Objective {
        map,
        kind,
        gt: gt_boundary(map),
        dims: map.dims(),
        best: f64::INFINITY,
        best_params: params.clone(),
        trace: Vec::new(),
    };
    obj.eval(&params); // record the initial objective as trace[0]
    'outer: loop {
        for i in 0..n {
            nelder_mead_block(
                &mut obj,
                &mut params,
                per * i..per * (i + 1),
                &steps,
                20 * per,
                window,
                config.stop_abs,
            );
            if obj.stop(window, config.stop_abs) {
                break 'outer;
            }
        }
    }
    let tessellation = obj.params_to_tessellation(&obj.best_params);
    Ok(NeperFit { tessellation, evaluations: obj.trace.len(), trace: obj.trace, notes })
}
