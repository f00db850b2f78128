//! Performance measures comparing a discretized tessellation against the
//! ground-truth grain map: fraction of correctly assigned voxels, missing
//! cells, normalized descriptor errors (volume-equivalent diameter, surface
//! area, elongation, flatness) and neighborhood intersection-over-union.

use std::collections::HashSet;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::diagram::{empty_cells, LabelField, LAMBDA_MIN};
use crate::error::{Error, Result};
use crate::grid::{GrainMap, N6};

/// Shape and size descriptors of one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellDescriptors {
    /// Volume-equivalent diameter `(6|C|/π)^{1/3}`.
    pub phi_d: f64,
    /// Surface area estimated by exposed 6-neighbor face counting (face area 1).
    pub phi_a: f64,
    /// Ratio of second longest to longest half-axis of the covariance ellipsoid.
    pub phi_elo: f64,
    /// Ratio of shortest to second longest half-axis.
    pub phi_flat: f64,
}

pub fn phi_d_from_volume(volume: f64) -> f64 {
    (6.0 * volume / std::f64::consts::PI).cbrt()
}

/// Descriptors of a nonempty voxel set within a window of the given dims.
/// Window-border faces count as exposed.
pub fn descriptors(dims: [usize; 3], voxels: &[[usize; 3]]) -> CellDescriptors {
    assert!(!voxels.is_empty(), "descriptors of an empty cell");
    let count = voxels.len();
    let set: HashSet<[usize; 3]> = voxels.iter().copied().collect();
    let mut faces = 0usize;
    for &[x, y, z] in voxels {
        for d in N6 {
            let px = x as i64 + d[0];
            let py = y as i64 + d[1];
            let pz = z as i64 + d[2];
            let inside = px >= 0
                && py >= 0
                && pz >= 0
                && (px as usize) < dims[0]
                && (py as usize) < dims[1]
                && (pz as usize) < dims[2]
                && set.contains(&[px as usize, py as usize, pz as usize]);
            if !inside {
                faces += 1;
            }
        }
    }
    let mut mean = Vector3::zeros();
    for &[x, y, z] in voxels {
        mean += Vector3::new(x as f64, y as f64, z as f64);
    }
    mean /= count as f64;
    let mut cov = Matrix3::zeros();
    if count > 1 {
        for &[x, y, z] in voxels {
            let d = Vector3::new(x as f64, y as f64, z as f64) - mean;
            cov += d * d.transpose();
        }
        cov /= (count - 1) as f64;
    }
    let eig = cov.symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(LAMBDA_MIN)).collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let (a1, a2, a3) = (vals[0].sqrt(), vals[1].sqrt(), vals[2].sqrt());
    CellDescriptors {
        phi_d: phi_d_from_volume(count as f64),
        phi_a: faces as f64,
        phi_elo: a2 / a1,
        phi_flat: a3 / a2,
    }
}

/// Which descriptor [`f_descriptor`] compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Descriptor {
    Diameter,
    SurfaceArea,
    Elongation,
    Flatness,
}

impl Descriptor {
    fn pick(&self, d: &CellDescriptors) -> f64 {
        match self {
            Descriptor::Diameter => d.phi_d,
            Descriptor::SurfaceArea => d.phi_a,
            Descriptor::Elongation => d.phi_elo,
            Descriptor::Flatness => d.phi_flat,
        }
    }
}

fn check_dims(map: &GrainMap, field: &LabelField) -> Result<()> {
    if map.dims() != field.dims {
        return Err(Error::Data(format!(
            "dimension mismatch: map {:?} vs field {:?}",
            map.dims(),
            field.dims
        )));
    }
    Ok(())
}

/// Fraction of correctly assigned foreground voxels.
pub fn f_correct(map: &GrainMap, field: &LabelField) -> Result<f64> {
    check_dims(map, field)?;
    let mut fg = 0usize;
    let mut hit = 0usize;
    for (&g, &f) in map.labels().iter().zip(&field.labels) {
        if g > 0 {
            fg += 1;
            if g == f {
                hit += 1;
            }
        }
    }
    if fg == 0 {
        return Err(Error::Data("grain map has no foreground voxels".into()));
    }
    Ok(hit as f64 / fg as f64)
}

/// Relative frequency of missing (empty) cells.
pub fn f_missing(field: &LabelField, n: usize) -> f64 {
    empty_cells(field, n).len() as f64 / n as f64
}

fn cell_voxel_lists(dims: [usize; 3], labels: &[u32], n: usize) -> Vec<Vec<[usize; 3]>> {
    let mut cells: Vec<Vec<[usize; 3]>> = vec![Vec::new(); n + 1];
    let [nx, ny, _] = dims;
    for (idx, &l) in labels.iter().enumerate() {
        if l > 0 && (l as usize) <= n {
            let x = idx % nx;
            let y = (idx / nx) % ny;
            let z = idx / (nx * ny);
            cells[l as usize].push([x, y, z]);
        }
    }
    cells
}

/// Mean normalized error of descriptor `which`, restricted to non-missing
/// cells; the normalizer is the mean of the descriptor over all GT grains.
pub fn f_descriptor(map: &GrainMap, field: &LabelField, which: Descriptor) -> Result<f64> {
    check_dims(map, field)?;
    let n = map.n_grains();
    let gt_cells = cell_voxel_lists(map.dims(), map.labels(), n);
    let fit_cells = cell_voxel_lists(field.dims, &field.labels, n);
    let gt_desc: Vec<f64> =
        (1..=n).map(|i| which.pick(&descriptors(map.dims(), &gt_cells[i]))).collect();
    let mean = gt_desc.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Err(Error::Numerical("descriptor mean over GT grains is zero".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 1..=n {
        if fit_cells[i].is_empty() {
            continue;
        }
        let fit = which.pick(&descriptors(field.dims, &fit_cells[i]));
        sum += (gt_desc[i - 1] - fit).abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::Data("every cell is missing".into()));
    }
    Ok(sum / (count as f64 * mean))
}

/// Mean intersection-over-union of neighbor index sets over non-missing
/// cells. A pair of empty neighbor sets counts as a perfect match (IoU 1).
pub fn f_iou(map: &GrainMap, field: &LabelField) -> Result<f64> {
    check_dims(map, field)?;
    let n = map.n_grains();
    let gt_sets = map.neighbor_sets();
    let fit_sets = field.neighbor_sets(n);
    let missing = empty_cells(field, n);
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 1..=n {
        if missing.contains(&i) {
            continue;
        }
        let inter = gt_sets[i].intersection(&fit_sets[i]).count();
        let union = gt_sets[i].union(&fit_sets[i]).count();
        sum += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        count += 1;
    }
    if count == 0 {
        return Err(Error::Data("every cell is missing".into()));
    }
    Ok(sum / count as f64)
}

/// All seven measures for one (map, field) pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Measures {
    pub f_c: f64,
    pub f_0: f64,
    pub f_phi_d: f64,
    pub f_phi_a: f64,
    pub f_elo: f64,
    pub f_flat: f64,
    pub f_iou: f64,
}

pub fn all_measures(map: &GrainMap, field: &LabelField) -> Result<Measures> {
    Ok(Measures {
        f_c: f_correct(map, field)?,
        f_0: f_missing(field, map.n_grains()),
        f_phi_d: f_descriptor(map, field, Descriptor::Diameter)?,
        f_phi_a: f_descriptor(map, field, Descriptor::SurfaceArea)?,
        f_elo: f_descriptor(map, field, Descriptor::Elongation)?,
        f_flat: f_descriptor(map, field, Descriptor::Flatness)?,
        f_iou: f_iou(map, field)?,
    })
}

/// One row per (dataset, method, model) triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub method: String,
    pub model: String,
    #[serde(flatten)]
    pub measures: Measures,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub const COLUMNS: [&'static str; 10] = [
        "dataset", "method", "model", "F_c", "F_0", "F_phi_d", "F_phi_A", "F_elo", "F_flat",
        "F_IoU",
    ];

    pub fn to_csv(&self) -> String {
        let mut out = Self::COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let m = &r.measures;
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.dataset, r.method, r.model, m.f_c, m.f_0, m.f_phi_d, m.f_phi_a, m.f_elo,
                m.f_flat, m.f_iou
            ));
        }
        out
    }

    /// Aligned text table in the style of the appendix tables.
    pub fn to_text(&self) -> String {
        let mut cells: Vec<Vec<String>> =
            vec![Self::COLUMNS.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let m = &r.measures;
            cells.push(vec![
                r.dataset.clone(),
                r.method.clone(),
                r.model.clone(),
                format!("{:.3}", m.f_c),
                format!("{:.3}", m.f_0),
                format!("{:.3}", m.f_phi_d),
                format!("{:.3}", m.f_phi_a),
                format!("{:.3}", m.f_elo),
                format!("{:.3}", m.f_flat),
                format!("{:.3}", m.f_iou),
            ]);
        }
        let widths: Vec<usize> = (0..Self::COLUMNS.len())
            .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap())
            .collect();
        let mut out = String::new();
        for (ri, row) in cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                if c > 0 {
                    out.push_str("  ");
                }
                out.push_str(&format!("{:<width$}", cell, width = widths[c]));
            }
            out.push('\n');
            if ri == 0 {
                let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }
}
