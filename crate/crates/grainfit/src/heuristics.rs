//! Optimization-free generator construction: the H0 and Hq heuristics.
//!
//! Both place sites at grain barycenters. H0 sets all weights to zero; Hq
//! sets `w_i = (3|C_i| / (4π sqrt(det B_i)))^{2/3}` with `B_i = I` for
//! Laguerre and `B_i = Σ(C_i)` (the sample covariance) for GBPD-type models.
//! GBPD matrices come from PCA: `M_i = U_i Λ_i^{-1} U_i^T` with floored
//! eigenvalues.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::diagram::{floor_spd, Generator, ModelKind, Tessellation, LAMBDA_MIN};
use crate::error::{Error, Result};
use crate::grid::GrainMap;

/// The Hq weight formula.
pub fn hq_weight(volume: f64, det_b: f64) -> f64 {
    (3.0 * volume / (4.0 * PI * det_b.sqrt())).powf(2.0 / 3.0)
}

/// PCA matrix `M = U Λ^{-1} U^T` of a covariance matrix with floored
/// eigenvalues. Returns the matrix and whether flooring kicked in.
pub fn pca_matrix(cov: &Matrix3<f64>) -> Result<(Matrix3<f64>, bool)> {
    let (floored_cov, floored) = floor_spd(cov, LAMBDA_MIN)?;
    let eig = floored_cov.symmetric_eigen();
    let inv = Matrix3::from_diagonal(&Vector3::new(
        1.0 / eig.eigenvalues[0],
        1.0 / eig.eigenvalues[1],
        1.0 / eig.eigenvalues[2],
    ));
    Ok((eig.eigenvectors * inv * eig.eigenvectors.transpose(), floored))
}

pub(crate) fn model_matrix(kind: ModelKind, cov: &Matrix3<f64>) -> Result<(Matrix3<f64>, bool)> {
    match kind {
        ModelKind::Voronoi | ModelKind::Laguerre => Ok((Matrix3::identity(), false)),
        ModelKind::Gbpd => pca_matrix(cov),
        ModelKind::DiagonalGbpd => {
            // Diagonal truncation of the full PCA matrix, re-floored.
            let (m, fl) = pca_matrix(cov)?;
            let d = Vector3::new(
                m.m11.max(LAMBDA_MIN),
                m.m22.max(LAMBDA_MIN),
                m.m33.max(LAMBDA_MIN),
            );
            Ok((Matrix3::from_diagonal(&d), fl))
        }
    }
}

/// H0: sites at barycenters, all weights zero, PCA matrices for GBPD kinds.
/// For Voronoi and Laguerre the constructions coincide (M = I, w = 0).
pub fn fit_h0(map: &GrainMap, kind: ModelKind) -> Result<(Tessellation, Vec<String>)> {
    let mut generators = Vec::with_capacity(map.n_grains());
    let mut notes = Vec::new();
    for i in 1..=map.n_grains() {
        let mo = map.moments(i)?;
        let (matrix, floored) = model_matrix(kind, &mo.covariance)?;
        if floored {
            notes.push(format!("grain {i}: degenerate covariance, eigenvalues floored"));
        }
        generators.push(Generator { site: mo.barycenter, weight: 0.0, matrix });
    }
    Ok((Tessellation::new(kind, map.dims(), generators)?, notes))
}

/// Hq: sites at barycenters, matrices as in H0, weights from the volume
/// formula. Not defined for Voronoi (weights would have to vanish).
pub fn fit_hq(map: &GrainMap, kind: ModelKind) -> Result<(Tessellation, Vec<String>)> {
    if kind == ModelKind::Voronoi {
        return Err(Error::Capability("Hq does not produce Voronoi tessellations".into()));
    }
    let mut generators = Vec::with_capacity(map.n_grains());
    let mut notes = Vec::new();
    for i in 1..=map.n_grains() {
        let mo = map.moments(i)?;
        let (matrix, floored) = model_matrix(kind, &mo.covariance)?;
        if floored {
            notes.push(format!("grain {i}: degenerate covariance, eigenvalues floored"));
        }
        let det_b = match kind {
            ModelKind::Laguerre => 1.0,
            _ => {
                let (b, _) = floor_spd(&mo.covariance, LAMBDA_MIN)?;
                let d = b.determinant();
                if d <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "grain {i}: non-positive det(B) = {d} despite flooring"
                    )));
                }
                d
            }
        };
        let weight = hq_weight(mo.volume as f64, det_b);
        generators.push(Generator { site: mo.barycenter, weight, matrix });
    }
    Ok((Tessellation::new(kind, map.dims(), generators)?, notes))
}
