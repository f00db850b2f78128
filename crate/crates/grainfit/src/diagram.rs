//! Generator representation, generalized power distances and discretization
//! of tessellations onto the voxel grid.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::neighbor_sets;

/// Eigenvalue floor applied to every SPD matrix in the crate.
pub const LAMBDA_MIN: f64 = 1e-9;

/// Relative asymmetry beyond which an input matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// A single generator `(x, M, w)` of a generalized power diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub site: Vector3<f64>,
    pub weight: f64,
    pub matrix: Matrix3<f64>,
}

impl Generator {
    pub fn isotropic(site: Vector3<f64>, weight: f64) -> Self {
        Generator { site, weight, matrix: Matrix3::identity() }
    }
}

/// Tessellation model class. Selects which generator parameters are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Voronoi,
    Laguerre,
    #[serde(rename = "dgbpd")]
    DiagonalGbpd,
    Gbpd,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Voronoi,
        ModelKind::Laguerre,
        ModelKind::DiagonalGbpd,
        ModelKind::Gbpd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Voronoi => "voronoi",
            ModelKind::Laguerre => "laguerre",
            ModelKind::DiagonalGbpd => "dgbpd",
            ModelKind::Gbpd => "gbpd",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "voronoi" => Ok(ModelKind::Voronoi),
            "laguerre" => Ok(ModelKind::Laguerre),
            "dgbpd" | "d-gbpd" => Ok(ModelKind::DiagonalGbpd),
            "gbpd" => Ok(ModelKind::Gbpd),
            _ => Err(Error::Capability(format!("unknown model kind '{s}'"))),
        }
    }
}

/// A tessellation: `n` generators plus the window it is discretized into.
#[derive(Debug, Clone, PartialEq)]
pub struct Tessellation {
    pub kind: ModelKind,
    pub dims: [usize; 3],
    pub generators: Vec<Generator>,
}

/// Discretized assignment of every voxel to a cell index in `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelField {
    pub dims: [usize; 3],
    pub labels: Vec<u32>,
}

impl LabelField {
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn neighbor_sets(&self, n: usize) -> Vec<BTreeSet<u32>> {
        neighbor_sets(self.dims, &self.labels, n)
    }
}

/// Symmetrizes and eigenvalue-floors a matrix. Returns the repaired SPD
/// matrix and whether any eigenvalue had to be floored. Rejects inputs whose
/// asymmetry exceeds [`SYMMETRY_TOL`] relative to the matrix scale.
pub fn floor_spd(m: &Matrix3<f64>, lambda_min: f64) -> Result<(Matrix3<f64>, bool)> {
    let scale = m.norm().max(1.0);
    if (m - m.transpose()).norm() > SYMMETRY_TOL * scale {
        return Err(Error::Data(format!("matrix is not symmetric: {m:?}")));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut floored = false;
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        if *v < lambda_min {
            *v = lambda_min;
            floored = true;
        }
    }
    let repaired = eig.eigenvectors * Matrix3::from_diagonal(&vals) * eig.eigenvectors.transpose();
    Ok((repaired, floored))
}

impl Tessellation {
    /// Validates the model-kind constraints: Voronoi forces `w = 0, M = I`,
    /// Laguerre forces `M = I`, DiagonalGbpd forces diagonal `M`.
    pub fn new(kind: ModelKind, dims: [usize; 3], generators: Vec<Generator>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::Data("tessellation needs at least one generator".into()));
        }
        for (i, g) in generators.iter().enumerate() {
            let ident = (g.matrix - Matrix3::identity()).norm() < 1e-12;
            match kind {
                ModelKind::Voronoi => {
                    if g.weight != 0.0 || !ident {
                        return Err(Error::Data(format!(
                            "generator {i}: Voronoi requires w = 0 and M = I"
                        )));
                    }
                }
                ModelKind::Laguerre => {
                    if !ident {
                        return Err(Error::Data(format!("generator {i}: Laguerre requires M = I")));
                    }
                }
                ModelKind::DiagonalGbpd => {
                    let off = g.matrix.m12.abs()
                        + g.matrix.m13.abs()
                        + g.matrix.m23.abs()
                        + g.matrix.m21.abs()
                        + g.matrix.m31.abs()
                        + g.matrix.m32.abs();
                    if off > 1e-12 * g.matrix.norm().max(1.0) {
                        return Err(Error::Data(format!(
                            "generator {i}: DiagonalGbpd requires a diagonal matrix"
                        )));
                    }
                }
                ModelKind::Gbpd => {}
            }
        }
        Ok(Tessellation { kind, dims, generators })
    }

    pub fn n(&self) -> usize {
        self.generators.len()
    }
}

/// Generalized power distance `(y-x)^T M (y-x) - w`.
#[inline]
pub fn power_distance(g: &Generator, y: &Vector3<f64>) -> f64 {
    let d = y - g.site;
    (g.matrix * d).dot(&d) - g.weight
}

/// Discretizes the tessellation: every voxel gets the argmin generator index
/// (1-based); exact ties go to the smallest index. No voxel is labeled 0.
pub fn assign(tess: &Tessellation, dims: [usize; 3]) -> LabelField {
    let [nx, ny, nz] = dims;
    let gens = &tess.generators;
    let labels: Vec<u32> = (0..nx * ny * nz)
        .into_par_iter()
        .map(|idx| {
            let x = (idx % nx) as f64;
            let y = ((idx / nx) % ny) as f64;
            let z = (idx / (nx * ny)) as f64;
            let p = Vector3::new(x, y, z);
            let mut best = 0usize;
            let mut best_d = power_distance(&gens[0], &p);
            for (i, g) in gens.iter().enumerate().skip(1) {
                let d = power_distance(g, &p);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            (best + 1) as u32
        })
        .collect();
    LabelField { dims, labels }
}

/// Indices in `1..=n` whose cell is empty in the field.
pub fn empty_cells(field: &LabelField, n: usize) -> BTreeSet<usize> {
    let mut present = vec![false; n + 1];
    for &l in &field.labels {
        if (l as usize) <= n {
            present[l as usize] = true;
        }
    }
    (1..=n).filter(|&i| !present[i]).collect()
}

/// Result of a facet distance query.
#[derive(Debug, Clone, Copy)]
pub struct FacetDistance {
    /// Squared distance from the query point to the facet (or to the
    /// unconstrained bisector plane when the facet is empty).
    pub dist_sq: f64,
    /// True when the facet `C_i ∩ C_j` is empty and the bisector-plane
    /// fallback was used.
    pub fallback: bool,
}

/// Squared distance from `y` to the facet `C_i(φ) ∩ C_j(φ)` of a Voronoi or
/// Laguerre tessellation, solved as a least-distance projection onto the
/// polygon cut out of the bisector plane by the remaining cell constraints.
///
/// If the facet is empty, returns the squared distance to the unconstrained
/// bisector plane and flags the fallback.
pub fn facet_distance_laguerre(
    y: &Vector3<f64>,
    i: usize,
    j: usize,
    tess: &Tessellation,
) -> Result<FacetDistance> {
    if !matches!(tess.kind, ModelKind::Voronoi | ModelKind::Laguerre) {
        return Err(Error::Capability(format!(
            "facet distance requires an affine bisector; kind {} is not supported",
            tess.kind
        )));
    }
    let n = tess.n();
    assert!(i != j && i < n && j < n, "invalid pair ({i},{j}) for n={n}");
    let gi = &tess.generators[i];
    let gj = &tess.generators[j];
    let u = gj.site - gi.site;
    let uu = u.norm_squared();
    if uu < 1e-24 {
        return Err(Error::Numerical(format!(
            "coincident sites for generators {i} and {j}; bisector undefined"
        )));
    }
    // Bisector plane pow_i(z) = pow_j(z):  2 u . z = c.
    let c = gi.weight - gj.weight + gj.site.norm_squared() - gi.site.norm_squared();
    let z0 = u * (c / (2.0 * uu));
    // Orthonormal in-plane basis (v1, v2).
    let un = u / uu.sqrt();
    let mut seed = Vector3::x();
    if un.x.abs() > 0.9 {
        seed = Vector3::y();
    }
    let v1 = (seed - un * un.dot(&seed)).normalize();
    let v2 = un.cross(&v1);

    // Out-of-plane part of the distance is fixed.
    let w = y - z0;
    let out_of_plane = un.dot(&w);
    let base_sq = out_of_plane * out_of_plane;
    let ty = Vector2::new(v1.dot(&w), v2.dot(&w));

    // Remaining cell constraints pow_i(z) <= pow_l(z), expressed in the plane:
    // a . t <= b. (pow_j <= pow_l is implied on the bisector.)
    let mut cons: Vec<(Vector2<f64>, f64)> = Vec::with_capacity(n.saturating_sub(2));
    for (l, gl) in tess.generators.iter().enumerate() {
        if l == i || l == j {
            continue;
        }
        let al3 = (gl.site - gi.site) * 2.0;
        let bl = gi.weight - gl.weight + gl.site.norm_squared() - gi.site.norm_squared();
        let a = Vector2::new(v1.dot(&al3), v2.dot(&al3));
        let b = bl - al3.dot(&z0);
        cons.push((a, b));
    }

    let scale = 1.0 + ty.norm() + cons.iter().map(|(a, b)| a.norm() + b.abs()).fold(0.0, f64::max);
    let tol = 1e-9 * scale;
    let feasible = |t: &Vector2<f64>| cons.iter().all(|(a, b)| a.dot(t) <= b + tol);

    // The projection onto the polygon has 0, 1 or 2 active constraints, so it
    // is among: the query point, its projection onto each constraint line, or
    // a vertex of two lines. Take the closest feasible candidate.
    let mut candidates: Vec<Vector2<f64>> = vec![ty];
    if !feasible(&ty) {
        for (a, b) in &cons {
            let aa = a.norm_squared();
            if aa < 1e-24 {
                continue;
            }
            candidates.push(ty + a * ((b - a.dot(&ty)) / aa));
        }
        for k in 0..cons.len() {
            for l in k + 1..cons.len() {
                let (a1, b1) = cons[k];
                let (a2, b2) = cons[l];
                let det = a1.x * a2.y - a1.y * a2.x;
                if det.abs() < 1e-12 * (a1.norm() * a2.norm()).max(1e-24) {
                    continue;
                }
                candidates.push(Vector2::new(
                    (b1 * a2.y - b2 * a1.y) / det,
                    (a1.x * b2 - a2.x * b1) / det,
                ));
            }
        }
    }
    let best = candidates
        .into_iter()
        .filter(|t| feasible(t))
        .map(|t| (t - ty).norm_squared())
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |b| b.min(d))));

    match best {
        Some(in_plane_sq) => Ok(FacetDistance { dist_sq: base_sq + in_plane_sq, fallback: false }),
        None => Ok(FacetDistance { dist_sq: base_sq, fallback: true }),
    }
}

// ---------------------------------------------------------------------------
// JSON representation

#[derive(Serialize, Deserialize)]
struct GeneratorJson {
    x: [f64; 3],
    w: f64,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    m: Option<[[f64; 3]; 3]>,
    #[serde(rename = "M_diag", skip_serializing_if = "Option::is_none")]
    m_diag: Option<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct TessellationJson {
    kind: ModelKind,
    generators: Vec<GeneratorJson>,
    dims: [usize; 3],
}

impl Serialize for Tessellation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let generators = self
            .generators
            .iter()
            .map(|g| {
                let (m, m_diag) = match self.kind {
                    ModelKind::Voronoi | ModelKind::Laguerre => (None, None),
                    ModelKind::DiagonalGbpd => {
                        (None, Some([g.matrix.m11, g.matrix.m22, g.matrix.m33]))
                    }
                    ModelKind::Gbpd => {
                        let mut rows = [[0.0; 3]; 3];
                        for r in 0..3 {
                            for c in 0..3 {
                                rows[r][c] = g.matrix[(r, c)];
                            }
                        }
                        (Some(rows), None)
                    }
                };
                GeneratorJson { x: [g.site.x, g.site.y, g.site.z], w: g.weight, m, m_diag }
            })
            .collect();
        TessellationJson { kind: self.kind, generators, dims: self.dims }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tessellation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let raw = TessellationJson::deserialize(d)?;
        let generators = raw
            .generators
            .iter()
            .map(|g| {
                let matrix = if let Some(rows) = g.m {
                    let m = Matrix3::from_fn(|r, c| rows[r][c]);
                    floor_spd(&m, LAMBDA_MIN).map(|(m, _)| m)
                } else if let Some(diag) = g.m_diag {
                    Ok(Matrix3::from_diagonal(&Vector3::new(
                        diag[0].max(LAMBDA_MIN),
                        diag[1].max(LAMBDA_MIN),
                        diag[2].max(LAMBDA_MIN),
                    )))
                } else {
                    Ok(Matrix3::identity())
                }?;
                Ok(Generator { site: Vector3::new(g.x[0], g.x[1], g.x[2]), weight: g.w, matrix })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        Tessellation::new(raw.kind, raw.dims, generators).map_err(D::Error::custom)
    }
}
