//! Voxel grain-map representation, I/O, adjacency, boundaries and per-grain
//! moments.
//!
//! Voxel centers sit at integer lattice coordinates and all distances are in
//! voxel units; the physical `voxel_size` is carried as metadata only.
//! Neighborhoods are clipped at the window boundary, never wrapped.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offsets of the 26-neighborhood (face, edge and vertex neighbors).
pub const N26: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut k = 0;
    let mut dz = -1i64;
    while dz <= 1 {
        let mut dy = -1i64;
        while dy <= 1 {
            let mut dx = -1i64;
            while dx <= 1 {
                if dx != 0 || dy != 0 || dz != 0 {
                    out[k] = [dx, dy, dz];
                    k += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

/// Offsets of the 6-neighborhood (face neighbors).
pub const N6: [[i64; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// A voxel grain map: labels in `{0,..,n}` on a `nx*ny*nz` grid, stored
/// x-fastest. Label 0 is background/boundary and never a grain.
#[derive(Debug, Clone)]
pub struct GrainMap {
    dims: [usize; 3],
    voxel_size: f64,
    labels: Vec<u32>,
    n_grains: usize,
}

/// Volume, barycenter and sample covariance of one grain.
#[derive(Debug, Clone)]
pub struct GrainMoments {
    pub index: usize,
    pub volume: usize,
    pub barycenter: Vector3<f64>,
    pub covariance: Matrix3<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dims: [usize; 3],
    voxel_size: f64,
    n_grains: usize,
}

impl GrainMap {
    /// Builds a map and checks all invariants: label range, dims/length
    /// consistency and grain cardinality `> 1` for every grain index.
    pub fn new(dims: [usize; 3], voxel_size: f64, labels: Vec<u32>, n_grains: usize) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Data(format!("dims must be positive, got {dims:?}")));
        }
        if !(voxel_size > 0.0) {
            return Err(Error::Data(format!("voxel_size must be positive, got {voxel_size}")));
        }
        let m = dims[0] * dims[1] * dims[2];
        if labels.len() != m {
            return Err(Error::Data(format!(
                "dims product {m} does not match label count {}",
                labels.len()
            )));
        }
        let mut counts = vec![0usize; n_grains + 1];
        for &l in &labels {
            let l = l as usize;
            if l > n_grains {
                return Err(Error::Data(format!(
                    "label {l} exceeds declared grain count {n_grains}"
                )));
            }
            counts[l] += 1;
        }
        let offenders: Vec<usize> = (1..=n_grains).filter(|&i| counts[i] <= 1).collect();
        if !offenders.is_empty() {
            return Err(Error::Data(format!(
                "grain cardinality must exceed 1; offending indices: {offenders:?}"
            )));
        }
        Ok(GrainMap { dims, voxel_size, labels, n_grains })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn n_grains(&self) -> usize {
        self.n_grains
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let y = (idx / self.dims[0]) % self.dims[1];
        let z = idx / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    #[inline]
    pub fn label_at(&self, x: usize, y: usize, z: usize) -> u32 {
        self.labels[self.index(x, y, z)]
    }

    /// Number of foreground voxels (label > 0).
    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    /// Voxel coordinates of grain `i`, in linear-index order.
    pub fn grain_voxels(&self, i: usize) -> Vec<[usize; 3]> {
        assert!(i >= 1 && i <= self.n_grains);
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l as usize == i)
            .map(|(idx, _)| self.coords(idx))
            .collect()
    }

    /// Loads a map from `<name>.raw` (little-endian u32, x-fastest) with the
    /// `<name>.json` sidecar next to it.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let raw_path = path.as_ref();
        let side_path = sidecar_path(raw_path);
        let side: Sidecar = serde_json::from_reader(std::fs::File::open(&side_path).map_err(
            |e| Error::Format(format!("cannot open sidecar {}: {e}", side_path.display())),
        )?)?;
        let m = side.dims[0] * side.dims[1] * side.dims[2];
        let mut file = std::fs::File::open(raw_path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        if bytes.len() != 4 * m {
            return Err(Error::Format(format!(
                "raw file holds {} bytes, expected {} for dims {:?}",
                bytes.len(),
                4 * m,
                side.dims
            )));
        }
        let mut cursor = std::io::Cursor::new(bytes);
        let mut labels = vec![0u32; m];
        cursor.read_u32_into::<LittleEndian>(&mut labels)?;
        GrainMap::new(side.dims, side.voxel_size, labels, side.n_grains)
    }

    /// Writes `<name>.raw` plus the `<name>.json` sidecar. Round-trips
    /// bit-exactly through [`GrainMap::load`].
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let raw_path = path.as_ref();
        let mut buf = Vec::with_capacity(4 * self.labels.len());
        for &l in &self.labels {
            buf.write_u32::<LittleEndian>(l)?;
        }
        std::fs::write(raw_path, &buf)?;
        let side = Sidecar {
            dims: self.dims,
            voxel_size: self.voxel_size,
            n_grains: self.n_grains,
        };
        let mut f = std::fs::File::create(sidecar_path(raw_path))?;
        serde_json::to_writer_pretty(&mut f, &side)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Barycenter and sample covariance (1/(|C|-1) normalization) of grain `i`.
    pub fn moments(&self, i: usize) -> Result<GrainMoments> {
        if i < 1 || i > self.n_grains {
            return Err(Error::Data(format!("grain index {i} out of range 1..={}", self.n_grains)));
        }
        let voxels = self.grain_voxels(i);
        let volume = voxels.len();
        let mut sum = Vector3::zeros();
        for v in &voxels {
            sum += Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64);
        }
        let barycenter = sum / volume as f64;
        let mut cov = Matrix3::zeros();
        for v in &voxels {
            let d = Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64) - barycenter;
            cov += d * d.transpose();
        }
        cov /= (volume - 1) as f64;
        Ok(GrainMoments { index: i, volume, barycenter, covariance: cov })
    }

    /// The discrete interface `N_{i,j}`: voxels whose 26-neighborhood touches
    /// both grain `i` and grain `j`. Empty iff the grains are not adjacent.
    pub fn interface_voxels(&self, i: usize, j: usize) -> Vec<[usize; 3]> {
        assert_ne!(i, j);
        let [nx, ny, nz] = self.dims;
        let mut out = Vec::new();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let mut touches_i = false;
                    let mut touches_j = false;
                    for d in N26 {
                        let px = x as i64 + d[0];
                        let py = y as i64 + d[1];
                        let pz = z as i64 + d[2];
                        if px < 0 || py < 0 || pz < 0
                            || px >= nx as i64 || py >= ny as i64 || pz >= nz as i64
                        {
                            continue;
                        }
                        let l = self.label_at(px as usize, py as usize, pz as usize) as usize;
                        touches_i |= l == i;
                        touches_j |= l == j;
                    }
                    if touches_i && touches_j {
                        out.push([x, y, z]);
                    }
                }
            }
        }
        out
    }

    /// Boundary voxels of grain `i`: members of the grain with at least one
    /// 6-neighbor outside the grain. Window-border voxels count as boundary.
    pub fn boundary_voxels_6(&self, i: usize) -> Vec<[usize; 3]> {
        let [nx, ny, nz] = self.dims;
        let mut out = Vec::new();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if self.label_at(x, y, z) as usize != i {
                        continue;
                    }
                    let mut boundary = false;
                    for d in N6 {
                        let px = x as i64 + d[0];
                        let py = y as i64 + d[1];
                        let pz = z as i64 + d[2];
                        if px < 0 || py < 0 || pz < 0
                            || px >= nx as i64 || py >= ny as i64 || pz >= nz as i64
                        {
                            boundary = true;
                            break;
                        }
                        if self.label_at(px as usize, py as usize, pz as usize) as usize != i {
                            boundary = true;
                            break;
                        }
                    }
                    if boundary {
                        out.push([x, y, z]);
                    }
                }
            }
        }
        out
    }

    /// Per-grain neighbor index sets under direct 26-adjacency of labels.
    pub fn neighbor_sets(&self) -> Vec<BTreeSet<u32>> {
        neighbor_sets(self.dims, &self.labels, self.n_grains)
    }
}

fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

/// `N(i) = {j != i : some voxel of i has an N26 neighbor labeled j}` for any
/// label array (grain map or discretized field); background 0 is excluded.
/// The result is symmetric and indexed 1..=n (entry 0 unused, kept empty).
pub fn neighbor_sets(dims: [usize; 3], labels: &[u32], n: usize) -> Vec<BTreeSet<u32>> {
    let [nx, ny, nz] = dims;
    let mut sets = vec![BTreeSet::new(); n + 1];
    // Forward half of N26 suffices; insert both directions.
    let forward: Vec<[i64; 3]> = N26
        .iter()
        .copied()
        .filter(|d| d[2] > 0 || (d[2] == 0 && (d[1] > 0 || (d[1] == 0 && d[0] > 0))))
        .collect();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let a = labels[x + nx * (y + ny * z)];
                if a == 0 {
                    continue;
                }
                for d in &forward {
                    let px = x as i64 + d[0];
                    let py = y as i64 + d[1];
                    let pz = z as i64 + d[2];
                    if px < 0 || py < 0 || pz < 0
                        || px >= nx as i64 || py >= ny as i64 || pz >= nz as i64
                    {
                        continue;
                    }
                    let b = labels[px as usize + nx * (py as usize + ny * pz as usize)];
                    if b != 0 && b != a {
                        sets[a as usize].insert(b);
                        sets[b as usize].insert(a);
                    }
                }
            }
        }
    }
    sets
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn map_from(dims: [usize; 3], labels: Vec<u32>, n: usize) -> GrainMap {
        GrainMap::new(dims, 1.0, labels, n).unwrap()
    }

    #[test]
    fn minimal_valid_map() {
        let m = map_from([2, 1, 1], vec![1, 1], 1);
        assert_eq!(m.dims(), [2, 1, 1]);
        assert_eq!(m.n_grains(), 1);
    }

    #[test]
    fn rejects_cardinality_one() {
        let err = GrainMap::new([2, 1, 1], 1.0, vec![1, 2], 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cardinality"), "{msg}");
        assert!(msg.contains('1') && msg.contains('2'));
    }

    #[test]
    fn rejects_label_exceeding_n() {
        assert!(GrainMap::new([2, 1, 1], 1.0, vec![3, 3], 2).is_err());
    }

    #[test]
    fn rejects_dims_mismatch() {
        assert!(GrainMap::new([2, 2, 1], 1.0, vec![1, 1], 1).is_err());
    }

    #[test]
    fn save_load_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.raw");
        let m = map_from([3, 2, 1], vec![1, 1, 2, 2, 1, 2], 2);
        m.save(&path).unwrap();
        let back = GrainMap::load(&path).unwrap();
        assert_eq!(back.labels(), m.labels());
        assert_eq!(back.dims(), m.dims());
        // Byte identity of the raw payload after a second save.
        let bytes1 = std::fs::read(&path).unwrap();
        back.save(dir.path().join("toy2.raw")).unwrap();
        let bytes2 = std::fs::read(dir.path().join("toy2.raw")).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn moments_two_point_grain() {
        // grain voxels {(0,0,0),(1,0,0)}
        let m = map_from([2, 1, 1], vec![1, 1], 1);
        let mo = m.moments(1).unwrap();
        assert_relative_eq!(mo.barycenter, Vector3::new(0.5, 0.0, 0.0));
        assert_relative_eq!(mo.covariance, Matrix3::from_diagonal(&Vector3::new(0.5, 0.0, 0.0)));
    }

    #[test]
    fn moments_cube_matches_direct_summation() {
        let m = map_from([3, 3, 3], vec![1; 27], 1);
        let mo = m.moments(1).unwrap();
        assert_relative_eq!(mo.barycenter, Vector3::new(1.0, 1.0, 1.0));
        // Direct summation oracle.
        let mut cov = Matrix3::zeros();
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    let d = Vector3::new(x as f64 - 1.0, y as f64 - 1.0, z as f64 - 1.0);
                    cov += d * d.transpose();
                }
            }
        }
        cov /= 26.0;
        assert_relative_eq!(mo.covariance, cov, epsilon = 1e-12);
    }

    #[test]
    fn moments_bar_grain() {
        let m = map_from([5, 1, 1], vec![1; 5], 1);
        let mo = m.moments(1).unwrap();
        assert_relative_eq!(mo.barycenter, Vector3::new(2.0, 0.0, 0.0));
        assert_relative_eq!(mo.covariance, Matrix3::from_diagonal(&Vector3::new(2.5, 0.0, 0.0)));
    }

    /// Brute-force N26 interface oracle.
    fn interface_oracle(m: &GrainMap, i: usize, j: usize) -> Vec<[usize; 3]> {
        let [nx, ny, nz] = m.dims();
        let mut out = Vec::new();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let mut ti = false;
                    let mut tj = false;
                    for dz in -1i64..=1 {
                        for dy in -1i64..=1 {
                            for dx in -1i64..=1 {
                                if dx == 0 && dy == 0 && dz == 0 {
                                    continue;
                                }
                                let (px, py, pz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                                if px < 0 || py < 0 || pz < 0
                                    || px >= nx as i64 || py >= ny as i64 || pz >= nz as i64
                                {
                                    continue;
                                }
                                let l = m.label_at(px as usize, py as usize, pz as usize) as usize;
                                ti |= l == i;
                                tj |= l == j;
                            }
                        }
                    }
                    if ti && tj {
                        out.push([x, y, z]);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn interface_two_slabs() {
        // 4x1x2: z=0 slab label 1, z=1 slab label 2, sharing a face.
        let mut labels = vec![0u32; 8];
        for x in 0..4 {
            labels[x] = 1;
            labels[4 + x] = 2;
        }
        let m = map_from([4, 1, 2], labels, 2);
        let got = m.interface_voxels(1, 2);
        assert_eq!(got, interface_oracle(&m, 1, 2));
        // Both one-voxel-thick touching layers are in the interface.
        assert_eq!(got.len(), 8);
    }

    #[test]
    fn interface_empty_for_far_grains() {
        let mut labels = vec![0u32; 1000];
        labels[0] = 1;
        labels[1] = 1;
        labels[998] = 2;
        labels[999] = 2;
        let m = map_from([10, 10, 10], labels, 2);
        assert!(m.interface_voxels(1, 2).is_empty());
    }

    #[test]
    fn interface_across_background_layer() {
        // Grains separated by a single layer of 0-labels still count as adjacent.
        let mut labels = vec![0u32; 3 * 3 * 3];
        for y in 0..3 {
            for x in 0..3 {
                labels[x + 3 * y] = 1; // z = 0 plane
                labels[x + 3 * (y + 3 * 2)] = 2; // z = 2 plane
            }
        }
        let m = map_from([3, 3, 3], labels, 2);
        let got = m.interface_voxels(1, 2);
        assert_eq!(got, interface_oracle(&m, 1, 2));
        assert!(!got.is_empty());
    }

    #[test]
    fn boundary_cube_3x3x3() {
        let m = map_from([3, 3, 3], vec![1; 27], 1);
        let b = m.boundary_voxels_6(1);
        assert_eq!(b.len(), 26);
        assert!(!b.contains(&[1, 1, 1]));
    }

    #[test]
    fn boundary_cube_2x2x2() {
        let m = map_from([2, 2, 2], vec![1; 8], 1);
        assert_eq!(m.boundary_voxels_6(1).len(), 8);
    }

    #[test]
    fn boundary_matches_bruteforce_on_blob() {
        // A deterministic irregular blob on a 6^3 grid.
        let mut labels = vec![0u32; 216];
        for (idx, l) in labels.iter_mut().enumerate() {
            if (idx * 2654435761) % 7 < 3 {
                *l = 1;
            }
        }
        labels[0] = 1;
        labels[1] = 1; // cardinality > 1
        let m = map_from([6, 6, 6], labels, 1);
        let mut expect = Vec::new();
        let [nx, ny, nz] = m.dims();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if m.label_at(x, y, z) != 1 {
                        continue;
                    }
                    let mut bd = false;
                    for d in N6 {
                        let (px, py, pz) = (x as i64 + d[0], y as i64 + d[1], z as i64 + d[2]);
                        if px < 0 || py < 0 || pz < 0
                            || px >= 6 || py >= 6 || pz >= 6
                            || m.label_at(px as usize, py as usize, pz as usize) != 1
                        {
                            bd = true;
                        }
                    }
                    if bd {
                        expect.push([x, y, z]);
                    }
                }
            }
        }
        assert_eq!(m.boundary_voxels_6(1), expect);
    }

    #[test]
    fn neighbor_sets_two_slabs() {
        let mut labels = vec![0u32; 8];
        for x in 0..4 {
            labels[x] = 1;
            labels[4 + x] = 2;
        }
        let m = map_from([4, 1, 2], labels, 2);
        let sets = m.neighbor_sets();
        assert_eq!(sets[1], BTreeSet::from([2]));
        assert_eq!(sets[2], BTreeSet::from([1]));
    }

    #[test]
    fn neighbor_sets_single_grain() {
        let m = map_from([3, 3, 3], vec![1; 27], 1);
        assert!(m.neighbor_sets()[1].is_empty());
    }

    #[test]
    fn neighbor_sets_match_pair_scan() {
        // 3-grain toy: three x-slabs.
        let mut labels = vec![0u32; 27];
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    labels[x + 3 * (y + 3 * z)] = (x + 1) as u32;
                }
            }
        }
        let m = map_from([3, 3, 3], labels, 3);
        let sets = m.neighbor_sets();
        // Exhaustive pair scan via direct N26 adjacency of labels.
        for i in 1..=3u32 {
            for j in 1..=3u32 {
                if i == j {
                    continue;
                }
                let mut adjacent = false;
                for z in 0..3usize {
                    for y in 0..3usize {
                        for x in 0..3usize {
                            if m.label_at(x, y, z) != i {
                                continue;
                            }
                            for d in N26 {
                                let (px, py, pz) =
                                    (x as i64 + d[0], y as i64 + d[1], z as i64 + d[2]);
                                if px < 0 || py < 0 || pz < 0 || px >= 3 || py >= 3 || pz >= 3 {
                                    continue;
                                }
                                if m.label_at(px as usize, py as usize, pz as usize) == j {
                                    adjacent = true;
                                }
                            }
                        }
                    }
                }
                assert_eq!(sets[i as usize].contains(&j), adjacent, "pair ({i},{j})");
            }
        }
    }
}
