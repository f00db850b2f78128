//! Exact squared Euclidean distance transform on the voxel grid, via the
//! separable lower-envelope algorithm applied along x, then y, then z.

const INF: f64 = 1e30;

/// 1D squared distance transform of a sampled function `f` (lower envelope of
/// parabolas). `f[i] = 0` marks a seed, `INF` a non-seed.
fn transform_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    if n == 1 {
        out[0] = f[0];
        return;
    }
    let mut v = vec![0usize; n]; // parabola locations
    let mut z = vec![0.0f64; n + 1]; // envelope breakpoints
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        out[q] = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from every voxel to the nearest seed voxel.
/// Returns `INF`-like values (>= 1e30) when there is no seed at all.
pub fn edt_squared(dims: [usize; 3], is_seed: impl Fn(usize) -> bool) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let m = nx * ny * nz;
    let mut d = vec![INF; m];
    for (idx, v) in d.iter_mut().enumerate() {
        if is_seed(idx) {
            *v = 0.0;
        }
    }
    let mut buf_in = vec![0.0f64; nx.max(ny).max(nz)];
    let mut buf_out = vec![0.0f64; nx.max(ny).max(nz)];
    // x pass
    for z in 0..nz {
        for y in 0..ny {
            let base = nx * (y + ny * z);
            buf_in[..nx].copy_from_slice(&d[base..base + nx]);
            transform_1d(&buf_in[..nx], &mut buf_out[..nx]);
            d[base..base + nx].copy_from_slice(&buf_out[..nx]);
        }
    }
    // y pass
    for z in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                buf_in[y] = d[x + nx * (y + ny * z)];
            }
            transform_1d(&buf_in[..ny], &mut buf_out[..ny]);
            for y in 0..ny {
                d[x + nx * (y + ny * z)] = buf_out[y];
            }
        }
    }
    // z pass
    for y in 0..ny {
        for x in 0..nx {
            for z in 0..nz {
                buf_in[z] = d[x + nx * (y + ny * z)];
            }
            transform_1d(&buf_in[..nz], &mut buf_out[..nz]);
            for z in 0..nz {
                d[x + nx * (y + ny * z)] = buf_out[z];
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_bruteforce() {
        let dims = [7, 5, 4];
        let m = dims[0] * dims[1] * dims[2];
        // deterministic pseudo-random seed pattern
        let seeds: Vec<bool> = (0..m).map(|i| (i * 2654435761) % 11 == 0).collect();
        let d = edt_squared(dims, |i| seeds[i]);
        for idx in 0..m {
            let x = (idx % dims[0]) as i64;
            let y = ((idx / dims[0]) % dims[1]) as i64;
            let z = (idx / (dims[0] * dims[1])) as i64;
            let mut best = f64::INFINITY;
            for (jdx, &s) in seeds.iter().enumerate() {
                if !s {
                    continue;
                }
                let sx = (jdx % dims[0]) as i64;
                let sy = ((jdx / dims[0]) % dims[1]) as i64;
                let sz = (jdx / (dims[0] * dims[1])) as i64;
                let dd = ((x - sx).pow(2) + (y - sy).pow(2) + (z - sz).pow(2)) as f64;
                best = best.min(dd);
            }
            assert_eq!(d[idx], best, "voxel {idx}");
        }
    }

    #[test]
    fn no_seeds_gives_inf() {
        let d = edt_squared([3, 3, 3], |_| false);
        assert!(d.iter().all(|&v| v >= 1e29));
    }
}
