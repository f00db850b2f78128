//! Renders axis-aligned cross sections of a grain map and of a fitted
//! tessellation side by side as PPM images (deterministic label colors).

use grainfit::cli::label_color;
use grainfit::diagram::{assign, LabelField, ModelKind};
use grainfit::heuristics;
use grainfit::synth::{self, Count, SynthSpec};

fn write_slice(field_dims: [usize; 3], labels: &[u32], z: usize, path: &str) -> grainfit::Result<()> {
    let [nx, ny, _] = field_dims;
    let mut out = format!("P6\n{nx} {ny}\n255\n").into_bytes();
    for y in 0..ny {
        for x in 0..nx {
            out.extend_from_slice(&label_color(labels[x + nx * (y + ny * z)]));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn main() -> grainfit::Result<()> {
    let spec = SynthSpec::isotropic([48, 48, 48], ModelKind::Laguerre, Count::Fixed(20), 3);
    let (_, map) = synth::generate(&spec)?;
    let (hq, _) = heuristics::fit_hq(&map, ModelKind::Laguerre)?;
    let field: LabelField = assign(&hq, map.dims());

    let dir = std::env::temp_dir().join("grainfit_slices");
    std::fs::create_dir_all(&dir)?;
    let z = map.dims()[2] / 2;
    let gt_path = dir.join("gt_z24.ppm");
    let fit_path = dir.join("hq_z24.ppm");
    write_slice(map.dims(), map.labels(), z, gt_path.to_str().unwrap())?;
    write_slice(field.dims, &field.labels, z, fit_path.to_str().unwrap())?;
    println!("wrote {} and {}", gt_path.display(), fit_path.display());
    Ok(())
}
