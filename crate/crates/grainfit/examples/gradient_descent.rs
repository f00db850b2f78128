//! Gradient-based fitting with a softmax relaxation of the voxel
//! assignment. Works for all four model kinds; on anisotropic grains the
//! GBPD norms pay off over plain Laguerre weights.

use grainfit::diagram::{assign, ModelKind};
use grainfit::gdfit::{fit_gd, GdConfig};
use grainfit::metrics;
use grainfit::synth::{self, Count, SynthSpec};

fn main() -> grainfit::Result<()> {
    // elongated GBPD grains: half-axis midpoint ratio 3
    let spec = synth::anisotropize(&SynthSpec::isotropic(
        [32, 32, 32],
        ModelKind::Gbpd,
        Count::Fixed(10),
        5,
    ));
    let (_, map) = synth::generate(&spec)?;
    println!("{}-grain anisotropic GBPD map, 32^3 window\n", map.n_grains());

    for kind in ModelKind::ALL {
        let config = GdConfig { max_epochs: 15, ..GdConfig::default() };
        let fit = fit_gd(&map, kind, &config)?;
        let fc = metrics::f_correct(&map, &assign(&fit.tessellation, map.dims()))?;
        println!(
            "{kind:<9} F_c={fc:.4}  objective {:.4} -> {:.4}  (tau={:.1})",
            fit.trace.first().unwrap(),
            fit.trace.last().unwrap(),
            fit.tau
        );
    }
    Ok(())
}
