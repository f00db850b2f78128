//! Derivative-free Laguerre fitting: a Subplex-style restricted Nelder-Mead
//! minimizes the normalized boundary-distance objective, cycling over
//! per-generator parameter blocks until the best value stagnates.

use grainfit::diagram::{assign, ModelKind};
use grainfit::metrics;
use grainfit::neperfit::{fit_neper, NeperConfig};
use grainfit::synth::{self, Count, SynthSpec};

fn main() -> grainfit::Result<()> {
    let spec = SynthSpec::isotropic([20, 20, 20], ModelKind::Laguerre, Count::Fixed(6), 13);
    let (_, map) = synth::generate(&spec)?;

    let fit = fit_neper(&map, ModelKind::Laguerre, &NeperConfig::default())?;
    println!(
        "objective {:.5} -> {:.5} after {} evaluations",
        fit.trace.first().unwrap(),
        fit.trace.last().unwrap(),
        fit.evaluations
    );
    let fc = metrics::f_correct(&map, &assign(&fit.tessellation, map.dims()))?;
    println!("F_c = {fc:.4}");
    assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
    Ok(())
}
