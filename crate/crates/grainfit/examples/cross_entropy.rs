//! Cross-entropy fitting of a Laguerre tessellation: starting from the Hq
//! heuristic, Gaussian parameter samples are scored by how far interface
//! test points lie from the corresponding fitted facets, and the sampling
//! distribution contracts around the elite set.

use grainfit::cefit::{fit_ce, interface_discrepancy, sample_test_points, CeConfig};
use grainfit::diagram::{assign, ModelKind};
use grainfit::heuristics;
use grainfit::metrics;
use grainfit::synth::{self, Count, SynthSpec};

fn main() -> grainfit::Result<()> {
    let spec = SynthSpec::isotropic([24, 24, 24], ModelKind::Laguerre, Count::Fixed(8), 33);
    let (_, map) = synth::generate(&spec)?;

    let config = CeConfig {
        sample_size: 600,
        elite_size: 30,
        max_iterations: 40,
        seed: 1,
        ..CeConfig::default()
    };
    let (hq, _) = heuristics::fit_hq(&map, ModelKind::Laguerre)?;
    let points = sample_test_points(&map, config.test_points_per_interface, config.seed)?;
    let e_init = interface_discrepancy(&hq, &points)?;

    let fit = fit_ce(&map, &config)?;
    let e_final = *fit.trace.last().unwrap();
    println!(
        "interface discrepancy: {e_init:.4} -> {e_final:.4} over {} iterations",
        fit.trace.len() - 1
    );

    let fc_hq = metrics::f_correct(&map, &assign(&hq, map.dims()))?;
    let fc_ce = metrics::f_correct(&map, &assign(&fit.tessellation, map.dims()))?;
    println!("F_c: {fc_hq:.4} (Hq) -> {fc_ce:.4} (CE)");
    assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]), "best-so-far must not increase");
    Ok(())
}
