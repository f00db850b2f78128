//! Optimization-free fitting with the H0 and Hq heuristics: barycenter
//! sites, PCA norms for the GBPD kinds, and (for Hq) volume-derived weights.

use grainfit::diagram::{assign, ModelKind};
use grainfit::heuristics;
use grainfit::metrics;
use grainfit::synth::{self, Count, SynthSpec};

fn main() -> grainfit::Result<()> {
    let spec = SynthSpec::isotropic([32, 32, 32], ModelKind::Laguerre, Count::Fixed(12), 7);
    let (_, map) = synth::generate(&spec)?;
    println!("fitting a {}-grain Laguerre map, 32^3 window\n", map.n_grains());

    println!("{:<4} {:<9} {:>6} {:>6} {:>6}", "meth", "model", "F_c", "F_0", "F_IoU");
    for kind in [ModelKind::Voronoi, ModelKind::Laguerre, ModelKind::Gbpd] {
        let (tess, _) = heuristics::fit_h0(&map, kind)?;
        let m = metrics::all_measures(&map, &assign(&tess, map.dims()))?;
        println!("{:<4} {:<9} {:>6.3} {:>6.3} {:>6.3}", "h0", kind, m.f_c, m.f_0, m.f_iou);
    }
    for kind in [ModelKind::Laguerre, ModelKind::DiagonalGbpd, ModelKind::Gbpd] {
        let (tess, notes) = heuristics::fit_hq(&map, kind)?;
        let m = metrics::all_measures(&map, &assign(&tess, map.dims()))?;
        println!("{:<4} {:<9} {:>6.3} {:>6.3} {:>6.3}", "hq", kind, m.f_c, m.f_0, m.f_iou);
        for n in notes {
            println!("     note: {n}");
        }
    }
    Ok(())
}
