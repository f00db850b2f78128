//! Generates a synthetic tessellation of every model kind, discretizes it,
//! and verifies that re-assigning the generating tessellation reproduces the
//! grain map exactly.

use grainfit::diagram::{assign, ModelKind};
use grainfit::metrics;
use grainfit::synth::{self, Count, SynthSpec};

fn main() -> grainfit::Result<()> {
    for kind in ModelKind::ALL {
        let spec = SynthSpec::isotropic([24, 24, 24], kind, Count::Poisson(8.0), 42);
        let (tess, map) = synth::generate(&spec)?;
        let field = assign(&tess, map.dims());
        let m = metrics::all_measures(&map, &field)?;
        println!(
            "{kind:<9} n={:<3} F_c={:.3} F_0={:.3} F_IoU={:.3}",
            map.n_grains(),
            m.f_c,
            m.f_0,
            m.f_iou
        );
        assert_eq!(m.f_c, 1.0);
        assert_eq!(m.f_0, 0.0);
        assert_eq!(m.f_iou, 1.0);
    }
    println!("all four kinds round-trip exactly");
    Ok(())
}
