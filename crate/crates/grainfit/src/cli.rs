//! Command-line front end: `fit`, `eval`, `synth`, and `slice` subcommands.
//!
//! Exit codes: 0 success, 2 usage/capability error, 3 data error,
//! 4 numerical failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::diagram::{assign, ModelKind, Tessellation};
use crate::error::{Error, Result};
use crate::grid::GrainMap;
use crate::metrics::{self, MetricRow, MetricTable};
use crate::report::{trace_csv, FitReport};
use crate::synth::{self, Count, SynthSpec};
use crate::{cefit, gdfit, heuristics, lpfit, neperfit};

#[derive(Debug, Parser)]
#[command(name = "grainfit", version, about = "Fit tessellation models to voxelized grain maps")]
pub struct Cli {
    /// Cap the number of worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a tessellation model to a grain map.
    Fit(FitArgs),
    /// Discretize tessellations against a grain map and tabulate all measures.
    Eval(EvalArgs),
    /// Generate a synthetic tessellation and its discretized grain map.
    Synth(SynthArgs),
    /// Render one axis-aligned slice of a grain map as a PGM/PPM image.
    Slice(SliceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Barycenter sites, zero weights.
    H0,
    /// Barycenter sites, volume-derived weights.
    Hq,
    /// Volume-constrained assignment LP (weights from duals).
    Lp,
    /// Cross-entropy interface matching.
    Ce,
    /// Softmax-relaxed gradient descent.
    Gd,
    /// Derivative-free boundary-distance minimization.
    Neper,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::H0 => "h0",
            Method::Hq => "hq",
            Method::Lp => "lp",
            Method::Ce => "ce",
            Method::Gd => "gd",
            Method::Neper => "neper",
        }
    }

    /// The method × model capability matrix for voxelized input.
    pub fn supports(&self, kind: ModelKind) -> bool {
        match self {
            Method::H0 | Method::Gd => true,
            Method::Hq | Method::Lp => kind != ModelKind::Voronoi,
            Method::Ce => kind == ModelKind::Laguerre,
            Method::Neper => matches!(kind, ModelKind::Voronoi | ModelKind::Laguerre),
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Grain map (.raw file with .json sidecar).
    pub map: PathBuf,
    #[arg(long)]
    pub method: Method,
    #[arg(long)]
    pub model: ModelKind,
    /// Output tessellation JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Report JSON path (default: <out>.report.json).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    // LP flags
    /// Volume slack: bounds are (1±epsilon/100)·|C_i|.
    #[arg(long, default_value_t = 2.0)]
    pub epsilon: f64,
    /// Restrict the LP to a coreset of boundary-band voxels.
    #[arg(long)]
    pub coreset: bool,
    #[arg(long, default_value_t = 10)]
    pub coreset_stride: usize,
    /// Interior-exclusion distance of the coreset (0 keeps all voxels).
    #[arg(long, default_value_t = 20.0)]
    pub delta: f64,
    /// Solve the separating-hyperplane LP instead of the assignment LP
    /// (GBPD only; requires --coreset).
    #[arg(long)]
    pub lp_svm: bool,

    // CE flags
    #[arg(long, default_value_t = 4000)]
    pub ce_samples: usize,
    #[arg(long, default_value_t = 200)]
    pub ce_elite: usize,
    #[arg(long, default_value_t = 10)]
    pub ce_test_points: usize,

    // GD flags
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    /// Softmax temperature (default: squared mean grain diameter).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 1e-1)]
    pub lr_sites: f64,
    #[arg(long, default_value_t = 1e-1)]
    pub lr_weights: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub lr_factors: f64,

    // derivative-free flags
    #[arg(long, default_value_t = 1e-3)]
    pub stop_abs: f64,
    #[arg(long, default_value_t = 40)]
    pub stop_window_mult: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Grain map (.raw file with .json sidecar).
    pub map: PathBuf,
    /// Tessellation JSON files; the file stem names the method column.
    #[arg(required = true)]
    pub tessellations: Vec<PathBuf>,
    /// Dataset column value (default: map file stem).
    #[arg(long)]
    pub dataset: Option<String>,
    /// Write the table as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the aligned text table here (also printed to stdout).
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output base path; writes <out>.raw, <out>.json, <out>.tess.json.
    pub out: PathBuf,
    /// Window dimensions as nx,ny,nz.
    #[arg(long, value_delimiter = ',', default_values_t = [32, 32, 32])]
    pub dims: Vec<usize>,
    #[arg(long, default_value = "laguerre")]
    pub model: ModelKind,
    /// Exact number of generators.
    #[arg(long, conflicts_with = "expected")]
    pub n: Option<usize>,
    /// Poisson-distributed generator count with this expectation.
    #[arg(long)]
    pub expected: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stretch the first half-axis range to a 3:1 midpoint ratio.
    #[arg(long)]
    pub anisotropic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    /// Grain map (.raw file with .json sidecar).
    pub map: PathBuf,
    #[arg(long)]
    pub axis: Axis,
    #[arg(long)]
    pub index: usize,
    /// Output image: .pgm (grayscale, needs ≤ 255 grains) or .ppm (color).
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)
        .map_err(|e| match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                // help/version are success paths; print and pretend success
                print!("{e}");
                Error::Capability(String::new())
            }
            _ => Error::Capability(format!("{e}")),
        })?;
    if let Some(t) = cli.threads {
        // ignore the error if a global pool already exists (e.g. in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Slice(a) => cmd_slice(&a),
    }
}

/// Entry point for the binary: returns the process exit code.
pub fn run() -> i32 {
    match run_from(std::env::args_os()) {
        Ok(()) => 0,
        Err(e) => {
            if !e.to_string().is_empty() {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}

fn save_tessellation(tess: &Tessellation, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(tess)?;
    s.push('\n');
    Ok(std::fs::write(path, s)?)
}

pub fn load_tessellation(path: &Path) -> Result<Tessellation> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    if !args.method.supports(args.model) {
        return Err(Error::Capability(format!(
            "method {} does not support model {} for voxelized input",
            args.method.as_str(),
            args.model
        )));
    }
    let map = GrainMap::load(&args.map)?;
    let t0 = Instant::now();
    let (tess, trace, notes, config) = run_fit(args, &map)?;
    let wall = t0.elapsed().as_secs_f64();
    save_tessellation(&tess, &args.out)?;
    let trace_path = match trace {
        Some(tr) => {
            let p = args.out.with_extension("trace.csv");
            std::fs::write(&p, trace_csv(&tr))?;
            Some(p.display().to_string())
        }
        None => None,
    };
    let report = FitReport {
        method: args.method.as_str().into(),
        model: args.model,
        config,
        seed: args.seed,
        notes,
        trace_path,
        wall_seconds: wall,
        tessellation_path: args.out.display().to_string(),
    };
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.with_extension("report.json"));
    report.save(report_path)?;
    Ok(())
}

type FitOutput = (Tessellation, Option<Vec<f64>>, Vec<String>, serde_json::Value);

fn run_fit(args: &FitArgs, map: &GrainMap) -> Result<FitOutput> {
    match args.method {
        Method::H0 => {
            let (tess, notes) = heuristics::fit_h0(map, args.model)?;
            Ok((tess, None, notes, serde_json::json!({})))
        }
        Method::Hq => {
            let (tess, notes) = heuristics::fit_hq(map, args.model)?;
            Ok((tess, None, notes, serde_json::json!({})))
        }
        Method::Lp => {
            let config = serde_json::json!({
                "epsilon": args.epsilon,
                "coreset": args.coreset,
                "coreset_stride": args.coreset_stride,
                "delta": args.delta,
                "lp_svm": args.lp_svm,
            });
            let coreset = if args.coreset {
                Some(lpfit::build_coreset(map, args.coreset_stride, args.delta)?)
            } else {
                None
            };
            if args.lp_svm {
                if args.model != ModelKind::Gbpd {
                    return Err(Error::Capability(
                        "the separating-hyperplane LP produces full GBPD norms; use --model gbpd"
                            .into(),
                    ));
                }
                let cs = coreset.ok_or_else(|| {
                    Error::Capability("--lp-svm requires --coreset".into())
                })?;
                let fit = lpfit::fit_lp_svm(map, &cs)?;
                return Ok((fit.tessellation, None, fit.notes, config));
            }
            let bounds = lpfit::VolumeBounds::from_map(map, args.epsilon / 100.0);
            let fit = lpfit::fit_lp_dual(map, args.model, &bounds, None, None, coreset.as_ref())?;
            let mut notes = fit.notes;
            notes.push(format!(
                "duality gap {:.3e}, slackness residual {:.3e}",
                fit.certificate.duality_gap, fit.certificate.slackness_residual
            ));
            Ok((fit.tessellation, None, notes, config))
        }
        Method::Ce => {
            let config = cefit::CeConfig {
                sample_size: args.ce_samples,
                elite_size: args.ce_elite,
                test_points_per_interface: args.ce_test_points,
                seed: args.seed,
                ..cefit::CeConfig::default()
            };
            let echo = serde_json::json!({
                "samples": config.sample_size,
                "elite": config.elite_size,
                "test_points": config.test_points_per_interface,
            });
            let fit = cefit::fit_ce(map, &config)?;
            Ok((fit.tessellation, Some(fit.trace), fit.notes, echo))
        }
        Method::Gd => {
            let config = gdfit::GdConfig {
                tau: args.tau,
                lr_sites: args.lr_sites,
                lr_weights: args.lr_weights,
                lr_factors: args.lr_factors,
                max_epochs: args.epochs,
                seed: args.seed,
                ..gdfit::GdConfig::default()
            };
            let echo = serde_json::json!({
                "tau": args.tau,
                "lr_sites": config.lr_sites,
                "lr_weights": config.lr_weights,
                "lr_factors": config.lr_factors,
                "epochs": config.max_epochs,
            });
            let fit = gdfit::fit_gd(map, args.model, &config)?;
            let mut notes = fit.notes;
            notes.push(format!("temperature {}", fit.tau));
            Ok((fit.tessellation, Some(fit.trace), notes, echo))
        }
        Method::Neper => {
            let config = neperfit::NeperConfig {
                stop_abs: args.stop_abs,
                stop_window_mult: args.stop_window_mult,
                seed: args.seed,
                ..neperfit::NeperConfig::default()
            };
            let echo = serde_json::json!({
                "stop_abs": config.stop_abs,
                "stop_window_mult": config.stop_window_mult,
            });
            let fit = neperfit::fit_neper(map, args.model, &config)?;
            Ok((fit.tessellation, Some(fit.trace), fit.notes, echo))
        }
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let map = GrainMap::load(&args.map)?;
    let dataset = args.dataset.clone().unwrap_or_else(|| file_stem(&args.map));
    let mut rows = Vec::new();
    for path in &args.tessellations {
        let tess = load_tessellation(path)?;
        if tess.dims != map.dims() {
            return Err(Error::Data(format!(
                "{}: tessellation window {:?} does not match map dims {:?}",
                path.display(),
                tess.dims,
                map.dims()
            )));
        }
        let field = assign(&tess, map.dims());
        let measures = metrics::all_measures(&map, &field)?;
        rows.push(MetricRow {
            dataset: dataset.clone(),
            method: file_stem(path),
            model: tess.kind.as_str().into(),
            measures,
        });
    }
    rows.sort_by(|a, b| (&a.method, &a.model).cmp(&(&b.method, &b.model)));
    let table = MetricTable { rows };
    let text = table.to_text();
    print!("{text}");
    if let Some(p) = &args.csv {
        std::fs::write(p, table.to_csv())?;
    }
    if let Some(p) = &args.text {
        std::fs::write(p, text)?;
    }
    Ok(())
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if args.dims.len() != 3 {
        return Err(Error::Capability(format!(
            "--dims needs exactly three values, got {}",
            args.dims.len()
        )));
    }
    let dims = [args.dims[0], args.dims[1], args.dims[2]];
    let count = match (args.n, args.expected) {
        (Some(n), _) => Count::Fixed(n),
        (None, Some(e)) => Count::Poisson(e),
        (None, None) => return Err(Error::Capability("pass one of --n or --expected".into())),
    };
    let mut spec = SynthSpec::isotropic(dims, args.model, count, args.seed);
    if args.anisotropic {
        spec = synth::anisotropize(&spec);
    }
    let (tess, map) = synth::generate(&spec)?;
    map.save(args.out.with_extension("raw"))?;
    save_tessellation(&tess, &args.out.with_extension("tess.json"))?;
    Ok(())
}

pub fn cmd_slice(args: &SliceArgs) -> Result<()> {
    let map = GrainMap::load(&args.map)?;
    let [nx, ny, nz] = map.dims();
    let (axis_len, w, h) = match args.axis {
        Axis::X => (nx, ny, nz),
        Axis::Y => (ny, nx, nz),
        Axis::Z => (nz, nx, ny),
    };
    if args.index >= axis_len {
        return Err(Error::Data(format!(
            "slice index {} out of range 0..{axis_len}",
            args.index
        )));
    }
    let mut labels = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let (x, y, z) = match args.axis {
                Axis::X => (args.index, u, v),
                Axis::Y => (u, args.index, v),
                Axis::Z => (u, v, args.index),
            };
            labels.push(map.label_at(x, y, z));
        }
    }
    let ext = args.out.extension().and_then(|e| e.to_str()).unwrap_or("");
    let bytes = match ext {
        "pgm" => {
            if map.n_grains() > 255 {
                return Err(Error::Data(format!(
                    "{} grains exceed the 255 grayscale levels of PGM; use .ppm",
                    map.n_grains()
                )));
            }
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend(labels.iter().map(|&l| l as u8));
            out
        }
        "ppm" => {
            let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
            for &l in &labels {
                out.extend_from_slice(&label_color(l));
            }
            out
        }
        other => {
            return Err(Error::Capability(format!(
                "unsupported image extension {other:?}; use .pgm or .ppm"
            )))
        }
    };
    std::fs::write(&args.out, bytes)?;
    Ok(())
}

/// Deterministic label→color mapping: background black, grains spread around
/// the hue circle by the golden ratio.
pub fn label_color(label: u32) -> [u8; 3] {
    if label == 0 {
        return [0, 0, 0];
    }
    let hue = (label as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let (s, v) = (0.65_f64, 0.95_f64);
    let c = v * s;
    let x = c * (1.0 - (hue % 2.0 - 1.0).abs());
    let (r, g, b) = match hue as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capability_matrix_is_exact() {
        use Method::*;
        use ModelKind::*;
        let expected = [
            (H0, vec![Voronoi, Laguerre, DiagonalGbpd, Gbpd]),
            (Hq, vec![Laguerre, DiagonalGbpd, Gbpd]),
            (Lp, vec![Laguerre, DiagonalGbpd, Gbpd]),
            (Ce, vec![Laguerre]),
            (Gd, vec![Voronoi, Laguerre, DiagonalGbpd, Gbpd]),
            (Neper, vec![Voronoi, Laguerre]),
        ];
        for (method, supported) in expected {
            for kind in ModelKind::ALL {
                assert_eq!(
                    method.supports(kind),
                    supported.contains(&kind),
                    "{:?} x {:?}",
                    method,
                    kind
                );
            }
        }
    }

    #[test]
    fn label_colors_distinct_for_small_maps() {
        let colors: std::collections::HashSet<[u8; 3]> = (0..=30).map(label_color).collect();
        assert_eq!(colors.len(), 31);
    }

    #[test]
    fn rejected_pair_maps_to_exit_code_2() {
        let err = cmd_fit(&FitArgs {
            map: PathBuf::from("/nonexistent.raw"),
            method: Method::Ce,
            model: ModelKind::Gbpd,
            out: PathBuf::from("/tmp/x.json"),
            report: None,
            seed: 0,
            epsilon: 2.0,
            coreset: false,
            coreset_stride: 10,
            delta: 20.0,
            lp_svm: false,
            ce_samples: 10,
            ce_elite: 5,
            ce_test_points: 2,
            epochs: 1,
            tau: None,
            lr_sites: 0.1,
            lr_weights: 0.1,
            lr_factors: 0.01,
            stop_abs: 1e-3,
            stop_window_mult: 40,
        })
        .unwrap_err();
        // capability is checked before the map is even opened
        assert_eq!(err.exit_code(), 2);
    }
}
