use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smokestyle::config::{ExportSection, FeaturesSection, Inputs, JobConfig, OptimizeSection, RenderSection};
use smokestyle::imageio::save_png;
use smokestyle::job::{run_job, JobOptions};
use smokestyle::procedural::{make_procedural_smoke, SmokeKind};
use smokestyle::sweep::{gamma_sweep, height_gradient, GAMMAS};
use smokestyle::volf::{VolfError, Volume};
use smokestyle::weights::load_network;
use smokestyle_core::{gradcheck, Dims, Layer, RenderSettings, ViewAngle};

#[derive(Parser)]
#[command(version, about = "Transport-based stylization of smoke densities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stylize every frame of a job.
    Stylize(StylizeArgs),
    /// Render a density at several transmittance factors into a contact sheet.
    Render(RenderArgs),
    /// Write a procedural density and velocity sequence plus a job file.
    Gen(GenArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct StylizeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides optimize.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-frame shape passes.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides export.checkpoint_every.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct RenderArgs {
    /// Density volume; a procedural blob of extent --dims when omitted.
    #[arg(long)]
    density: Option<PathBuf>,
    /// Color volume; a vertical gradient when omitted.
    #[arg(long)]
    color: Option<PathBuf>,
    #[arg(long, num_args = 2..=3, default_values_t = [32, 32, 32])]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = GAMMAS)]
    gammas: Vec<f64>,
    #[arg(long, default_value_t = RenderSettings::default().steps)]
    steps: usize,
    #[arg(long, default_value_t = 0.0)]
    view_deg: f64,
    #[arg(long, default_value = "gamma_sweep.png")]
    output: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "plume")]
    kind: SmokeKind,
    #[arg(long, num_args = 2..=3, default_values_t = [64, 64])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "smoke")]
    output_dir: PathBuf,
    /// Style referenced by the generated job file.
    #[arg(long, default_value = "builtin:fire")]
    style: String,
}

/// A failure with its exit status.
struct Failure(u8, String);

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Self(3, e.to_string())
    }
    fn output(e: impl std::fmt::Display) -> Self {
        Self(1, e.to_string())
    }
}

fn dims_of(v: &[usize]) -> Result<Dims, Failure> {
    Dims::new(v).map_err(|e| Failure(2, e.to_string()))
}

fn load(path: &Path) -> Result<Volume, Failure> {
    Volume::load(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn stylize(a: StylizeArgs) -> Result<(), Failure> {
    let options = JobOptions {
        seed: a.seed,
        jobs: a.jobs,
        checkpoint_every: a.checkpoint_every,
        verbose: !a.quiet,
    };
    let report = run_job(&a.config, &options).map_err(|e| Failure(e.exit_code() as u8, e.to_string()))?;
    if !a.quiet {
        for f in &report.files {
            println!("{}", f.display());
        }
    }
    Ok(())
}

fn render(a: RenderArgs) -> Result<(), Failure> {
    let d = match &a.density {
        Some(p) => load(p)?.into_scalar().map_err(Failure::input)?,
        None => make_procedural_smoke(SmokeKind::Blob, dims_of(&a.dims)?, 1, 0).densities.remove(0),
    };
    let c = match &a.color {
        Some(p) => load(p)?.into_color().map_err(|e: VolfError| Failure::input(e))?,
        None => height_gradient(&d),
    };
    if c.dims() != d.dims() {
        return Err(Failure::input("color and density extents differ"));
    }
    let view = ViewAngle::new(a.view_deg.to_radians()).map_err(|e| Failure(2, e.to_string()))?;
    let settings = RenderSettings {
        steps: a.steps,
        ..RenderSettings::default()
    };
    let sweep = gamma_sweep(&d, &c, view, &settings, &a.gammas).map_err(|e| Failure(2, e.to_string()))?;
    save_png(&sweep.sheet(), &a.output).map_err(|e| Failure::output(format!("{}: {e}", a.output.display())))?;
    println!("{}", a.output.display());
    Ok(())
}

fn gen(a: GenArgs) -> Result<(), Failure> {
    let dims = dims_of(&a.dims)?;
    if a.frames == 0 {
        return Err(Failure(2, "frames must be at least 1".into()));
    }
    let seq = make_procedural_smoke(a.kind, dims, a.frames, a.seed);
    std::fs::create_dir_all(&a.output_dir).map_err(Failure::output)?;
    let (mut density, mut velocity) = (Vec::new(), Vec::new());
    for (t, (d, v)) in seq.densities.iter().zip(&seq.velocities).enumerate() {
        let (dn, vn) = (format!("density_{t:04}.volf"), format!("velocity_{t:04}.volf"));
        Volume::from(d).save(a.output_dir.join(&dn)).map_err(Failure::output)?;
        Volume::from(v).save(a.output_dir.join(&vn)).map_err(Failure::output)?;
        density.push(dn);
        velocity.push(vn);
    }
    let job = JobConfig {
        inputs: Inputs {
            density: Some(density),
            velocity: Some(velocity),
            procedural: None,
            style: a.style,
        },
        render: RenderSection::default(),
        features: FeaturesSection::default(),
        optimize: OptimizeSection::default(),
        export: ExportSection::default(),
    };
    let path = a.output_dir.join("job.json");
    std::fs::write(&path, job.to_json()).map_err(Failure::output)?;
    println!("{}", path.display());
    Ok(())
}

fn gradcheck(seed: u64) -> Result<(), Failure> {
    let (net, source) = load_network(Layer::RELU3_1).map_err(Failure::input)?;
    println!("network: {source}");
    let checks = gradcheck::run_all(&net, seed).map_err(|e| Failure(4, e.to_string()))?;
    let mut failed = 0;
    for c in &checks {
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {:<18} components {:>4}  max relative error {:.3e}  tolerance {:.0e}",
            c.name, c.checked, c.max_relative_error, c.tolerance
        );
        failed += usize::from(!c.passed());
    }
    match failed {
        0 => Ok(()),
        n => Err(Failure(1, format!("{n} gradient suites failed"))),
    }
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Stylize(a) => stylize(a),
        Command::Render(a) => render(a),
        Command::Gen(a) => gen(a),
        Command::Gradcheck { seed } => gradcheck(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
