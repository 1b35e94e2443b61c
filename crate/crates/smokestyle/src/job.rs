//! Batch execution of a JSON job: load inputs, stylize every frame, and
//! write renders, color volumes and loss logs.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::thread;

use smokestyle_core::{
    finish_sequence, render_color, render_grayscale, shape_pass, Dims, Error, Observer, Progress,
    ScalarField, ShapeResult, StyleTargets, StylizationConfig, StylizedFrame, Vgg19, VectorField,
};

use crate::config::JobConfig;
use crate::imageio::save_png;
use crate::procedural::make_procedural_smoke;
use crate::styles::{load_style, StyleError};
use crate::volf::{Volume, VolfError};
use crate::weights::{load_network, NetworkSource};

/// Overrides and execution settings from the command line.
#[derive(Clone, Debug)]
pub struct JobOptions {
    pub seed: Option<u64>,
    /// Worker threads for the per-frame shape passes. Results do not
    /// depend on this.
    pub jobs: usize,
    pub checkpoint_every: Option<usize>,
    /// Print progress to stderr.
    pub verbose: bool,
}

impl Default for JobOptions {
    fn default() -> Self {
        Self {
            seed: None,
            jobs: 1,
            checkpoint_every: None,
            verbose: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error("malformed config: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("environment: {0}")]
    Environment(String),
    #[error("numerical failure: {message}; last finite state written to {}", snapshot.display())]
    Numerical { message: String, snapshot: PathBuf },
    #[error("cannot write output: {0}")]
    Output(String),
}

impl JobError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::MissingInput(_) | Self::Environment(_) => 3,
            Self::Numerical { .. } => 4,
            Self::Output(_) => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct JobReport {
    pub output_dir: PathBuf,
    /// Every file written, in order.
    pub files: Vec<PathBuf>,
    pub network: NetworkSource,
    pub frames: Vec<StylizedFrame>,
}

/// Output file names for frame `t`.
pub fn frame_files(t: usize) -> [String; 4] {
    [
        format!("frame_{t:04}_gray.png"),
        format!("frame_{t:04}_color.png"),
        format!("frame_{t:04}_color.volf"),
        format!("frame_{t:04}_loss.csv"),
    ]
}

struct Inputs {
    densities: Vec<ScalarField>,
    velocities: Vec<VectorField>,
}

fn read_volume(base: &Path, name: &str) -> Result<Volume, JobError> {
    let path = base.join(name);
    Volume::load(&path).map_err(|e| match e {
        VolfError::Io(ref io) if io.kind() == io::ErrorKind::NotFound => {
            JobError::MissingInput(format!("{} does not exist", path.display()))
        }
        e => JobError::MissingInput(format!("{} is unreadable: {e}", path.display())),
    })
}

fn load_inputs(config: &JobConfig, base: &Path) -> Result<Inputs, JobError> {
    if let Some(p) = &config.inputs.procedural {
        let dims = Dims::new(&p.dims).map_err(|e| JobError::Config(e.to_string()))?;
        let s = make_procedural_smoke(p.kind, dims, p.frames, p.seed);
        return Ok(Inputs {
            densities: s.densities,
            velocities: s.velocities,
        });
    }
    let names = config.inputs.density.as_deref().unwrap_or_default();
    let bad = |name: &str, e: VolfError| JobError::MissingInput(format!("{name}: {e}"));
    let densities = names
        .iter()
        .map(|n| read_volume(base, n)?.into_scalar().map_err(|e| bad(n, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let dims = densities[0].dims();
    if densities.iter().any(|d| d.dims() != dims) {
        return Err(JobError::MissingInput("density frames differ in extent".into()));
    }
    let velocities = match &config.inputs.velocity {
        Some(names) => {
            if names.len() != densities.len() {
                return Err(JobError::Config(format!(
                    "{} velocity files for {} density frames",
                    names.len(),
                    densities.len()
                )));
            }
            let v = names
                .iter()
                .map(|n| read_volume(base, n)?.into_vector().map_err(|e| bad(n, e)))
                .collect::<Result<Vec<_>, _>>()?;
            if v.iter().any(|v| v.dims() != dims) {
                return Err(JobError::MissingInput("velocity extents differ from the densities".into()));
            }
            v
        }
        None => vec![VectorField::zeros(dims); densities.len()],
    };
    Ok(Inputs { densities, velocities })
}

/// Writes a render and a loss line every `every` iterations, one CSV per
/// frame under `dir`.
struct Checkpointer {
    dir: PathBuf,
    every: usize,
    error: Option<io::Error>,
}

impl Checkpointer {
    fn record(&mut self, p: &Progress<'_>) -> io::Result<()> {
        let csv = self.dir.join(format!("frame_{:04}.csv", p.frame));
        let fresh = p.iteration == 0 && p.pass == smokestyle_core::Pass::Shape;
        let mut file = fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(!fresh)
            .truncate(fresh)
            .open(csv)?;
        if fresh {
            writeln!(file, "iter,pass,loss")?;
        }
        writeln!(file, "{},{},{}", p.iteration, p.pass, p.loss)?;
        if let Some(img) = p.images.first() {
            let name = format!("frame_{:04}_{}_{:05}.png", p.frame, p.pass, p.iteration);
            save_png(img, self.dir.join(name)).map_err(io::Error::other)?;
        }
        Ok(())
    }
}

impl Observer for Checkpointer {
    fn on_iteration(&mut self, p: &Progress<'_>) {
        if self.error.is_none() && p.iteration.is_multiple_of(self.every) {
            self.error = self.record(p).err();
        }
    }
}

/// Routes progress to an optional checkpointer and an optional log line.
struct Monitor {
    checkpoints: Option<Checkpointer>,
    verbose: bool,
    log_every: usize,
}

impl Observer for Monitor {
    fn on_iteration(&mut self, p: &Progress<'_>) {
        if let Some(c) = &mut self.checkpoints {
            c.on_iteration(p);
        }
        if self.verbose && p.iteration.is_multiple_of(self.log_every) {
            eprintln!("frame {:>3} {} iter {:>4} loss {:.6e}", p.frame, p.pass, p.iteration, p.loss);
        }
    }
}

impl Monitor {
    fn finish(self) -> Result<(), JobError> {
        match self.checkpoints.and_then(|c| c.error) {
            Some(e) => Err(JobError::Output(format!("checkpoint: {e}"))),
            None => Ok(()),
        }
    }
}

fn numerical(err: Error, out: &Path, dims: Dims) -> JobError {
    match err {
        Error::NonFinite {
            pass,
            frame,
            iteration,
            snapshot,
        } => {
            let path = out.join(format!("abort_frame_{frame:04}_{pass}.volf"));
            let channels = snapshot.len() / dims.cells();
            let data = snapshot.iter().map(|&v| v as f32).collect();
            let written = Volume::new(dims, channels, data)
                .map_err(|e| e.to_string())
                .and_then(|v| v.save(&path).map_err(|e| e.to_string()));
            let mut message = format!("non-finite loss in the {pass} pass of frame {frame} at iteration {iteration}");
            if let Err(e) = written {
                let _ = write!(message, " (snapshot could not be written: {e})");
            }
            JobError::Numerical { message, snapshot: path }
        }
        other => JobError::Config(other.to_string()),
    }
}

fn shape_passes(
    net: &Vgg19,
    inputs: &Inputs,
    targets: &StyleTargets,
    config: &StylizationConfig,
    jobs: usize,
    monitor: impl Fn() -> Monitor + Sync,
) -> Vec<(Result<ShapeResult, Error>, Monitor)> {
    let n = inputs.densities.len();
    let run = |t: usize| {
        let mut m = monitor();
        let r = shape_pass(net, &inputs.densities[t], &targets.shape, config, t, &mut m);
        (r, m)
    };
    if jobs <= 1 || n == 1 {
        return (0..n).map(run).collect();
    }
    let mut slots: Vec<Option<_>> = (0..n).map(|_| None).collect();
    thread::scope(|s| {
        let workers: Vec<_> = (0..jobs.min(n))
            .map(|w| {
                let run = &run;
                s.spawn(move || (w..n).step_by(jobs).map(|t| (t, run(t))).collect::<Vec<_>>())
            })
            .collect();
        for w in workers {
            for (t, r) in w.join().expect("shape worker panicked") {
                slots[t] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every frame assigned")).collect()
}

fn loss_csv(frame: &StylizedFrame) -> String {
    let mut out = String::from("iter,pass,view,loss\n");
    for h in [&frame.shape_history, &frame.color_history] {
        for (i, (total, views)) in h.total.iter().zip(&h.per_view).enumerate() {
            for (k, l) in views.iter().enumerate() {
                let _ = writeln!(out, "{i},{},{k},{l}", h.pass);
            }
            let _ = writeln!(out, "{i},{},all,{total}", h.pass);
        }
    }
    out
}

fn write_outputs(
    frames: &[StylizedFrame],
    config: &StylizationConfig,
    job: &JobConfig,
    out: &Path,
) -> Result<Vec<PathBuf>, JobError> {
    let fail = |p: &Path, e: &dyn std::fmt::Display| JobError::Output(format!("{}: {e}", p.display()));
    let view = config.views[0];
    let mut files = Vec::new();
    for (t, f) in frames.iter().enumerate() {
        let [gray, color, volf, csv] = frame_files(t).map(|n| out.join(n));
        if job.export.png {
            let img = render_grayscale(&f.d_star, view, &config.render).map_err(|e| JobError::Config(e.to_string()))?;
            save_png(&img, &gray).map_err(|e| fail(&gray, &e))?;
            let img = render_color(&f.d_star, &f.color, view, &config.render).map_err(|e| JobError::Config(e.to_string()))?;
            save_png(&img, &color).map_err(|e| fail(&color, &e))?;
            files.extend([gray, color]);
        }
        if job.export.volf {
            Volume::from(&f.color).save(&volf).map_err(|e| fail(&volf, &e))?;
            files.push(volf);
        }
        if job.export.loss_csv {
            fs::write(&csv, loss_csv(f)).map_err(|e| fail(&csv, &e))?;
            files.push(csv);
        }
    }
    Ok(files)
}

/// Runs the job described by the JSON file at `config_path`.
pub fn run_job(config_path: &Path, options: &JobOptions) -> Result<JobReport, JobError> {
    let text = match fs::read(config_path) {
        Ok(bytes) => String::from_utf8(bytes).map_err(|_| JobError::Config("config is not UTF-8".into()))?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(JobError::MissingInput(format!("config {} does not exist", config_path.display())))
        }
        Err(e) => return Err(JobError::MissingInput(format!("config {}: {e}", config_path.display()))),
    };
    let mut job = JobConfig::from_json(&text).map_err(JobError::Config)?;
    if let Some(seed) = options.seed {
        job.optimize.seed = seed;
    }
    if let Some(every) = options.checkpoint_every {
        job.export.checkpoint_every = every;
    }
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let layers = job.layers().map_err(JobError::Config)?;
    let inputs = load_inputs(&job, &base)?;
    let dims = inputs.densities[0].dims();
    let config = job.stylization(dims).map_err(JobError::Config)?;
    let style = load_style(&job.inputs.style, &base).map_err(|e| match e {
        StyleError::UnknownBuiltin(_) => JobError::Config(e.to_string()),
        StyleError::Image { .. } => JobError::MissingInput(e.to_string()),
    })?;
    let deepest = *layers.iter().max().expect("validated non-empty");
    let (net, network) = load_network(deepest).map_err(|e| JobError::Environment(e.to_string()))?;
    if options.verbose {
        eprintln!("network: {network}");
    }

    let out = base.join(&job.export.output_dir);
    fs::create_dir_all(&out).map_err(|e| JobError::Output(format!("{}: {e}", out.display())))?;
    let checkpoint_dir = out.join("checkpoints");
    if job.export.checkpoint_every > 0 {
        fs::create_dir_all(&checkpoint_dir).map_err(|e| JobError::Output(format!("{}: {e}", checkpoint_dir.display())))?;
    }
    let monitor = || Monitor {
        checkpoints: (job.export.checkpoint_every > 0).then(|| Checkpointer {
            dir: checkpoint_dir.clone(),
            every: job.export.checkpoint_every,
            error: None,
        }),
        verbose: options.verbose,
        log_every: 50,
    };

    let targets = StyleTargets::new(&net, &style, &config).map_err(|e| JobError::Config(e.to_string()))?;
    let mut shapes = Vec::with_capacity(inputs.densities.len());
    for (result, m) in shape_passes(&net, &inputs, &targets, &config, options.jobs.max(1), monitor) {
        m.finish()?;
        shapes.push(result.map_err(|e| numerical(e, &out, dims))?);
    }
    let mut m = monitor();
    let frames = finish_sequence(&net, &inputs.densities, &inputs.velocities, shapes, &targets, &config, &mut m)
        .map_err(|e| numerical(e, &out, dims))?;
    m.finish()?;

    let files = write_outputs(&frames, &config, &job, &out)?;
    Ok(JobReport {
        output_dir: out,
        files,
        network,
        frames,
    })
}
