//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::fitdata::{self, fit_gaussian_dip, fit_model, FitError, ModelFitOptions};
use crate::hom::{
    compute_curve, delay_grid, dip_metrics, Engine, HomError, HomSettings, MetricsReport,
};
use crate::imperfections::{
    solve_angle_for_overlap, spatial_overlap, ImperfectionError, SpatialGeometry,
};
use crate::jsa::{jsa_grid, JsaError};
use crate::quadrature::QuadratureSettings;
use crate::units::{
    build_config, ExperimentConfig, FilterProfile, FilterSpec, FwhmConvention, LabConfig,
    UnitsError,
};

const PRECEDENCE: &str = "Configuration precedence, lowest to highest: built-in reference \
parameters, the JSON document given with --config, then individual flags. \
Thread count: --threads, else HOMSIM_THREADS, else all cores.";

#[derive(Debug, Parser)]
#[command(name = "homsim", version, about = "Two-photon spectra and HOM dips from a dual-pump fiber source", after_help = PRECEDENCE)]
pub struct Cli {
    /// Worker threads; results do not depend on the count.
    #[arg(long, global = true, env = "HOMSIM_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the joint spectral amplitude on a square grid.
    Jsa(JsaArgs),
    /// Coincidence rate against delay, with dip metrics on stdout.
    Dip(DipArgs),
    /// Fit a dip model to measured coincidences.
    Fit(FitArgs),
    /// Spatial-mode overlap for an angle, or the angle for a target overlap.
    #[command(alias = "overlap-solve")]
    Overlap(OverlapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterShape {
    Gaussian,
    Supergaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Convention {
    Power,
    Amplitude,
}

#[derive(Debug, Clone, Args)]
pub struct PhysicsArgs {
    /// JSON configuration document.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub length_m: Option<f64>,
    #[arg(long)]
    pub beta2_ps2_per_km: Option<f64>,
    #[arg(long = "gamma-per-w-m")]
    pub gamma_per_w_m: Option<f64>,
    #[arg(long = "peak-power-w")]
    pub peak_power_w: Option<f64>,
    #[arg(long)]
    pub pump_fwhm_nm: Option<f64>,
    /// Replace the filter in both arms by this shape.
    #[arg(long, value_enum)]
    pub filter_shape: Option<FilterShape>,
    #[arg(long)]
    pub filter_fwhm_nm: Option<f64>,
    #[arg(long, value_enum)]
    pub fwhm_convention: Option<Convention>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct JsaArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    /// Points per axis.
    #[arg(long, default_value_t = 65)]
    pub n: usize,
    /// Half-width of each axis in units of the filter width σ₀.
    #[arg(long, default_value_t = 4.0)]
    pub span: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DipArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    /// general, gaussian, supergaussian or asymmetric.
    #[arg(long, default_value = "gaussian")]
    pub engine: Engine,
    #[arg(long, default_value_t = -15.0, allow_hyphen_values = true)]
    pub start_ps: f64,
    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    pub stop_ps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub step_ps: f64,
    /// Relative widening of the idler-arm filter; needs the general or
    /// asymmetric engine.
    #[arg(long, default_value_t = 0.0)]
    pub filter_mismatch: f64,
    /// Gauss-Legendre points per panel for the super-Gaussian engine.
    #[arg(long)]
    pub tensor_order: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMode {
    GaussianDip,
    Model,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    /// CSV with delay_ps,counts[,sigma].
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian-dip")]
    pub mode: FitMode,
    /// Engine behind `--mode model`.
    #[arg(long, default_value = "gaussian")]
    pub engine: Engine,
    #[arg(long)]
    pub fix_baseline: bool,
    #[arg(long)]
    pub fix_center: bool,
    #[arg(long)]
    pub fix_scale: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OverlapArgs {
    /// Overlap to solve for, strictly between 0 and 1.
    #[arg(
        long,
        conflicts_with = "theta_urad",
        required_unless_present = "theta_urad"
    )]
    pub target: Option<f64>,
    /// Angle at which to evaluate the overlap.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_urad: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub d_mm: f64,
    #[arg(long, default_value_t = 1550.0)]
    pub lambda_nm: f64,
    #[arg(long, default_value = "overlap.json")]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<UnitsError> for CliError {
    fn from(e: UnitsError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<HomError> for CliError {
    fn from(e: HomError) -> Self {
        match e {
            HomError::UnsupportedFilter { .. } | HomError::InvalidDelays(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<JsaError> for CliError {
    fn from(e: JsaError) -> Self {
        match e {
            JsaError::InvalidGrid(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<ImperfectionError> for CliError {
    fn from(e: ImperfectionError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Io { path, source } => CliError::Io {
                path,
                message: source.to_string(),
            },
            FitError::Parse { .. } | FitError::InsufficientData { .. } | FitError::Invalid(_) => {
                CliError::Config(e.to_string())
            }
            FitError::Hom(h) => h.into(),
            FitError::NotConverged { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

/// Record written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub arguments: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lab_config: Option<LabConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hom_settings: Option<HomSettings>,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
    pub timings_s: Vec<(String, f64)>,
}

impl RunManifest {
    fn new(command: &'static str) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            arguments: std::env::args().skip(1).collect(),
            lab_config: None,
            config: None,
            engine: None,
            quadrature: None,
            hom_settings: None,
            outputs: Vec::new(),
            notes: Vec::new(),
            timings_s: Vec::new(),
        }
    }

    fn time(&mut self, label: &str, since: Instant) {
        self.timings_s
            .push((label.to_string(), since.elapsed().as_secs_f64()));
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn finish_manifest(out: &Path, mut manifest: RunManifest) -> Result<(), CliError> {
    let path = manifest_path(out);
    manifest.outputs.push(path.display().to_string());
    write_json(&path, &manifest)
}

/// Reference parameters, then the config file, then flags.
pub fn resolve_lab_config(p: &PhysicsArgs) -> Result<LabConfig, CliError> {
    let mut lab = match &p.config {
        None => LabConfig::reference(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?
        }
    };
    if let Some(v) = p.length_m {
        lab.length_m = v;
    }
    if let Some(v) = p.beta2_ps2_per_km {
        lab.beta2_ps2_per_km = v;
    }
    if let Some(v) = p.gamma_per_w_m {
        lab.gamma_per_w_m = v;
    }
    if let Some(v) = p.peak_power_w {
        lab.peak_power_w = v;
    }
    if let Some(v) = p.pump_fwhm_nm {
        lab.pump_fwhm_nm = v;
    }
    if let Some(c) = p.fwhm_convention {
        lab.fwhm_convention = match c {
            Convention::Power => FwhmConvention::Power,
            Convention::Amplitude => FwhmConvention::Amplitude,
        };
    }
    if p.filter_shape.is_some() || p.filter_fwhm_nm.is_some() {
        let fwhm = p.filter_fwhm_nm.unwrap_or(match lab.filter.signal {
            FilterProfile::Gaussian { fwhm_nm } | FilterProfile::SuperGaussian4 { fwhm_nm } => {
                fwhm_nm
            }
            FilterProfile::Cascade {
                gaussian_fwhm_nm, ..
            } => gaussian_fwhm_nm,
        });
        let shape = p.filter_shape.unwrap_or(match lab.filter.signal {
            FilterProfile::SuperGaussian4 { .. } => FilterShape::Supergaussian,
            _ => FilterShape::Gaussian,
        });
        let profile = match shape {
            FilterShape::Gaussian => FilterProfile::Gaussian { fwhm_nm: fwhm },
            FilterShape::Supergaussian => FilterProfile::SuperGaussian4 { fwhm_nm: fwhm },
        };
        lab.filter = FilterSpec::symmetric(profile);
    }
    Ok(lab)
}

fn quadrature_settings(p: &PhysicsArgs) -> Result<QuadratureSettings, CliError> {
    let mut q = QuadratureSettings::default();
    if let Some(v) = p.rel_tol {
        q.rel_tol = v;
    }
    if let Some(v) = p.abs_tol {
        q.abs_tol = v;
    }
    q.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(q)
}

const SUPER_GAUSSIAN_NOTE: &str = "super-Gaussian filter width sigma_0 is calibrated so the \
power transmission exp(-2 nu^4/sigma_0^4) falls to one half at the configured half-width";

fn with_super_gaussian(lab: &mut LabConfig, notes: &mut Vec<String>) {
    let convert = |p: FilterProfile| match p {
        FilterProfile::Gaussian { fwhm_nm } => FilterProfile::SuperGaussian4 { fwhm_nm },
        other => other,
    };
    let converted = FilterSpec {
        signal: convert(lab.filter.signal),
        idler: lab.filter.idler.map(convert),
    };
    if converted != lab.filter {
        notes.push("Gaussian filters replaced by super-Gaussian filters of the same FWHM for the super_gaussian engine".into());
        lab.filter = converted;
    }
    notes.push(SUPER_GAUSSIAN_NOTE.into());
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("homsim: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Jsa(a) => cmd_jsa(&a),
        Command::Dip(a) => cmd_dip(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Overlap(a) => cmd_overlap(&a),
    })
}

pub fn cmd_jsa(a: &JsaArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("jsa");
    let lab = resolve_lab_config(&a.physics)?;
    let cfg = build_config(&lab)?;
    let quad = quadrature_settings(&a.physics)?;
    let grid = jsa_grid(&cfg, a.n, a.span, &quad)?;
    manifest.time("compute", started);
    write_with(&a.out, |w| grid.write_csv(w))?;
    manifest.outputs.push(a.out.display().to_string());
    manifest.lab_config = Some(lab);
    manifest.config = Some(cfg);
    manifest.quadrature = Some(quad);
    manifest.time("total", started);
    finish_manifest(&a.out, manifest)
}

pub fn cmd_dip(a: &DipArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("dip");
    let mut lab = resolve_lab_config(&a.physics)?;
    let mut engine = a.engine;
    if engine == Engine::SuperGaussian {
        with_super_gaussian(&mut lab, &mut manifest.notes);
    }
    if !(a.filter_mismatch.is_finite() && a.filter_mismatch > -1.0) {
        return Err(CliError::Config(format!(
            "--filter-mismatch must exceed -1, got {}",
            a.filter_mismatch
        )));
    }
    if a.filter_mismatch != 0.0 {
        match engine {
            Engine::GeneralSpectral | Engine::Asymmetric => engine = Engine::Asymmetric,
            other => {
                return Err(CliError::Config(format!(
                    "--filter-mismatch needs the general engine, not {other}"
                )))
            }
        }
        lab.filter.idler = Some(lab.filter.signal.scaled(1.0 + a.filter_mismatch));
        manifest.notes.push(format!(
            "idler filter FWHM scaled by {}",
            1.0 + a.filter_mismatch
        ));
    }
    let cfg = build_config(&lab)?;
    let quad = quadrature_settings(&a.physics)?;
    let mut hom = HomSettings {
        quadrature: quad,
        ..HomSettings::default()
    };
    if let Some(order) = a.tensor_order {
        hom.tensor_order = order;
    }
    let delays = delay_grid(a.start_ps, a.stop_ps, a.step_ps)?;
    let curve = compute_curve(engine, &cfg, &hom, &delays)?;
    manifest.time("compute", started);
    write_with(&a.out, |w| curve.write_csv(w))?;
    manifest.outputs.push(a.out.display().to_string());

    let metrics = dip_metrics(&curve).map_err(|e| CliError::Numerical(e.to_string()))?;
    if metrics.non_monotone {
        manifest
            .notes
            .push("dip flanks are not monotone near the half level".into());
    }
    let report = MetricsReport::new(&metrics, engine);
    let metrics_path = a.out.with_extension("metrics.json");
    write_json(&metrics_path, &report)?;
    manifest.outputs.push(metrics_path.display().to_string());
    println!(
        "{}",
        serde_json::to_string(&report).map_err(|e| CliError::Numerical(e.to_string()))?
    );

    manifest.lab_config = Some(lab);
    manifest.config = Some(cfg);
    manifest.engine = Some(engine);
    manifest.quadrature = Some(quad);
    manifest.hom_settings = Some(hom);
    manifest.time("total", started);
    finish_manifest(&a.out, manifest)
}

pub fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("fit");
    let data = fitdata::ingest_csv(&a.data)?;
    let result = match a.mode {
        FitMode::GaussianDip => fit_gaussian_dip(&data)?,
        FitMode::Model => {
            let mut lab = resolve_lab_config(&a.physics)?;
            if a.engine == Engine::SuperGaussian {
                with_super_gaussian(&mut lab, &mut manifest.notes);
            }
            let cfg = build_config(&lab)?;
            let quad = quadrature_settings(&a.physics)?;
            let opts = ModelFitOptions {
                free_baseline: !a.fix_baseline,
                free_center: !a.fix_center,
                free_scale: !a.fix_scale,
                hom: HomSettings {
                    quadrature: quad,
                    ..HomSettings::default()
                },
                ..ModelFitOptions::default()
            };
            let result = fit_model(&data, &cfg, a.engine, &opts)?;
            manifest.lab_config = Some(lab);
            manifest.config = Some(cfg);
            manifest.engine = Some(a.engine);
            manifest.quadrature = Some(quad);
            manifest.hom_settings = Some(opts.hom);
            result
        }
    };
    manifest.time("fit", started);
    write_json(&a.out, &result)?;
    manifest.outputs.push(a.out.display().to_string());
    println!(
        "{}",
        serde_json::to_string(&result.params).map_err(|e| CliError::Numerical(e.to_string()))?
    );
    manifest.time("total", started);
    finish_manifest(&a.out, manifest)
}

#[derive(Debug, Serialize)]
struct OverlapReport {
    lens_diameter_m: f64,
    wavelength_m: f64,
    theta_rad: f64,
    theta_urad: f64,
    overlap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<f64>,
}

pub fn cmd_overlap(a: &OverlapArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("overlap");
    let d = a.d_mm * 1e-3;
    let lambda = a.lambda_nm * 1e-9;
    let theta = match (a.target, a.theta_urad) {
        (Some(t), _) => solve_angle_for_overlap(t, d, lambda)?,
        (None, Some(u)) => u * 1e-6,
        (None, None) => return Err(CliError::Config("need --target or --theta-urad".into())),
    };
    let overlap = spatial_overlap(&SpatialGeometry::new(d, lambda, theta)?)?;
    let report = OverlapReport {
        lens_diameter_m: d,
        wavelength_m: lambda,
        theta_rad: theta,
        theta_urad: theta * 1e6,
        overlap,
        target: a.target,
    };
    println!("theta = {} urad, overlap = {}", theta * 1e6, overlap);
    write_json(&a.out, &report)?;
    manifest.outputs.push(a.out.display().to_string());
    manifest.time("total", started);
    finish_manifest(&a.out, manifest)
}
