//! `gsdscope` — ePSF curves, scan images, profile fits, sideband thermometry
//! and saturation budgets from the command line.
//!
//! Exit codes: 0 success, 2 configuration or parse error, 3 numerical error,
//! 4 fit failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gsdscope::beam::{BeamShape, BeamSpec};
use gsdscope::budget::{budget_table, format_budget_text};
use gsdscope::config::RunConfig;
use gsdscope::dynamics::{thermal_excitation_fock_oracle, ArgumentConvention, BetaVariant, PulseSpec};
use gsdscope::fit::{binomial_sigma, fit_gsd_profile, fit_gsd_profile_shots, thermometry, GsdProfileModel};
use gsdscope::frames::k_projections;
use gsdscope::imaging::{epsf_profile, scan_image_with, AxisRange, Dynamics, Profile, Scene};
use gsdscope::io;
use gsdscope::noise::{noisy_image, noisy_profile};
use gsdscope::units::{parse_as, ThermalState, TransitionSpec, TrapSpec, Unit};
use gsdscope::GsdError;
use serde_json::json;

#[derive(Parser)]
#[command(name = "gsdscope", version, about = "Ground-state-depletion imaging of trapped-ion wave packets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Depletion probability against radial distance for an ion at rest.
    Epsf(EpsfArgs),
    /// Synthesise a depletion scan image from a configuration file.
    Scan(ScanArgs),
    /// Fit a measured depletion profile.
    Fit(FitArgs),
    /// Mean axial phonon number from red and blue sideband spectra.
    Thermometry(ThermometryArgs),
    /// Saturation limits of the spurious-excitation channels.
    Budget(BudgetArgs),
    /// Write a model profile, optionally with projection noise.
    SynthProfile(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Normalized,
    Verbatim,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Vortex,
    Gaussian,
}

fn quantity(unit: Unit) -> impl Fn(&str) -> Result<f64, String> + Clone + Send + Sync + 'static {
    move |s: &str| parse_as(s, unit).map_err(|e| e.to_string())
}

#[derive(Args)]
struct EpsfArgs {
    #[arg(long, value_parser = quantity(Unit::Meter))]
    waist: f64,
    #[arg(long, value_parser = quantity(Unit::Watt))]
    power: f64,
    #[arg(long, value_parser = quantity(Unit::Second))]
    tau: f64,
    #[arg(long, value_enum)]
    beam: Shape,
    /// Axial mean phonon number.
    #[arg(long, default_value_t = 1.0)]
    nbar_ax: f64,
    /// Radial mean phonon number (both radial modes).
    #[arg(long, default_value_t = 10.0)]
    nbar_rad: f64,
    /// Average over Fock states instead of the closed-form dephasing model.
    #[arg(long)]
    exact: bool,
    /// Phase argument of the closed form: `normalized` (Ωτ) or `verbatim` (2Ωτ).
    #[arg(long, value_enum, default_value = "normalized")]
    convention: Convention,
    /// Largest radius; defaults to the waist.
    #[arg(long, value_parser = quantity(Unit::Meter))]
    r_max: Option<f64>,
    #[arg(long, default_value_t = 201)]
    points: usize,
    /// Output CSV; standard output if omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = quantity(Unit::Watt))]
    power: Option<f64>,
    #[arg(long, value_parser = quantity(Unit::Meter))]
    waist: Option<f64>,
    #[arg(long, value_parser = quantity(Unit::Second))]
    tau: Option<f64>,
    #[arg(long)]
    nbar_z: Option<f64>,
}

impl Overrides {
    fn load(&self) -> gsdscope::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.power {
            cfg.beam.power = p.into();
        }
        if let Some(w) = self.waist {
            cfg.beam.waist = w.into();
        }
        if let Some(t) = self.tau {
            cfg.pulse.tau = t.into();
        }
        if let Some(n) = self.nbar_z {
            cfg.state.nbar_z = n;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    shots: Option<u32>,
    /// Also write a PGM image.
    #[arg(long)]
    pgm: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    /// Profile CSV.
    data: PathBuf,
    #[command(flatten)]
    common: Overrides,
    /// Shots per point, used when the file has no `sigma_p` column.
    #[arg(long)]
    shots: Option<u32>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ThermometryArgs {
    /// Red sideband spectrum CSV.
    red: PathBuf,
    /// Blue sideband spectrum CSV.
    blue: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p_max: Option<f64>,
    #[arg(long, value_parser = quantity(Unit::Meter))]
    waist: Option<f64>,
    #[arg(long, value_parser = quantity(Unit::Second))]
    tau: Option<f64>,
    /// Budget CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Overrides,
    /// Axial wave-packet width; overrides the configured `nbar_z`.
    #[arg(long, value_parser = quantity(Unit::Meter))]
    sigma_z: Option<f64>,
    #[arg(long, value_parser = quantity(Unit::Meter), default_value = "300nm")]
    half_range: f64,
    #[arg(long, default_value_t = 201)]
    points: usize,
    #[arg(long)]
    shots: Option<u32>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Error carrying its exit code and, for fit failures, a diagnostics body.
struct Failure {
    code: u8,
    message: String,
    diagnostics: Option<serde_json::Value>,
}

impl From<GsdError> for Failure {
    fn from(e: GsdError) -> Self {
        let code = match e {
            GsdError::Parse { .. } | GsdError::Config { .. } | GsdError::InsufficientData { .. } | GsdError::Io(_) => 2,
            GsdError::Domain(_) | GsdError::Accuracy(_) => 3,
            GsdError::RankDeficient { .. } => 4,
        };
        Failure {
            code,
            message: e.to_string(),
            diagnostics: None,
        }
    }
}

fn fit_failure(e: GsdError) -> Failure {
    Failure {
        code: 4,
        message: e.to_string(),
        diagnostics: None,
    }
}

type Outcome = Result<(), Failure>;

fn emit(path: Option<&Path>, text: &str) -> gsdscope::Result<()> {
    match path {
        Some(p) => io::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_epsf(a: &EpsfArgs) -> Outcome {
    if a.points < 2 {
        return Err(GsdError::Parse {
            token: a.points.to_string(),
            reason: "--points needs at least 2".into(),
        }
        .into());
    }
    let shape = match a.beam {
        Shape::Vortex => BeamShape::Vortex,
        Shape::Gaussian => BeamShape::Gaussian,
    };
    let beam = BeamSpec::new(shape, a.power, a.waist, TransitionSpec::default())?;
    let state = ThermalState::new(a.nbar_rad, a.nbar_rad, a.nbar_ax)?;
    let scene = Scene::new(beam, PulseSpec::new(a.tau)?, TrapSpec::default(), state);
    let r_max = a.r_max.unwrap_or(a.waist);
    let radii = AxisRange::new(0.0, r_max, a.points)?.coords();
    let profile = if a.exact {
        let k = k_projections(&scene.frames, beam.transition.wavenumber())?;
        let rabi = beam.rabi_map();
        let values = radii
            .iter()
            .map(|&r| thermal_excitation_fock_oracle(rabi.at_xy(r, 0.0), a.tau, &scene.trap, &state, k, None))
            .collect::<gsdscope::Result<Vec<f64>>>()?;
        Profile::new(radii, values, None)?
    } else {
        let convention = match a.convention {
            Convention::Normalized => ArgumentConvention::Normalized,
            Convention::Verbatim => ArgumentConvention::Verbatim,
        };
        let mode = Dynamics::ThermalClosedForm {
            variant: BetaVariant::EtaSquared,
            convention,
        };
        epsf_profile(&scene, mode, &radii)?
    };
    emit(a.output.as_deref(), &io::format_profile_csv(&profile))?;
    Ok(())
}

fn cmd_scan(a: &ScanArgs) -> Outcome {
    let mut cfg = a.common.load()?;
    let Some(scan) = cfg.scan.as_mut() else {
        return Err(GsdError::Config {
            path: "scan".into(),
            reason: "the scan command needs a `scan` section".into(),
        }
        .into());
    };
    if a.shots.is_some() {
        scan.shots = a.shots;
    }
    scan.pgm |= a.pgm;
    if let Some(d) = &a.out_dir {
        cfg.output.dir = Some(d.clone());
    }
    if let Some(s) = &a.stem {
        cfg.output.stem = Some(s.clone());
    }
    let scan = cfg.scan.clone().expect("checked above");
    let scene = cfg.scene()?;
    let spec = scan.build()?;
    let mut image = scan_image_with(&scene, &spec, &cfg.grid)?;
    if let Some(shots) = scan.shots {
        image = noisy_image(&image, shots, cfg.seed)?;
    }
    let provenance = json!({
        "tool": "gsdscope",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "scan",
        "seed": cfg.seed,
        "config": cfg,
    });
    image.provenance = provenance.clone();

    let dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let stem = cfg.output.stem.clone().unwrap_or_else(|| "scan".into());
    io::write_text(&dir.join(format!("{stem}.csv")), &io::format_image_csv(&image))?;
    if scan.pgm {
        io::write_text(&dir.join(format!("{stem}.pgm")), &io::format_pgm(&image))?;
    }
    let sidecar = serde_json::to_string_pretty(&provenance).expect("provenance serializes");
    io::write_text(&dir.join(format!("{stem}.json")), &(sidecar + "\n"))?;
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Outcome {
    let cfg = a.common.load()?;
    let data = io::parse_profile_csv(&io::read_text(&a.data)?)?;
    let free = cfg.fit.free_params()?;
    let fixed = cfg.fit.fixed_params()?;
    if data.profile.len() <= free.len() {
        return Err(GsdError::InsufficientData {
            points: data.profile.len(),
            free: free.len(),
        }
        .into());
    }
    let model = GsdProfileModel::new(cfg.scene()?, cfg.fit.axis, cfg.grid);
    let opts = cfg.fit.options;
    let file_shots = data.shots.as_ref().and_then(|s| s.iter().all(|&n| n == s[0]).then(|| s[0]));
    let result = match (&data.profile.uncertainty, &data.shots) {
        (Some(sigma), _) => fit_gsd_profile(&model, &data.profile, sigma, &free, &fixed, &opts),
        (None, Some(per_point)) if file_shots.is_none() => {
            let sigma: Vec<f64> = data.profile.value.iter().zip(per_point).map(|(&p, &n)| binomial_sigma(p, n)).collect();
            fit_gsd_profile(&model, &data.profile, &sigma, &free, &fixed, &opts)
        }
        (None, _) => {
            let shots = file_shots.or(a.shots).or(cfg.fit.shots).ok_or_else(|| GsdError::Config {
                path: "fit.shots".into(),
                reason: "profile has no sigma_p column and no shot count was given".into(),
            })?;
            fit_gsd_profile_shots(&model, &data.profile, shots, &free, &fixed, &opts)
        }
    };
    let result = result.map_err(|e| match e {
        GsdError::InsufficientData { .. } | GsdError::Config { .. } | GsdError::Parse { .. } => Failure::from(e),
        e => fit_failure(e),
    })?;
    let body = serde_json::to_string_pretty(&result).expect("fit result serializes") + "\n";
    if !result.converged {
        return Err(Failure {
            code: 4,
            message: format!("fit did not converge after {} iterations", result.iterations),
            diagnostics: Some(serde_json::to_value(&result).expect("fit result serializes")),
        });
    }
    emit(a.output.as_deref(), &body)?;
    Ok(())
}

fn cmd_thermometry(a: &ThermometryArgs) -> Outcome {
    let red = io::parse_spectrum_csv(&io::read_text(&a.red)?)?;
    let blue = io::parse_spectrum_csv(&io::read_text(&a.blue)?)?;
    let sigma = |s: &io::Spectrum| -> Vec<f64> { s.p.iter().zip(&s.shots).map(|(&p, &n)| binomial_sigma(p, n)).collect() };
    let (rs, bs) = (sigma(&red), sigma(&blue));
    let t = thermometry(
        &red.as_profile()?,
        Some(&rs),
        &blue.as_profile()?,
        Some(&bs),
        &Default::default(),
    )
    .map_err(fit_failure)?;
    let body = serde_json::to_string_pretty(&t).expect("thermometry serializes") + "\n";
    emit(a.output.as_deref(), &body)?;
    Ok(())
}

fn cmd_budget(a: &BudgetArgs) -> Outcome {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = a.p_max {
        cfg.budget.p_max = p;
    }
    if let Some(w) = a.waist {
        cfg.budget.waist = Some(w.into());
    }
    if let Some(t) = a.tau {
        cfg.budget.tau = Some(t.into());
    }
    let setup = cfg.setup()?;
    let table = budget_table(&setup, cfg.budget.p_max)?;
    print!("{}", format_budget_text(&table));
    if let Some(path) = &a.csv {
        io::write_text(path, &io::format_budget_csv(&table))?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Outcome {
    let cfg = a.common.load()?;
    if a.points < 2 {
        return Err(GsdError::Parse {
            token: a.points.to_string(),
            reason: "--points needs at least 2".into(),
        }
        .into());
    }
    let model = GsdProfileModel::new(cfg.scene()?, cfg.fit.axis, cfg.grid);
    let x = AxisRange::new(-a.half_range, a.half_range, a.points)?.coords();
    let mut params = BTreeMap::new();
    if let Some(s) = a.sigma_z {
        params.insert("sigma_z".to_string(), s);
    }
    let profile = Profile::new(x.clone(), model.evaluate(&params, &x)?, None)?;
    let profile = match a.shots {
        Some(n) => noisy_profile(&profile, n, cfg.seed)?,
        None => profile,
    };
    emit(a.output.as_deref(), &io::format_profile_csv(&profile))?;
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("GSDSCOPE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::from(GsdError::Config {
            path: "GSDSCOPE_THREADS".into(),
            reason: format!("`{raw}` is not a positive integer"),
        })
    })?;
    // an already-initialised pool only happens when embedded; keep it
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::Epsf(a) => cmd_epsf(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Thermometry(a) => cmd_thermometry(a),
        Command::Budget(a) => cmd_budget(a),
        Command::SynthProfile(a) => cmd_synth(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if let Some(d) = f.diagnostics {
                println!("{}", serde_json::to_string_pretty(&d).expect("diagnostics serialize"));
            }
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
