use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use windline_core::binary::{
    amalgamate, common_wavelength_grid, export_sequence, sequence_from_profiles, EclipseState, OrbitalSolution,
    PhasePoint, WeightRule,
};
use windline_core::fit::{
    fit_parameters, FitContext, FitTarget, FitWindow, FreeParam, NoiseModel, Observation, RefineOptions,
};
use windline_core::sei::synthesize;
use windline_core::spectra::{
    extract_light_curve, load_spectrum, normalize_spectrum, BandKind, Bandpass, LightCurveAnchor, ObservedSpectrum,
};
use windline_core::wind::law_tables;
use windline_core::{DoubletSpec, GridConfig, WindLawParams, WindModel};

/// Bad command-line input that clap cannot catch (malformed ranges, ...).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "windline", about = "Synthetic UV wind-line profiles for hot stars and hot binaries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Single-star profile table plus the wind laws (`laws.csv` beside the output).
    Profile(ProfileArgs),
    /// Composite binary profiles at a list of phases.
    Bsei(BseiArgs),
    /// Phase-folded band light curve of a set of spectra.
    Lightcurve(LightCurveArgs),
    /// Continuum-normalize a spectrum with a straight line through window means.
    Normalize(NormalizeArgs),
    /// Coarse grid refinement of wind parameters against observed spectra.
    Fit(FitArgs),
    /// Noisy synthetic observations of a binary, for closed-loop tests.
    SynthObs(SynthArgs),
    /// Run the HTTP JSON API.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Multiply every resolution knob of the grid by N.
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub grid_res: usize,
    /// JSON grid configuration replacing the default one.
    #[arg(long, value_name = "FILE")]
    pub grid: Option<PathBuf>,
}

impl GridArgs {
    fn config(&self) -> Result<GridConfig> {
        if self.grid_res == 0 {
            return Err(usage("--grid-res must be at least 1"));
        }
        let base = match &self.grid {
            Some(p) => read_json::<GridConfig>(p)?,
            None => GridConfig::default(),
        };
        Ok(base.refined(self.grid_res))
    }
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[arg(long, value_name = "FILE")]
    pub params: PathBuf,
    /// Doublet JSON; CIV when omitted.
    #[arg(long, value_name = "FILE")]
    pub doublet: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum RuleArg {
    ContinuumPreserving,
    Literal,
}

impl From<RuleArg> for WeightRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::ContinuumPreserving => WeightRule::ContinuumPreserving,
            RuleArg::Literal => WeightRule::Literal,
        }
    }
}

#[derive(Args, Debug)]
pub struct BseiArgs {
    #[arg(long, value_name = "FILE")]
    pub params1: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub params2: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub orbit: PathBuf,
    /// JSON list of phases: numbers or `{"phase", "eclipse"}` objects, sorted.
    #[arg(long, value_name = "FILE")]
    pub phases: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub doublet: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "continuum-preserving")]
    pub rule: RuleArg,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct LightCurveArgs {
    #[arg(long, value_name = "FILE")]
    pub orbit: PathBuf,
    /// Band as `MIN:MAX` in Å.
    #[arg(long, value_name = "MIN:MAX")]
    pub band: String,
    #[arg(long, default_value = "band")]
    pub label: String,
    #[arg(long, value_enum, default_value = "continuum")]
    pub kind: KindArg,
    /// Out-of-eclipse phase interval `START:END` used as the normalization
    /// anchor (repeatable); the upper quartile of band fluxes otherwise.
    #[arg(long, value_name = "START:END")]
    pub mask: Vec<String>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Spectrum files, or directories whose `*.csv` files are read in name order.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum KindArg {
    Continuum,
    Wind,
}

#[derive(Args, Debug)]
pub struct NormalizeArgs {
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Continuum window `MIN:MAX` in Å (at least two).
    #[arg(long = "window", value_name = "MIN:MAX", required = true)]
    pub windows: Vec<String>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Directory (or files) of normalized observed spectra.
    #[arg(long = "obs", value_name = "PATH", required = true)]
    pub obs: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub params1: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub params2: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub orbit: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub doublet: Option<PathBuf>,
    /// Free parameter `NAME:STAR:MIN:MAX`, STAR one of primary, secondary, both (repeatable, at most 4).
    #[arg(long = "free", value_name = "SPEC", required = true)]
    pub free: Vec<String>,
    /// Fit window center in Å.
    #[arg(long)]
    pub center: f64,
    /// Fit window half width in Å.
    #[arg(long)]
    pub half_width: f64,
    /// Known per-point noise; otherwise estimated from the `--continuum` windows.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long = "continuum", value_name = "MIN:MAX")]
    pub continuum: Vec<String>,
    /// JSON object mapping spectrum id to eclipse state; unlisted spectra are out of eclipse.
    #[arg(long, value_name = "FILE")]
    pub eclipses: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    #[arg(long, value_enum, default_value = "continuum-preserving")]
    pub rule: RuleArg,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_name = "FILE")]
    pub params1: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub params2: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub orbit: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub doublet: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Gaussian noise per sample, in continuum units.
    #[arg(long, default_value_t = 0.02)]
    pub sigma: f64,
    /// Number of evenly spaced phases.
    #[arg(long = "n-phases", default_value_t = 20)]
    pub n_phases: usize,
    /// Sampling step in Å.
    #[arg(long, default_value_t = 0.25)]
    pub step: f64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Session file loaded at start (if present) and saved on every change.
    #[arg(long, value_name = "FILE")]
    pub session: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Profile(a) => profile(a),
        Command::Bsei(a) => bsei(a),
        Command::Lightcurve(a) => lightcurve(a),
        Command::Normalize(a) => normalize(a),
        Command::Fit(a) => fit(a),
        Command::SynthObs(a) => synth_obs(a),
        Command::Serve(a) => serve(a),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .with_context(|| format!("invalid JSON in {}", path.display()))
}

fn read_params(path: &Path) -> Result<WindLawParams> {
    let p: WindLawParams = read_json(path)?;
    p.validate().with_context(|| format!("parameters in {}", path.display()))?;
    Ok(p)
}

fn read_doublet(path: Option<&Path>) -> Result<DoubletSpec> {
    let d = match path {
        Some(p) => read_json::<DoubletSpec>(p)?,
        None => DoubletSpec::civ(),
    };
    d.validate()?;
    Ok(d)
}

fn read_orbit(path: &Path) -> Result<OrbitalSolution> {
    let o: OrbitalSolution = read_json(path)?;
    o.validate().with_context(|| format!("orbit in {}", path.display()))?;
    Ok(o)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn parse_range(text: &str, what: &str) -> Result<(f64, f64)> {
    let bad = || usage(format!("{what} `{text}` must look like MIN:MAX"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a < b) {
        return Err(usage(format!("{what} `{text}` needs MIN < MAX")));
    }
    Ok((a, b))
}

/// Files named directly plus every `*.csv` inside named directories, the
/// latter sorted by name.
fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(usage("no spectrum files found"));
    }
    Ok(files)
}

fn load_all(inputs: &[PathBuf]) -> Result<Vec<ObservedSpectrum>> {
    collect_inputs(inputs)?
        .iter()
        .map(|f| {
            let s = load_spectrum(f).with_context(|| format!("reading {}", f.display()))?;
            s.validate().with_context(|| format!("validating {}", f.display()))?;
            Ok(s)
        })
        .collect()
}

fn profile(a: ProfileArgs) -> Result<()> {
    let params = read_params(&a.params)?;
    let doublet = read_doublet(a.doublet.as_deref())?;
    let config = a.grid.config()?;
    let prof = synthesize(&params, &doublet, &config)?;
    let mut out = create(&a.out)?;
    prof.write_table(&mut out)?;
    out.flush()?;

    let laws_path = a.out.parent().unwrap_or(Path::new(".")).join("laws.csv");
    let model = WindModel::new(params)?;
    let mut laws = create(&laws_path)?;
    law_tables(&model, 200).write_csv(&mut laws)?;
    laws.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PhaseEntry {
    Bare(f64),
    Full(PhasePoint),
}

fn read_phases(path: &Path) -> Result<Vec<PhasePoint>> {
    let entries: Vec<PhaseEntry> = read_json(path)?;
    let phases: Vec<PhasePoint> = entries
        .into_iter()
        .map(|e| match e {
            PhaseEntry::Bare(p) => PhasePoint::clear(p),
            PhaseEntry::Full(p) => p,
        })
        .collect();
    if !phases.windows(2).all(|w| w[0].phase <= w[1].phase) {
        return Err(usage(format!("phases in {} must be sorted", path.display())));
    }
    if let Some(p) = phases.iter().find(|p| !p.phase.is_finite()) {
        return Err(usage(format!("phase {} is not finite", p.phase)));
    }
    Ok(phases)
}

fn bsei(a: BseiArgs) -> Result<()> {
    let p1 = read_params(&a.params1)?;
    let p2 = read_params(&a.params2)?;
    let orbit = read_orbit(&a.orbit)?;
    let doublet = read_doublet(a.doublet.as_deref())?;
    let phases = read_phases(&a.phases)?;
    let config = a.grid.config()?;
    let f1 = synthesize(&p1, &doublet, &config)?;
    let f2 = if p2 == p1 { f1.clone() } else { synthesize(&p2, &doublet, &config)? };
    let grid = common_wavelength_grid(&f1, &f2);
    let profiles = sequence_from_profiles(&f1, &f2, &orbit, &phases, &grid, a.rule.into())?;
    export_sequence(&a.out, &orbit, &profiles)?;
    if profiles.iter().any(|p| p.clipped) {
        eprintln!("warning: some eclipse weights were negative and clipped to zero (see manifest.json)");
    }
    Ok(())
}

fn lightcurve(a: LightCurveArgs) -> Result<()> {
    let orbit = read_orbit(&a.orbit)?;
    let (lo, hi) = parse_range(&a.band, "band")?;
    let kind = match a.kind {
        KindArg::Continuum => BandKind::Continuum,
        KindArg::Wind => BandKind::Wind,
    };
    let band = Bandpass::new(&a.label, lo, hi, kind)?;
    let anchor = if a.mask.is_empty() {
        LightCurveAnchor::UpperQuartile
    } else {
        LightCurveAnchor::PhaseMask(a.mask.iter().map(|m| parse_range(m, "mask")).collect::<Result<_>>()?)
    };
    let spectra = load_all(&a.inputs)?;
    let curve = extract_light_curve(&spectra, &band, &orbit, &anchor)?;
    let mut out = create(&a.out)?;
    curve.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn continuum_windows(specs: &[String]) -> Result<Vec<Bandpass>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (lo, hi) = parse_range(s, "window")?;
            Ok(Bandpass::new(&format!("continuum{}", i + 1), lo, hi, BandKind::Continuum)?)
        })
        .collect()
}

fn normalize(a: NormalizeArgs) -> Result<()> {
    let spec = load_spectrum(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    spec.validate()?;
    let windows = continuum_windows(&a.windows)?;
    let norm = normalize_spectrum(&spec, &windows)?;
    let mut out = create(&a.out)?;
    norm.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn parse_free(spec: &str) -> Result<FreeParam> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || usage(format!("free parameter `{spec}` must look like NAME:STAR:MIN:MAX"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let star = match parts[1] {
        "primary" | "1" => FitTarget::Primary,
        "secondary" | "2" => FitTarget::Secondary,
        "both" => FitTarget::Both,
        _ => return Err(bad()),
    };
    let min: f64 = parts[2].parse().map_err(|_| bad())?;
    let max: f64 = parts[3].parse().map_err(|_| bad())?;
    Ok(FreeParam { name: parts[0].to_string(), star, min, max })
}

fn fit(a: FitArgs) -> Result<()> {
    let params1 = read_params(&a.params1)?;
    let params2 = read_params(&a.params2)?;
    let orbit = read_orbit(&a.orbit)?;
    let doublet = read_doublet(a.doublet.as_deref())?;
    let free: Vec<FreeParam> = a.free.iter().map(|s| parse_free(s)).collect::<Result<_>>()?;
    let noise = match (a.sigma, a.continuum.is_empty()) {
        (Some(s), true) => NoiseModel::Fixed(s),
        (None, false) => NoiseModel::Continuum(continuum_windows(&a.continuum)?),
        _ => return Err(usage("give exactly one of --sigma and --continuum")),
    };
    let eclipses: std::collections::BTreeMap<String, EclipseState> = match &a.eclipses {
        Some(p) => read_json(p)?,
        None => Default::default(),
    };
    let observations: Vec<Observation> = load_all(&a.obs)?
        .into_iter()
        .map(|spectrum| {
            let eclipse = eclipses.get(&spectrum.id).copied().unwrap_or_default();
            Observation { spectrum, eclipse }
        })
        .collect();
    let ctx = FitContext {
        params1,
        params2,
        doublet,
        orbit,
        grid: a.grid.config()?,
        rule: a.rule.into(),
        window: FitWindow { center: a.center, half_width: a.half_width },
        noise,
    };
    let options = RefineOptions { rounds: a.rounds, ..RefineOptions::default() };
    let outcome = fit_parameters(&ctx, &free, &observations, options)?;

    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    write_json(&a.out.join("fit.json"), &outcome)?;
    write_json(&a.out.join("params1.json"), &outcome.params1)?;
    write_json(&a.out.join("params2.json"), &outcome.params2)?;
    let mut report = create(&a.out.join("report.csv"))?;
    outcome.report.write_csv(&mut report)?;
    report.flush()?;
    for (f, v) in outcome.free.iter().zip(&outcome.best) {
        println!("{} ({:?}) = {v}", f.name, f.star);
    }
    println!("aggregate chi2 = {}", outcome.report.aggregate);
    Ok(())
}

#[derive(Serialize)]
struct SynthManifest<'a> {
    seed: u64,
    sigma: f64,
    params1: &'a WindLawParams,
    params2: &'a WindLawParams,
    orbit: &'a OrbitalSolution,
    doublet: &'a DoubletSpec,
    files: Vec<String>,
}

fn synth_obs(a: SynthArgs) -> Result<()> {
    let p1 = read_params(&a.params1)?;
    let p2 = read_params(&a.params2)?;
    let orbit = read_orbit(&a.orbit)?;
    let doublet = read_doublet(a.doublet.as_deref())?;
    if a.n_phases == 0 {
        return Err(usage("--n-phases must be positive"));
    }
    if !(a.step > 0.0) {
        return Err(usage("--step must be positive"));
    }
    let normal = Normal::new(0.0, a.sigma).map_err(|e| usage(format!("bad --sigma: {e}")))?;
    let config = a.grid.config()?;
    let f1 = Arc::new(synthesize(&p1, &doublet, &config)?);
    let f2 = if p2 == p1 { Arc::clone(&f1) } else { Arc::new(synthesize(&p2, &doublet, &config)?) };

    // The line region plus continuum on both sides.
    let c = windline_core::sei::SPEED_OF_LIGHT_KMS;
    let v = 1.5 * p1.v_inf.max(p2.v_inf);
    let lo = doublet.lambda_blue * (1.0 - v / c);
    let hi = doublet.lambda_red * (1.0 + v / c);
    let n = ((hi - lo) / a.step).floor() as usize + 1;
    let wavelengths: Vec<f64> = (0..n).map(|i| lo + i as f64 * a.step).collect();

    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut files = Vec::with_capacity(a.n_phases);
    for k in 0..a.n_phases {
        let phase = k as f64 / a.n_phases as f64;
        let model = amalgamate(&f1, &f2, phase, &orbit, &EclipseState::default(), &wavelengths, WeightRule::default())?;
        let fluxes = model.flux.iter().map(|f| (f + normal.sample(&mut rng)).max(0.0)).collect();
        let spec = ObservedSpectrum {
            id: format!("syn{k:03}"),
            hjd: orbit.t0 + phase * orbit.period_days,
            wavelengths: wavelengths.clone(),
            fluxes,
            phase: None,
        };
        let name = format!("{}.csv", spec.id);
        spec.save(&a.out.join(&name))?;
        files.push(name);
    }
    let manifest = SynthManifest {
        seed: a.seed,
        sigma: a.sigma,
        params1: &p1,
        params2: &p2,
        orbit: &orbit,
        doublet: &doublet,
        files,
    };
    write_json(&a.out.join("synth.json"), &manifest)?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let state = Arc::new(windline_service::AppState::open(a.session.clone())?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .with_context(|| format!("cannot bind {}:{}", a.host, a.port))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        windline_service::serve(listener, state).await?;
        Ok(())
    })
}
