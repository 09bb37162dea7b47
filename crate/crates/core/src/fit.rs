//! Model-versus-observation scores and a coarse bounded grid search.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::binary::{amalgamate, EclipseState, OrbitalSolution, WeightRule};
use crate::error::{ModelError, Result};
use crate::format::fmt_sig7;
use crate::quad::interp_linear;
use crate::sei::{synthesize, GridConfig, SingleStarProfile};
use crate::spectra::{phase_fold, truncate_window, Bandpass, ObservedSpectrum};
use crate::wind::{DoubletSpec, WindLawParams};

/// Wavelength window the scores are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitWindow {
    pub center: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Known per-point uncertainty.
    Fixed(f64),
    /// Sample standard deviation of `F_obs − 1` over these windows.
    Continuum(Vec<Bandpass>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goodness {
    pub rms: f64,
    pub chi2_reduced: f64,
    pub n_points: usize,
    pub sigma: f64,
}

/// Noise estimate from continuum scatter of a normalized spectrum.
pub fn estimate_sigma(observed: &ObservedSpectrum, windows: &[Bandpass]) -> Result<f64> {
    let dev: Vec<f64> = observed
        .wavelengths
        .iter()
        .zip(&observed.fluxes)
        .filter(|(l, _)| windows.iter().any(|w| **l >= w.lambda_min && **l <= w.lambda_max))
        .map(|(_, f)| f - 1.0)
        .collect();
    if dev.len() < 2 {
        return Err(ModelError::Coverage(format!(
            "spectrum {} has fewer than two continuum samples for the noise estimate",
            observed.id
        )));
    }
    let n = dev.len() as f64;
    let mean = dev.iter().sum::<f64>() / n;
    let var = dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma = var.sqrt();
    if !(sigma > 0.0) {
        return Err(ModelError::Numeric(format!("continuum scatter of {} is zero", observed.id)));
    }
    Ok(sigma)
}

fn resolve_sigma(observed: &ObservedSpectrum, noise: &NoiseModel) -> Result<f64> {
    match noise {
        NoiseModel::Fixed(s) if *s > 0.0 => Ok(*s),
        NoiseModel::Fixed(s) => Err(ModelError::invalid(&["sigma"], format!("sigma must be positive, got {s}"))),
        NoiseModel::Continuum(w) => estimate_sigma(observed, w),
    }
}

/// Scores a model sampled on `model_wavelengths` against the observed
/// points inside `window`. The model is interpolated linearly onto the
/// observed wavelengths and must cover the whole window.
pub fn goodness(
    model_wavelengths: &[f64],
    model_flux: &[f64],
    observed: &ObservedSpectrum,
    window: FitWindow,
    noise: &NoiseModel,
) -> Result<Goodness> {
    if model_wavelengths.len() != model_flux.len() || model_wavelengths.len() < 2 {
        return Err(ModelError::Contract("model needs matching wavelength and flux arrays of length ≥ 2".into()));
    }
    let sigma = resolve_sigma(observed, noise)?;
    let obs = truncate_window(observed, window.center, window.half_width)?;
    if obs.is_empty() {
        return Err(ModelError::Coverage(format!("no observed samples of {} inside the window", observed.id)));
    }
    let (lo, hi) = (model_wavelengths[0], model_wavelengths[model_wavelengths.len() - 1]);
    if obs.wavelengths[0] < lo || obs.wavelengths[obs.len() - 1] > hi {
        return Err(ModelError::Coverage("model does not cover the fit window".into()));
    }
    let model: Vec<f64> =
        obs.wavelengths.iter().map(|&l| interp_linear(model_wavelengths, model_flux, l, f64::NAN)).collect();
    Ok(score(&model, &obs.fluxes, sigma))
}

fn score(model: &[f64], observed: &[f64], sigma: f64) -> Goodness {
    let n = model.len() as f64;
    let ss: f64 = model.iter().zip(observed).map(|(m, o)| (m - o).powi(2)).sum();
    Goodness { rms: (ss / n).sqrt(), chi2_reduced: ss / n / (sigma * sigma), n_points: model.len(), sigma }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseScore {
    pub spectrum_id: String,
    pub phase: f64,
    pub rms: f64,
    pub chi2: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub phases: Vec<PhaseScore>,
    /// Mean reduced chi-square over phases.
    pub aggregate: f64,
}

impl FitReport {
    pub fn from_scores(phases: Vec<PhaseScore>) -> Result<Self> {
        if phases.is_empty() {
            return Err(ModelError::Contract("a fit report needs at least one phase".into()));
        }
        let aggregate = phases.iter().map(|p| p.chi2).sum::<f64>() / phases.len() as f64;
        Ok(FitReport { phases, aggregate })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "phase,rms,chi2")?;
        for p in &self.phases {
            writeln!(out, "{},{},{}", fmt_sig7(p.phase), fmt_sig7(p.rms), fmt_sig7(p.chi2))?;
        }
        Ok(())
    }
}

/// Phases ordered from best to worst rms; ties keep their report order.
pub fn phase_quality_profile(report: &FitReport) -> Result<Vec<(f64, f64)>> {
    if report.phases.len() < 2 {
        return Err(ModelError::Contract("ranking needs at least two phases".into()));
    }
    let mut ranked: Vec<(f64, f64)> = report.phases.iter().map(|p| (p.phase, p.rms)).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(ranked)
}

/// One bounded search axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchAxis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    /// Initial incumbent, clamped into bounds; the box center when absent.
    #[serde(default)]
    pub start: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineOptions {
    pub points_per_axis: usize,
    /// Refinement rounds after the initial scan of the full bounds.
    pub rounds: usize,
    /// Upper limit on coordinate sweeps per round; sweeping stops early once
    /// a full sweep leaves the incumbent unchanged.
    pub max_sweeps: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { points_per_axis: 9, rounds: 3, max_sweeps: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    pub best: Vec<f64>,
    pub score: f64,
    /// Distinct points evaluated.
    pub evaluations: usize,
    /// Grid spacing per axis in the last round.
    pub final_steps: Vec<f64>,
}

pub const MAX_FREE_PARAMS: usize = 4;

/// Coordinate-descent grid search.
///
/// The incumbent starts at each axis's `start` (or box center). Each round
/// sweeps the axes in turn, scanning `points_per_axis` evenly spaced values
/// of the current box with the other coordinates held at the incumbent, and
/// repeats the sweep while it still improves. The incumbent moves only on
/// strict improvement and a scan keeps the lowest value among equal scores.
/// After each round every box shrinks ×3 around the incumbent, shifted to
/// stay inside the bounds.
pub fn grid_refine<F>(axes: &[SearchAxis], options: RefineOptions, mut objective: F) -> Result<RefineResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if axes.is_empty() || axes.len() > MAX_FREE_PARAMS {
        return Err(ModelError::Contract(format!("between 1 and {MAX_FREE_PARAMS} free parameters required")));
    }
    if options.points_per_axis < 2 {
        return Err(ModelError::Contract("need at least two points per axis".into()));
    }
    for a in axes {
        if !(a.min < a.max) || !a.min.is_finite() || !a.max.is_finite() {
            return Err(ModelError::invalid(&[a.name.as_str()], format!("bad bounds [{}, {}]", a.min, a.max)));
        }
        if a.start.is_some_and(|s| !s.is_finite()) {
            return Err(ModelError::invalid(&[a.name.as_str()], "start must be finite"));
        }
    }
    let mut cache: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut eval = |point: &[f64]| -> Result<f64> {
        let key: Vec<u64> = point.iter().map(|v| v.to_bits()).collect();
        if let Some(&s) = cache.get(&key) {
            return Ok(s);
        }
        let s = objective(point)?;
        if s.is_nan() {
            return Err(ModelError::Numeric(format!("objective returned NaN at {point:?}")));
        }
        cache.insert(key, s);
        Ok(s)
    };

    let n = options.points_per_axis;
    let mut boxes: Vec<(f64, f64)> = axes.iter().map(|a| (a.min, a.max)).collect();
    let mut incumbent: Vec<f64> =
        axes.iter().map(|a| a.start.unwrap_or(0.5 * (a.min + a.max)).clamp(a.min, a.max)).collect();
    let mut best = eval(&incumbent)?;
    for round in 0..=options.rounds {
        if round > 0 {
            for (k, a) in axes.iter().enumerate() {
                let half = (boxes[k].1 - boxes[k].0) / 6.0;
                let (mut lo, mut hi) = (incumbent[k] - half, incumbent[k] + half);
                if lo < a.min {
                    (lo, hi) = (a.min, a.min + 2.0 * half);
                }
                if hi > a.max {
                    (lo, hi) = (a.max - 2.0 * half, a.max);
                }
                boxes[k] = (lo, hi);
            }
        }
        for _ in 0..options.max_sweeps.max(1) {
            let mut moved = false;
            for k in 0..axes.len() {
                let (lo, hi) = boxes[k];
                let step = (hi - lo) / (n - 1) as f64;
                let mut scan_best: Option<(f64, f64)> = None;
                for i in 0..n {
                    let v = if i == n - 1 { hi } else { lo + i as f64 * step };
                    let mut point = incumbent.clone();
                    point[k] = v;
                    let s = eval(&point)?;
                    if scan_best.is_none_or(|(_, bs)| s < bs) {
                        scan_best = Some((v, s));
                    }
                }
                let (v, s) = scan_best.expect("scan has at least two points");
                if s < best {
                    incumbent[k] = v;
                    best = s;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }
    let final_steps = boxes.iter().map(|(lo, hi)| (hi - lo) / (n - 1) as f64).collect();
    let evaluations = cache.len();
    Ok(RefineResult { best: incumbent, score: best, evaluations, final_steps })
}

/// Which star's parameter a free parameter controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitTarget {
    Primary,
    Secondary,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParam {
    pub name: String,
    pub star: FitTarget,
    pub min: f64,
    pub max: f64,
}

/// One observed spectrum and its eclipse condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub spectrum: ObservedSpectrum,
    #[serde(default)]
    pub eclipse: EclipseState,
}

/// Everything held fixed during a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitContext {
    pub params1: WindLawParams,
    pub params2: WindLawParams,
    pub doublet: DoubletSpec,
    pub orbit: OrbitalSolution,
    pub grid: GridConfig,
    pub rule: WeightRule,
    pub window: FitWindow,
    pub noise: NoiseModel,
}

/// Single-star profiles keyed by their exact parameters.
#[derive(Debug, Default)]
pub struct ProfileCache {
    entries: HashMap<String, Arc<SingleStarProfile>>,
}

impl ProfileCache {
    pub fn get_or_synthesize(
        &mut self,
        params: &WindLawParams,
        doublet: &DoubletSpec,
        grid: &GridConfig,
    ) -> Result<Arc<SingleStarProfile>> {
        let key = serde_json::to_string(&(params, doublet, grid))?;
        if let Some(p) = self.entries.get(&key) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(synthesize(params, doublet, grid)?);
        self.entries.insert(key, Arc::clone(&p));
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Phase of an observation: its stored phase if present, otherwise folded from HJD.
pub fn observation_phase(spec: &ObservedSpectrum, orbit: &OrbitalSolution) -> Result<f64> {
    match spec.phase {
        Some(p) => Ok(p.rem_euclid(1.0)),
        None => phase_fold(spec.hjd, orbit),
    }
}

/// Scores the composite model for `params1`/`params2` against every observation.
pub fn evaluate(
    ctx: &FitContext,
    params1: &WindLawParams,
    params2: &WindLawParams,
    observations: &[Observation],
    cache: &mut ProfileCache,
) -> Result<FitReport> {
    if observations.is_empty() {
        return Err(ModelError::Contract("no observations supplied".into()));
    }
    let f1 = cache.get_or_synthesize(params1, &ctx.doublet, &ctx.grid)?;
    let f2 = cache.get_or_synthesize(params2, &ctx.doublet, &ctx.grid)?;
    let mut phases = Vec::with_capacity(observations.len());
    for obs in observations {
        let spec = &obs.spectrum;
        let sigma = resolve_sigma(spec, &ctx.noise)?;
        let win = truncate_window(spec, ctx.window.center, ctx.window.half_width)?;
        if win.is_empty() {
            return Err(ModelError::Coverage(format!("no samples of {} inside the window", spec.id)));
        }
        let phase = observation_phase(spec, &ctx.orbit)?;
        let model = amalgamate(&f1, &f2, phase, &ctx.orbit, &obs.eclipse, &win.wavelengths, ctx.rule)?;
        let g = score(&model.flux, &win.fluxes, sigma);
        phases.push(PhaseScore {
            spectrum_id: spec.id.clone(),
            phase,
            rms: g.rms,
            chi2: g.chi2_reduced,
            n_points: g.n_points,
        });
    }
    FitReport::from_scores(phases)
}

fn apply(ctx: &FitContext, free: &[FreeParam], values: &[f64]) -> Result<(WindLawParams, WindLawParams)> {
    let (mut p1, mut p2) = (ctx.params1.clone(), ctx.params2.clone());
    for (f, v) in free.iter().zip(values) {
        if matches!(f.star, FitTarget::Primary | FitTarget::Both) {
            p1.set_named(&f.name, *v)?;
        }
        if matches!(f.star, FitTarget::Secondary | FitTarget::Both) {
            p2.set_named(&f.name, *v)?;
        }
    }
    Ok((p1, p2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub params1: WindLawParams,
    pub params2: WindLawParams,
    pub free: Vec<FreeParam>,
    pub best: Vec<f64>,
    pub final_steps: Vec<f64>,
    pub evaluations: usize,
    pub report: FitReport,
}

/// Grid refinement of the free parameters against the observations; the
/// score is the report's aggregate reduced chi-square.
pub fn fit_parameters(
    ctx: &FitContext,
    free: &[FreeParam],
    observations: &[Observation],
    options: RefineOptions,
) -> Result<FitOutcome> {
    if observations.is_empty() {
        return Err(ModelError::Contract("no observations supplied".into()));
    }
    // Reject unknown names before any synthesis.
    apply(ctx, free, &free.iter().map(|f| f.min).collect::<Vec<_>>())?;
    // Each axis starts from the context's current value of its parameter.
    let axes: Vec<SearchAxis> = free
        .iter()
        .map(|f| {
            let current = match f.star {
                FitTarget::Secondary => &ctx.params2,
                _ => &ctx.params1,
            };
            Ok(SearchAxis { name: f.name.clone(), min: f.min, max: f.max, start: Some(current.get_named(&f.name)?) })
        })
        .collect::<Result<_>>()?;
    let mut cache = ProfileCache::default();
    let result = grid_refine(&axes, options, |v| {
        let (p1, p2) = apply(ctx, free, v)?;
        Ok(evaluate(ctx, &p1, &p2, observations, &mut cache)?.aggregate)
    })?;
    let (params1, params2) = apply(ctx, free, &result.best)?;
    let report = evaluate(ctx, &params1, &params2, observations, &mut cache)?;
    Ok(FitOutcome {
        params1,
        params2,
        free: free.to_vec(),
        best: result.best,
        final_steps: result.final_steps,
        evaluations: result.evaluations,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::BandKind;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn spectrum(fluxes: Vec<f64>) -> ObservedSpectrum {
        let wavelengths = (0..fluxes.len()).map(|i| 1540.0 + 0.1 * i as f64).collect();
        ObservedSpectrum { id: "s".into(), hjd: 0.0, wavelengths, fluxes, phase: None }
    }

    fn whole(s: &ObservedSpectrum) -> FitWindow {
        let lo = s.wavelengths[0];
        let hi = s.wavelengths[s.len() - 1];
        FitWindow { center: 0.5 * (lo + hi), half_width: 0.5 * (hi - lo) }
    }

    #[test]
    fn goodness_examples() {
        let f: Vec<f64> = (0..100).map(|i| 1.0 - 0.3 * (-((i as f64 - 50.0) / 10.0).powi(2)).exp()).collect();
        let obs = spectrum(f.clone());
        let g = goodness(&obs.wavelengths, &f, &obs, whole(&obs), &NoiseModel::Fixed(0.1)).unwrap();
        assert_eq!((g.rms, g.chi2_reduced), (0.0, 0.0));
        let shifted: Vec<f64> = f.iter().map(|v| v + 0.1).collect();
        let g = goodness(&obs.wavelengths, &shifted, &obs, whole(&obs), &NoiseModel::Fixed(0.1)).unwrap();
        assert!((g.rms - 0.1).abs() < 1e-12 && (g.chi2_reduced - 1.0).abs() < 1e-10);
        assert_eq!(g.n_points, 100);
    }

    #[test]
    fn goodness_statistical() {
        let model: Vec<f64> = (0..100).map(|i| 1.0 - 0.2 * (i as f64 / 20.0).sin().abs()).collect();
        let normal = Normal::new(0.0, 0.02).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let obs = spectrum(model.iter().map(|m| m + normal.sample(&mut rng)).collect());
            let g = goodness(&obs.wavelengths, &model, &obs, whole(&obs), &NoiseModel::Fixed(0.02)).unwrap();
            assert!((g.chi2_reduced - 1.0).abs() < 0.3 * 1.5, "seed {seed}: {}", g.chi2_reduced);
        }
    }

    #[test]
    fn goodness_symmetric_and_jointly_scale_invariant() {
        let a = spectrum((0..50).map(|i| 1.0 + 0.01 * (i as f64).sin()).collect());
        let b = spectrum((0..50).map(|i| 1.0 + 0.02 * (i as f64 * 0.7).cos()).collect());
        let ga = goodness(&a.wavelengths, &a.fluxes, &b, whole(&b), &NoiseModel::Fixed(0.05)).unwrap();
        let gb = goodness(&b.wavelengths, &b.fluxes, &a, whole(&a), &NoiseModel::Fixed(0.05)).unwrap();
        assert!((ga.chi2_reduced - gb.chi2_reduced).abs() < 1e-14);
        let k = 3.7;
        let ak: Vec<f64> = a.fluxes.iter().map(|f| f * k).collect();
        let bk = spectrum(b.fluxes.iter().map(|f| f * k).collect());
        let gk = goodness(&a.wavelengths, &ak, &bk, whole(&bk), &NoiseModel::Fixed(0.05 * k)).unwrap();
        assert!((gk.chi2_reduced - ga.chi2_reduced).abs() < 1e-12);
    }

    #[test]
    fn sigma_from_continuum() {
        let normal = Normal::new(0.0, 0.03).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let obs = spectrum((0..2000).map(|_| 1.0 + normal.sample(&mut rng)).collect());
        let w = vec![Bandpass::new("c", 1540.0, 1740.0, BandKind::Continuum).unwrap()];
        let s = estimate_sigma(&obs, &w).unwrap();
        assert!((s - 0.03).abs() < 0.003, "{s}");
        let w = vec![Bandpass::new("c", 1000.0, 1001.0, BandKind::Continuum).unwrap()];
        assert!(estimate_sigma(&obs, &w).is_err());
    }

    #[test]
    fn goodness_requires_coverage() {
        let obs = spectrum(vec![1.0; 100]);
        let model_wl: Vec<f64> = (0..10).map(|i| 1545.0 + i as f64).collect();
        let e = goodness(&model_wl, &[1.0; 10], &obs, whole(&obs), &NoiseModel::Fixed(0.1)).unwrap_err();
        assert!(matches!(e, ModelError::Coverage(_)));
    }

    fn score_row(id: &str, phase: f64, rms: f64) -> PhaseScore {
        PhaseScore { spectrum_id: id.into(), phase, rms, chi2: rms * rms, n_points: 10 }
    }

    #[test]
    fn report_and_ranking() {
        let r =
            FitReport::from_scores(vec![score_row("a", 0.1, 0.2), score_row("b", 0.2, 0.0), score_row("c", 0.3, 0.2)])
                .unwrap();
        assert!((r.aggregate - (0.04 + 0.0 + 0.04) / 3.0).abs() < 1e-15);
        let ranked = phase_quality_profile(&r).unwrap();
        assert_eq!(ranked.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0.2, 0.1, 0.3]);
        let one = FitReport::from_scores(vec![score_row("a", 0.1, 0.2)]).unwrap();
        assert!(phase_quality_profile(&one).is_err());
        assert!(FitReport::from_scores(vec![]).is_err());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("phase,rms,chi2"));
        assert_eq!(text.lines().count(), 4);
    }

    fn axis(name: &str, min: f64, max: f64) -> SearchAxis {
        SearchAxis { name: name.into(), min, max, start: None }
    }

    #[test]
    fn refine_recovers_quadratic_minimum() {
        let target = 0.6180339;
        let r = grid_refine(&[axis("a", 0.0, 2.0)], RefineOptions::default(), |v| Ok((v[0] - target).powi(2))).unwrap();
        assert!((r.best[0] - target).abs() <= r.final_steps[0], "{:?}", r);
        assert!((r.final_steps[0] - 2.0 / 8.0 / 27.0).abs() < 1e-12);
    }

    #[test]
    fn refine_zero_rounds_is_initial_scan() {
        let opts = RefineOptions { rounds: 0, ..Default::default() };
        let r = grid_refine(&[axis("a", 0.0, 8.0)], opts, |v| Ok((v[0] - 2.6).abs())).unwrap();
        assert_eq!(r.best, vec![3.0]);
        assert_eq!(r.evaluations, 9);
    }

    #[test]
    fn refine_tie_breaks_low() {
        let opts = RefineOptions { rounds: 0, ..Default::default() };
        let r = grid_refine(&[axis("a", 0.0, 8.0)], opts, |v| Ok((v[0] - 4.0).abs().min((v[0] - 6.0).abs()))).unwrap();
        assert_eq!(r.best, vec![4.0]);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn refine_two_dimensional_and_errors() {
        let f = |v: &[f64]| Ok((v[0] - 1.3).powi(2) + 2.0 * (v[1] + 0.4).powi(2) + 0.5 * (v[0] - 1.3) * (v[1] + 0.4));
        let r = grid_refine(&[axis("a", 0.0, 3.0), axis("b", -2.0, 2.0)], RefineOptions::default(), f).unwrap();
        assert!((r.best[0] - 1.3).abs() < 0.05 && (r.best[1] + 0.4).abs() < 0.05, "{:?}", r.best);
        let too_many: Vec<_> = (0..5).map(|i| axis(&i.to_string(), 0.0, 1.0)).collect();
        assert!(grid_refine(&too_many, RefineOptions::default(), |_| Ok(0.0)).is_err());
        assert!(grid_refine(&[axis("a", 1.0, 1.0)], RefineOptions::default(), |_| Ok(0.0)).is_err());
    }

    #[test]
    fn refine_boxes_stay_inside_bounds() {
        let mut seen = Vec::new();
        grid_refine(&[axis("a", 0.0, 1.0)], RefineOptions::default(), |v| {
            seen.push(v[0]);
            Ok(v[0])
        })
        .unwrap();
        assert!(seen.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    proptest! {
        #[test]
        fn refine_incumbent_is_best_evaluated(c in -3.0f64..3.0, d in -3.0f64..3.0, w in 0.1f64..3.0) {
            let mut best_seen = f64::INFINITY;
            let r = grid_refine(&[axis("a", -4.0, 4.0), axis("b", -4.0, 4.0)], RefineOptions::default(), |v| {
                let s = ((v[0] - c) / w).powi(2) + (v[1] - d).abs() + (3.0 * v[0]).sin() * 0.1;
                best_seen = best_seen.min(s);
                Ok(s)
            }).unwrap();
            prop_assert_eq!(r.score, best_seen);
        }

        #[test]
        fn refine_argmin_invariant_under_positive_scaling(c in -3.0f64..3.0, k in 1e-3f64..1e3) {
            let f = |v: &[f64]| (v[0] - c).powi(2) + 0.3 * (5.0 * v[0]).cos();
            let a = grid_refine(&[axis("a", -4.0, 4.0)], RefineOptions::default(), |v| Ok(f(v))).unwrap();
            let b = grid_refine(&[axis("a", -4.0, 4.0)], RefineOptions::default(), |v| Ok(k * f(v))).unwrap();
            prop_assert_eq!(a.best, b.best);
        }
    }
}
