use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use windline_core::binary::{phase_sequence, EclipseState, PhasePoint, WeightRule};
use windline_core::fit::{
    fit_parameters, goodness, FitContext, FitTarget, FitWindow, FreeParam, NoiseModel, Observation, RefineOptions,
};
use windline_core::spectra::ObservedSpectrum;
use windline_core::{presets, DoubletSpec, GridConfig};

fn coarse() -> GridConfig {
    GridConfig { core_rays: 12, halo_rays: 16, z_samples: 64, x_step: 0.03, occultation: true }
}

fn noisy_observations(sigma: f64, seed: u64) -> Vec<Observation> {
    let d = DoubletSpec::civ();
    let orbit = presets::placeholder_orbit();
    let phases: Vec<PhasePoint> = (0..6).map(|k| PhasePoint::clear(k as f64 / 6.0)).collect();
    let seq = phase_sequence(
        &presets::thick_wind(),
        &presets::thin_shell(),
        &d,
        &orbit,
        &phases,
        &coarse(),
        WeightRule::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    seq.iter()
        .enumerate()
        .map(|(k, p)| Observation {
            spectrum: ObservedSpectrum {
                id: format!("o{k}"),
                hjd: orbit.t0 + p.phase * orbit.period_days,
                wavelengths: p.wavelength_grid.iter().step_by(4).copied().collect(),
                fluxes: p.flux.iter().step_by(4).map(|f| f + noise.sample(&mut rng)).collect(),
                phase: None,
            },
            eclipse: EclipseState::default(),
        })
        .collect()
}

fn context() -> FitContext {
    let mut start = presets::thick_wind();
    start.t_tot_blue = 1.0;
    FitContext {
        params1: start,
        params2: presets::thin_shell(),
        doublet: DoubletSpec::civ(),
        orbit: presets::placeholder_orbit(),
        grid: coarse(),
        rule: WeightRule::default(),
        window: FitWindow { center: 1549.5, half_width: 10.0 },
        noise: NoiseModel::Fixed(0.01),
    }
}

#[test]
fn single_parameter_fit_recovers_the_optical_depth() {
    let obs = noisy_observations(0.01, 11);
    let free = [FreeParam { name: "t_tot_blue".into(), star: FitTarget::Primary, min: 0.3, max: 8.0 }];
    let out = fit_parameters(&context(), &free, &obs, RefineOptions::default()).unwrap();
    let truth = presets::thick_wind().t_tot_blue;
    assert!((out.best[0] - truth).abs() / truth < 0.1, "recovered {}", out.best[0]);
    assert!(out.report.aggregate < 1.3, "chi2 {}", out.report.aggregate);
    assert_eq!(out.params1.t_tot_blue, out.best[0]);
    assert_eq!(out.params2, presets::thin_shell());
}

#[test]
fn noiseless_model_scores_zero_against_itself() {
    let obs = noisy_observations(1e-300, 1);
    let d = DoubletSpec::civ();
    let seq = phase_sequence(
        &presets::thick_wind(),
        &presets::thin_shell(),
        &d,
        &presets::placeholder_orbit(),
        &[PhasePoint::clear(0.0)],
        &coarse(),
        WeightRule::default(),
    )
    .unwrap();
    let g = goodness(
        &seq[0].wavelength_grid,
        &seq[0].flux,
        &obs[0].spectrum,
        FitWindow { center: 1549.5, half_width: 10.0 },
        &NoiseModel::Fixed(0.02),
    )
    .unwrap();
    assert!(g.rms < 1e-12 && g.chi2_reduced < 1e-20, "{g:?}");
}

#[test]
fn fit_is_deterministic() {
    let obs = noisy_observations(0.02, 5);
    let free = [
        FreeParam { name: "t_tot_blue".into(), star: FitTarget::Primary, min: 0.3, max: 8.0 },
        FreeParam { name: "beta".into(), star: FitTarget::Primary, min: 0.5, max: 3.0 },
    ];
    let opts = RefineOptions { rounds: 1, ..RefineOptions::default() };
    let a = fit_parameters(&context(), &free, &obs, opts).unwrap();
    let b = fit_parameters(&context(), &free, &obs, opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
