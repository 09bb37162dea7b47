//! HTTP JSON API over the windline compute core.
//!
//! Compute endpoints are pure functions of their request bodies. The only
//! shared state is the analyst session (uploaded spectra, last parameters)
//! and a cache of single-star profiles keyed by the fingerprint of the exact
//! inputs that produced them.

pub mod error;
pub mod session;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use windline_core::binary::{
    common_wavelength_grid, sequence_from_profiles, EclipseState, OrbitalSolution, PhasePoint, SequenceManifest,
    WeightRule,
};
use windline_core::fit::{goodness, FitWindow, NoiseModel};
use windline_core::spectra::{extract_light_curve, parse_spectrum, Bandpass, LightCurveAnchor, ObservedSpectrum};
use windline_core::{fingerprint_of, numeric_fingerprint, DoubletSpec, GridConfig, SingleStarProfile, WindLawParams};

pub use error::ApiError;
pub use session::Session;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

type ApiResult<T> = std::result::Result<T, ApiError>;

pub struct AppState {
    session: RwLock<Session>,
    cache: Mutex<HashMap<String, Arc<SingleStarProfile>>>,
    session_path: Option<PathBuf>,
}

impl AppState {
    pub fn new(session: Session, session_path: Option<PathBuf>) -> Self {
        AppState { session: RwLock::new(session), cache: Mutex::new(HashMap::new()), session_path }
    }

    /// Loads the session file if it exists, otherwise starts empty.
    pub fn open(session_path: Option<PathBuf>) -> windline_core::Result<Self> {
        let session = match &session_path {
            Some(p) if p.exists() => Session::load(p)?,
            _ => Session::default(),
        };
        Ok(Self::new(session, session_path))
    }

    pub fn session(&self) -> Session {
        self.session.read().expect("session lock poisoned").clone()
    }

    pub fn cached_profiles(&self) -> usize {
        self.cache.lock().expect("cache lock poisoned").len()
    }

    pub fn save_session(&self) -> windline_core::Result<()> {
        if let Some(path) = &self.session_path {
            let snapshot = self.session();
            snapshot.save(path)?;
        }
        Ok(())
    }

    fn update_session<F: FnOnce(&mut Session)>(&self, f: F) -> windline_core::Result<()> {
        {
            let mut s = self.session.write().expect("session lock poisoned");
            f(&mut s);
        }
        self.save_session()
    }

    /// Profile for the exact inputs, synthesized at most once.
    fn profile(
        &self,
        params: &WindLawParams,
        doublet: &DoubletSpec,
        grid: &GridConfig,
    ) -> windline_core::Result<(String, Arc<SingleStarProfile>)> {
        let key = fingerprint_of(&(params, doublet, grid))?;
        if let Some(p) = self.cache.lock().expect("cache lock poisoned").get(&key) {
            return Ok((key, Arc::clone(p)));
        }
        tracing::info!(fingerprint = %key, "synthesizing single-star profile");
        let p = Arc::new(windline_core::sei::synthesize(params, doublet, grid)?);
        self.cache.lock().expect("cache lock poisoned").insert(key.clone(), Arc::clone(&p));
        Ok((key, p))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/profile/single", post(profile_single))
        .route("/api/bsei/sequence", post(bsei_sequence))
        .route("/api/spectra", post(upload_spectrum))
        .route("/api/spectra/{id}", get(get_spectrum))
        .route("/api/lightcurve", post(light_curve))
        .route("/api/fit/goodness", post(fit_goodness))
        .layer(DefaultBodyLimit::max(64 * 1024 * 1024))
        .with_state(state)
}

/// Serves until Ctrl-C, then saves the session.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let app = router(Arc::clone(&state));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    state.save_session().map_err(std::io::Error::other)
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", format!("compute task failed: {e}"))
    })?
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    version: &'static str,
    fingerprint: String,
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok", version: VERSION, fingerprint: numeric_fingerprint() })
}

fn default_doublet() -> DoubletSpec {
    DoubletSpec::civ()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleRequest {
    pub params: WindLawParams,
    #[serde(default = "default_doublet")]
    pub doublet: DoubletSpec,
    #[serde(default)]
    pub grid: GridConfig,
}

#[derive(Serialize)]
struct ProfileBody<'a> {
    fingerprint: String,
    params: &'a WindLawParams,
    doublet: &'a DoubletSpec,
    lambda_ref: f64,
    equivalent_width: f64,
    n: usize,
    x: &'a [f64],
    wavelength: Vec<f64>,
    f_core: &'a [f64],
    f_halo: &'a [f64],
    f_total: &'a [f64],
}

async fn profile_single(
    State(state): State<Arc<AppState>>,
    body: std::result::Result<Json<SingleRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    blocking(move || {
        let (fingerprint, p) = state.profile(&req.params, &req.doublet, &req.grid)?;
        let body = ProfileBody {
            fingerprint,
            params: &p.params,
            doublet: &p.doublet,
            lambda_ref: p.grid.lambda_ref,
            equivalent_width: p.equivalent_width(),
            n: p.grid.len(),
            x: &p.grid.x_values,
            wavelength: p.wavelengths(),
            f_core: &p.f_core,
            f_halo: &p.f_halo,
            f_total: &p.f_total,
        };
        Ok(Json(body).into_response())
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceRequest {
    pub params1: WindLawParams,
    pub params2: WindLawParams,
    pub orbit: OrbitalSolution,
    pub phases: Vec<PhasePoint>,
    #[serde(default = "default_doublet")]
    pub doublet: DoubletSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub rule: WeightRule,
}

#[derive(Serialize)]
struct PhaseBody<'a> {
    phase: f64,
    weights_used: (f64, f64),
    rv_used: (f64, f64),
    eclipse: &'a EclipseState,
    clipped: bool,
    n: usize,
    wavelength: &'a [f64],
    flux: &'a [f64],
}

#[derive(Serialize)]
struct SequenceBody<'a> {
    fingerprints: (String, String),
    manifest: SequenceManifest,
    count: usize,
    profiles: Vec<PhaseBody<'a>>,
}

async fn bsei_sequence(
    State(state): State<Arc<AppState>>,
    body: std::result::Result<Json<SequenceRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    if let Some(p) = req.phases.iter().find(|p| !(0.0..1.0).contains(&p.phase)) {
        return Err(ApiError::bad_request(format!("phase {} outside [0, 1)", p.phase)));
    }
    if !req.phases.windows(2).all(|w| w[0].phase <= w[1].phase) {
        return Err(ApiError::bad_request("phases must be sorted in increasing order"));
    }
    req.orbit.validate()?;
    blocking(move || {
        let (k1, f1) = state.profile(&req.params1, &req.doublet, &req.grid)?;
        let (k2, f2) = state.profile(&req.params2, &req.doublet, &req.grid)?;
        let profiles = if req.phases.is_empty() {
            Vec::new()
        } else {
            let grid = common_wavelength_grid(&f1, &f2);
            sequence_from_profiles(&f1, &f2, &req.orbit, &req.phases, &grid, req.rule)?
        };
        state.update_session(|s| {
            s.params = Some((req.params1.clone(), req.params2.clone()));
            s.orbit = Some(req.orbit.clone());
        })?;
        let body = SequenceBody {
            fingerprints: (k1, k2),
            manifest: SequenceManifest::new(&req.orbit, &profiles),
            count: profiles.len(),
            profiles: profiles
                .iter()
                .map(|p| PhaseBody {
                    phase: p.phase,
                    weights_used: p.weights_used,
                    rv_used: p.rv_used,
                    eclipse: &p.eclipse,
                    clipped: p.clipped,
                    n: p.flux.len(),
                    wavelength: &p.wavelength_grid,
                    flux: &p.flux,
                })
                .collect(),
        };
        Ok(Json(body).into_response())
    })
    .await
}

#[derive(Serialize)]
struct SpectrumSummary {
    id: String,
    hjd: f64,
    n: usize,
}

async fn upload_spectrum(State(state): State<Arc<AppState>>, body: String) -> ApiResult<Response> {
    let spec = parse_spectrum(body.as_bytes())?;
    spec.validate()?;
    let summary = SpectrumSummary { id: spec.id.clone(), hjd: spec.hjd, n: spec.len() };
    state.update_session(|s| {
        s.spectra.insert(spec.id.clone(), spec);
    })?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

#[derive(Deserialize)]
struct SpectrumQuery {
    format: Option<String>,
}

#[derive(Serialize)]
struct SpectrumBody<'a> {
    id: &'a str,
    hjd: f64,
    n: usize,
    wavelengths: &'a [f64],
    fluxes: &'a [f64],
}

fn lookup(state: &AppState, id: &str) -> ApiResult<ObservedSpectrum> {
    state
        .session
        .read()
        .expect("session lock poisoned")
        .spectra
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("no spectrum with id `{id}`")))
}

async fn get_spectrum(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<SpectrumQuery>,
) -> ApiResult<Response> {
    let spec = lookup(&state, &id)?;
    match q.format.as_deref() {
        Some("csv") => Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], spec.to_csv_string()).into_response()),
        None | Some("json") => Ok(Json(SpectrumBody {
            id: &spec.id,
            hjd: spec.hjd,
            n: spec.len(),
            wavelengths: &spec.wavelengths,
            fluxes: &spec.fluxes,
        })
        .into_response()),
        Some(other) => Err(ApiError::bad_request(format!("unknown format `{other}`"))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightCurveRequest {
    /// Defaults to every uploaded spectrum, in id order.
    #[serde(default)]
    pub spectrum_ids: Option<Vec<String>>,
    pub band: Bandpass,
    pub orbit: OrbitalSolution,
    #[serde(default)]
    pub anchor: LightCurveAnchor,
}

#[derive(Serialize)]
struct LightCurveBody {
    band: Bandpass,
    n: usize,
    phase: Vec<f64>,
    lc: Vec<f64>,
    spectrum_id: Vec<String>,
}

async fn light_curve(
    State(state): State<Arc<AppState>>,
    body: std::result::Result<Json<LightCurveRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    let spectra: Vec<ObservedSpectrum> = match &req.spectrum_ids {
        Some(ids) => ids.iter().map(|id| lookup(&state, id)).collect::<ApiResult<_>>()?,
        None => state.session().spectra.into_values().collect(),
    };
    req.orbit.validate()?;
    let curve = extract_light_curve(&spectra, &req.band, &req.orbit, &req.anchor)?;
    let body = LightCurveBody {
        band: curve.bandpass,
        n: curve.points.len(),
        phase: curve.points.iter().map(|p| p.phase).collect(),
        lc: curve.points.iter().map(|p| p.lc).collect(),
        spectrum_id: curve.points.into_iter().map(|p| p.spectrum_id).collect(),
    };
    Ok(Json(body).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArrays {
    pub wavelengths: Vec<f64>,
    pub flux: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoodnessRequest {
    pub model: ModelArrays,
    #[serde(default)]
    pub spectrum_id: Option<String>,
    #[serde(default)]
    pub spectrum: Option<ObservedSpectrum>,
    pub window: FitWindow,
    pub noise: NoiseModel,
}

async fn fit_goodness(
    State(state): State<Arc<AppState>>,
    body: std::result::Result<Json<GoodnessRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    let observed = match (&req.spectrum_id, req.spectrum) {
        (Some(id), None) => lookup(&state, id)?,
        (None, Some(s)) => {
            s.validate()?;
            s
        }
        _ => return Err(ApiError::bad_request("supply exactly one of `spectrum_id` and `spectrum`")),
    };
    let g = goodness(&req.model.wavelengths, &req.model.flux, &observed, req.window, &req.noise)?;
    Ok(Json(g).into_response())
}
