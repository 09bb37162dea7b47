//! Analytic wind laws: the β-type velocity law, its inverse and logarithmic
//! derivative, and the parametric radial Sobolev optical-depth law with its
//! normalization integral.
//!
//! All speeds are in units of the terminal speed and all radii in units of
//! the stellar radius.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::format::fmt_sig7;
use crate::quad::adaptive_simpson;

/// Highest speed at which the wind sphere is truncated when `w1` reaches the
/// terminal speed (the β-law only attains `w = 1` at infinite radius).
pub const WIND_EDGE_SPEED: f64 = 0.999;

/// Relative tolerance of the normalization quadrature.
pub const NORM_REL_TOL: f64 = 1e-10;

/// Member of a resonance doublet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Blue,
    Red,
}

impl Component {
    pub const BOTH: [Component; 2] = [Component::Blue, Component::Red];
}

/// Full parameter vector of a single-star wind-line model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindLawParams {
    pub w0: f64,
    pub beta: f64,
    pub w_gauss: f64,
    pub w1: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub t_tot_blue: f64,
    pub t_tot_red: f64,
    pub a_phot_blue: f64,
    pub a_phot_red: f64,
    pub w_phot_blue: f64,
    pub w_phot_red: f64,
    pub v_inf: f64,
    #[serde(default)]
    pub epsilon: f64,
}

impl WindLawParams {
    /// Checks every invariant and reports all offending fields at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<&str> = Vec::new();
        let mut why: Vec<String> = Vec::new();
        let named = [
            ("w0", self.w0),
            ("beta", self.beta),
            ("w_gauss", self.w_gauss),
            ("w1", self.w1),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("t_tot_blue", self.t_tot_blue),
            ("t_tot_red", self.t_tot_red),
            ("a_phot_blue", self.a_phot_blue),
            ("a_phot_red", self.a_phot_red),
            ("w_phot_blue", self.w_phot_blue),
            ("w_phot_red", self.w_phot_red),
            ("v_inf", self.v_inf),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                bad.push(name);
                why.push(format!("{name} must be finite"));
            }
        }
        if !bad.is_empty() {
            return Err(ModelError::invalid(&bad, why.join("; ")));
        }

        if !(self.w0 > 0.0 && self.w0 < self.w1) {
            bad.extend(["w0", "w1"]);
            why.push(format!("need 0 < w0 < w1 (w0={}, w1={})", self.w0, self.w1));
        }
        if self.w1 > 1.0 {
            bad.push("w1");
            why.push("w1 must not exceed 1".into());
        }
        if self.beta <= 0.0 {
            bad.push("beta");
            why.push("beta must be positive".into());
        }
        if self.w_gauss < 0.0 {
            bad.push("w_gauss");
            why.push("w_gauss must be non-negative".into());
        }
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if v < 0.0 {
                bad.push(name);
                why.push(format!("{name} must be non-negative"));
            }
        }
        for (name, v) in [("t_tot_blue", self.t_tot_blue), ("t_tot_red", self.t_tot_red)] {
            if v < 0.0 {
                bad.push(name);
                why.push(format!("{name} must be non-negative"));
            }
        }
        for (name, v) in [("a_phot_blue", self.a_phot_blue), ("a_phot_red", self.a_phot_red)] {
            if !(0.0..=1.0).contains(&v) {
                bad.push(name);
                why.push(format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, v) in [("w_phot_blue", self.w_phot_blue), ("w_phot_red", self.w_phot_red)] {
            if v <= 0.0 {
                bad.push(name);
                why.push(format!("{name} must be positive"));
            }
        }
        if self.v_inf <= 0.0 {
            bad.push("v_inf");
            why.push("v_inf must be positive".into());
        }
        if self.epsilon != 0.0 {
            bad.push("epsilon");
            why.push("epsilon is fixed at 0 (pure scattering)".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            bad.dedup();
            Err(ModelError::invalid(&bad, why.join("; ")))
        }
    }

    pub fn t_tot(&self, c: Component) -> f64 {
        match c {
            Component::Blue => self.t_tot_blue,
            Component::Red => self.t_tot_red,
        }
    }

    pub fn a_phot(&self, c: Component) -> f64 {
        match c {
            Component::Blue => self.a_phot_blue,
            Component::Red => self.a_phot_red,
        }
    }

    pub fn w_phot(&self, c: Component) -> f64 {
        match c {
            Component::Blue => self.w_phot_blue,
            Component::Red => self.w_phot_red,
        }
    }

    /// Sets one named field. Used by the fitter, which addresses parameters by name.
    pub fn set_named(&mut self, name: &str, value: f64) -> Result<()> {
        *self.field_mut(name)? = value;
        Ok(())
    }

    pub fn get_named(&self, name: &str) -> Result<f64> {
        let mut copy = self.clone();
        Ok(*copy.field_mut(name)?)
    }

    fn field_mut(&mut self, name: &str) -> Result<&mut f64> {
        Ok(match name {
            "w0" => &mut self.w0,
            "beta" => &mut self.beta,
            "w_gauss" => &mut self.w_gauss,
            "w1" => &mut self.w1,
            "alpha1" => &mut self.alpha1,
            "alpha2" => &mut self.alpha2,
            "t_tot_blue" => &mut self.t_tot_blue,
            "t_tot_red" => &mut self.t_tot_red,
            "a_phot_blue" => &mut self.a_phot_blue,
            "a_phot_red" => &mut self.a_phot_red,
            "w_phot_blue" => &mut self.w_phot_blue,
            "w_phot_red" => &mut self.w_phot_red,
            "v_inf" => &mut self.v_inf,
            _ => return Err(ModelError::invalid(&[name], format!("unknown parameter `{name}`"))),
        })
    }
}

/// Rest wavelengths of a resonance doublet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubletSpec {
    pub lambda_blue: f64,
    pub lambda_red: f64,
    #[serde(default)]
    pub ion_label: String,
}

impl DoubletSpec {
    pub fn civ() -> Self {
        DoubletSpec { lambda_blue: 1548.187, lambda_red: 1550.772, ion_label: "CIV".into() }
    }

    pub fn nv() -> Self {
        DoubletSpec { lambda_blue: 1238.821, lambda_red: 1242.804, ion_label: "NV".into() }
    }

    pub fn siiv() -> Self {
        DoubletSpec { lambda_blue: 1393.755, lambda_red: 1402.770, ion_label: "SiIV".into() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_blue.is_finite() && self.lambda_red.is_finite()) {
            return Err(ModelError::invalid(&["lambda_blue", "lambda_red"], "wavelengths must be finite"));
        }
        if self.lambda_blue <= 0.0 || self.lambda_red <= 0.0 {
            return Err(ModelError::invalid(&["lambda_blue", "lambda_red"], "wavelengths must be positive"));
        }
        if self.lambda_blue >= self.lambda_red {
            return Err(ModelError::invalid(
                &["lambda_blue", "lambda_red"],
                "lambda_blue must be shorter than lambda_red",
            ));
        }
        Ok(())
    }
}

/// Validated wind laws with the normalization integral precomputed.
#[derive(Debug, Clone)]
pub struct WindModel {
    params: WindLawParams,
    norm: f64,
}

impl WindModel {
    pub fn new(params: WindLawParams) -> Result<Self> {
        params.validate()?;
        let norm = norm_integral(&params);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(ModelError::Numeric(format!("normalization integral is {norm}")));
        }
        Ok(WindModel { params, norm })
    }

    pub fn params(&self) -> &WindLawParams {
        &self.params
    }

    /// The dimensionless normalization integral over `y = w / w1`.
    pub fn norm_integral(&self) -> f64 {
        self.norm
    }

    /// Wind speed at radius `r`.
    pub fn velocity(&self, r: f64) -> Result<f64> {
        if !(r >= 1.0) {
            return Err(ModelError::Domain(format!("radius {r} is inside the photosphere")));
        }
        Ok(self.velocity_unchecked(r))
    }

    #[inline]
    pub(crate) fn velocity_unchecked(&self, r: f64) -> f64 {
        let p = &self.params;
        p.w0 + (1.0 - p.w0) * (1.0 - 1.0 / r).powf(p.beta)
    }

    /// Inverse of [`velocity`](Self::velocity).
    pub fn radius_at_speed(&self, w: f64) -> Result<f64> {
        let p = &self.params;
        if !(w >= p.w0 && w < 1.0) {
            return Err(ModelError::Domain(format!("speed {w} outside [w0={}, 1)", p.w0)));
        }
        let q = ((w - p.w0) / (1.0 - p.w0)).powf(1.0 / p.beta);
        Ok(1.0 / (1.0 - q))
    }

    /// dw/dr at radius `r` (> 1).
    #[inline]
    pub(crate) fn dw_dr_unchecked(&self, r: f64) -> f64 {
        let p = &self.params;
        (1.0 - p.w0) * p.beta * (1.0 - 1.0 / r).powf(p.beta - 1.0) / (r * r)
    }

    /// Logarithmic velocity gradient d ln w / d ln r.
    pub fn dlnw_dlnr(&self, r: f64) -> Result<f64> {
        if !(r > 1.0) {
            return Err(ModelError::Domain(format!("d ln w / d ln r needs r > 1, got {r}")));
        }
        Ok(r / self.velocity_unchecked(r) * self.dw_dr_unchecked(r))
    }

    /// Radial Sobolev optical depth of `component` where the wind moves at speed `w`.
    /// Zero beyond `w1`.
    pub fn tau_radial(&self, w: f64, component: Component) -> Result<f64> {
        let p = &self.params;
        if !(w >= p.w0) {
            return Err(ModelError::Domain(format!("speed {w} below wind base w0={}", p.w0)));
        }
        Ok(self.tau_radial_unchecked(w, component))
    }

    #[inline]
    pub(crate) fn tau_radial_unchecked(&self, w: f64, component: Component) -> f64 {
        let p = &self.params;
        if w >= p.w1 {
            return 0.0;
        }
        let t = p.t_tot(component);
        if t == 0.0 {
            return 0.0;
        }
        let y = w / p.w1;
        let bracket = (1.0 - y.powf(1.0 / p.beta)).max(0.0);
        t / (p.w1 * self.norm) * y.powf(p.alpha1) * bracket.powf(p.alpha2)
    }

    /// Optical depth accumulated between speed `w` and the outer edge `w1`.
    pub fn tau_beyond(&self, w: f64, component: Component) -> f64 {
        let p = &self.params;
        let y_lo = (w / p.w1).clamp(p.w0 / p.w1, 1.0);
        let part = norm_integral_y(p.alpha1, p.alpha2, p.beta, y_lo);
        p.t_tot(component) * part / self.norm
    }

    /// Outer radius of the line-forming wind sphere.
    pub fn outer_radius(&self) -> f64 {
        let w_edge = self.params.w1.min(WIND_EDGE_SPEED);
        self.radius_at_speed(w_edge).unwrap_or(f64::INFINITY)
    }
}

/// Normalization integral `∫_{w0/w1}^{1} y^α1 (1 − y^(1/β))^α2 dy` for a parameter set.
///
/// The depth law divides by `w1` times this value so that the depth law
/// integrated over `w ∈ [w0, w1]` equals the component's total depth.
pub fn norm_integral(params: &WindLawParams) -> f64 {
    norm_integral_y(params.alpha1, params.alpha2, params.beta, params.w0 / params.w1)
}

/// Same integral with an explicit lower limit `y0 ∈ [0, 1]`.
pub fn norm_integral_y(alpha1: f64, alpha2: f64, beta: f64, y0: f64) -> f64 {
    if y0 >= 1.0 {
        return 0.0;
    }
    let f = |y: f64| {
        let b = (1.0 - y.powf(1.0 / beta)).max(0.0);
        pow0(y, alpha1) * pow0(b, alpha2)
    };
    // Split at the midpoint so both endpoint singularities get their own recursion.
    let mid = 0.5 * (y0 + 1.0);
    adaptive_simpson(f, y0, mid, NORM_REL_TOL, 1e-300) + adaptive_simpson(f, mid, 1.0, NORM_REL_TOL, 1e-300)
}

/// `x^a` with the convention `0^0 = 1`.
#[inline]
fn pow0(x: f64, a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else {
        x.powf(a)
    }
}

/// Tabulated laws for plotting: wind speed against radius and the depth law
/// against speed.
#[derive(Debug, Clone, Serialize)]
pub struct LawTables {
    pub r: Vec<f64>,
    pub w_of_r: Vec<f64>,
    pub w: Vec<f64>,
    pub dtau_dw: Vec<f64>,
    /// Depth remaining between each speed and the outer edge.
    pub tau_beyond: Vec<f64>,
}

impl LawTables {
    /// CSV with columns `r,w_of_r,w,dtau_dw,tau_beyond`; row `i` pairs the
    /// i-th radius sample with the i-th speed sample.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,w_of_r,w,dtau_dw,tau_beyond")?;
        for i in 0..self.r.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_sig7(self.r[i]),
                fmt_sig7(self.w_of_r[i]),
                fmt_sig7(self.w[i]),
                fmt_sig7(self.dtau_dw[i]),
                fmt_sig7(self.tau_beyond[i])
            )?;
        }
        Ok(())
    }
}

/// Samples `n` points of each law (blue component for the depth law).
pub fn law_tables(model: &WindModel, n: usize) -> LawTables {
    let n = n.max(2);
    let p = model.params();
    let r_max = model.outer_radius();
    let r: Vec<f64> = (0..n).map(|i| (r_max.ln() * i as f64 / (n - 1) as f64).exp()).collect();
    let w_of_r = r.iter().map(|&r| model.velocity_unchecked(r)).collect();
    let w: Vec<f64> = (0..n).map(|i| p.w0 + (p.w1 - p.w0) * i as f64 / (n - 1) as f64).collect();
    let dtau_dw = w.iter().map(|&w| model.tau_radial_unchecked(w, Component::Blue)).collect();
    let tau_beyond = w.iter().map(|&w| model.tau_beyond(w, Component::Blue)).collect();
    LawTables { r, w_of_r, w, dtau_dw, tau_beyond }
}
