//! Kinetic data model and phase-plane geometry of the autocatalytic
//! zymogen activation reaction
//!
//! ```text
//!     Z + E <=>[k1][km1] C ->[k2] 2E + W
//! ```
//!
//! The mass-action vector fields are provided in three coordinate systems
//! (`(z,c)`, `(c,w)` and the three-variable `(z,c,w)` form), together with
//! the nullclines `h+` and `h-`, the equilibria and their stability, and the
//! positively invariant region of the `(w,c)` plane.
//!
//! Concentrations and rate constants are dimensionless; units are
//! documentation only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from the kinetic model layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid rate constants: {0}")]
    InvalidRates(String),
    #[error("invalid initial conditions: {0}")]
    InvalidInitialConditions(String),
    /// `w` lies outside the band where the nullclines are real.
    #[error("negative discriminant at w = {w}: {discriminant}")]
    NegativeDiscriminant { w: f64, discriminant: f64 },
    /// An equilibrium eigenvalue vanished within tolerance; the point is
    /// not hyperbolic and cannot be classified.
    #[error("degenerate eigenvalue {eigenvalue} at equilibrium ({w}, {c})")]
    DegenerateEigenvalue { w: f64, c: f64, eigenvalue: f64 },
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

/// Second-order binding, first-order unbinding and catalytic rate constants.
///
/// Zero values for `km1` and `k2` encode singular limits; `k1` must be
/// strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub k1: f64,
    pub km1: f64,
    pub k2: f64,
}

impl RateConstants {
    pub fn new(k1: f64, km1: f64, k2: f64) -> Result<Self, ModelError> {
        if !(k1.is_finite() && k1 > 0.0) {
            return Err(ModelError::InvalidRates(format!(
                "k1 must be > 0, got {k1}"
            )));
        }
        if !(km1.is_finite() && km1 >= 0.0) {
            return Err(ModelError::InvalidRates(format!(
                "km1 must be >= 0, got {km1}"
            )));
        }
        if !(k2.is_finite() && k2 >= 0.0) {
            return Err(ModelError::InvalidRates(format!(
                "k2 must be >= 0, got {k2}"
            )));
        }
        Ok(Self { k1, km1, k2 })
    }

    /// Michaelis-type constant `(km1 + k2) / k1`.
    pub fn km(&self) -> f64 {
        (self.km1 + self.k2) / self.k1
    }

    /// Dissociation constant `km1 / k1`.
    pub fn ks(&self) -> f64 {
        self.km1 / self.k1
    }

    /// Catalytic ratio `k2 / k1`.
    pub fn k(&self) -> f64 {
        self.k2 / self.k1
    }
}

/// Initial concentrations `(z0, e0, c0, w0)`; `c0` and `w0` default to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    pub z0: f64,
    pub e0: f64,
    pub c0: f64,
    pub w0: f64,
}

impl InitialConditions {
    pub fn new(z0: f64, e0: f64) -> Result<Self, ModelError> {
        Self::with_intermediates(z0, e0, 0.0, 0.0)
    }

    pub fn with_intermediates(z0: f64, e0: f64, c0: f64, w0: f64) -> Result<Self, ModelError> {
        for (name, v) in [("z0", z0), ("e0", e0), ("c0", c0), ("w0", w0)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::InvalidInitialConditions(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if z0 + e0 <= 0.0 {
            return Err(ModelError::InvalidInitialConditions(
                "z0 + e0 must be positive".into(),
            ));
        }
        Ok(Self { z0, e0, c0, w0 })
    }

    /// Conserved value of `z + c + w`.
    pub fn z_pool(&self) -> f64 {
        self.z0 + self.c0 + self.w0
    }

    /// Conserved value of `e + c - w`.
    pub fn e_offset(&self) -> f64 {
        self.e0 + self.c0 - self.w0
    }
}

/// A full concentration state `(z, c, e, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub z: f64,
    pub c: f64,
    pub e: f64,
    pub w: f64,
}

/// Constants derived from the rates and initial conditions.
///
/// `phi` and `lambda_z` switch branch with the sign of `z0 - e0`:
/// `phi = gamma` for `e0 <= z0` and `mu` otherwise, while `lambda_z`
/// (the ceiling of the complex concentration) uses the `gamma` branch
/// for `e0 < z0` and the `mu` branch for `z0 <= e0`. The two branches
/// coincide at `z0 = e0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedQuantities {
    /// Total enzyme pool `z0 + e0 + 2 c0`.
    pub et: f64,
    pub km: f64,
    pub ks: f64,
    pub k: f64,
    /// Apex abscissa of the lower nullcline, `(z0 - e0) / 2`.
    pub wt: f64,
    /// `et / 2`, the ordinate of the critical intersection.
    pub ct: f64,
    pub mu: f64,
    pub gamma: f64,
    pub phi: f64,
    pub lambda_z: f64,
}

/// Compute all derived constants for a parameter/initial-condition pair.
pub fn derived(params: &RateConstants, ics: &InitialConditions) -> DerivedQuantities {
    let et = ics.z0 + ics.e0 + 2.0 * ics.c0;
    let km = params.km();
    let mu = ((km + et) * (km + et) - 4.0 * ics.e0 * ics.z0)
        .max(0.0)
        .sqrt();
    let gamma = (km * (km + 2.0 * et)).sqrt();
    let phi = if ics.e0 <= ics.z0 { gamma } else { mu };
    let lambda_z = if ics.e0 < ics.z0 {
        0.5 * (km + et - gamma)
    } else {
        0.5 * (km + et - mu)
    };
    DerivedQuantities {
        et,
        km,
        ks: params.ks(),
        k: params.k(),
        wt: 0.5 * (ics.z0 - ics.e0),
        ct: 0.5 * et,
        mu,
        gamma,
        phi,
        lambda_z,
    }
}

/// Slack used for closed-set membership tests so boundary points pass.
const LAMBDA_STAR_SLACK: f64 = 1e-9;

/// Relative tolerance below which an eigenvalue counts as zero.
const EIGENVALUE_TOL: f64 = 1e-9;

/// Stability of a hyperbolic equilibrium of the planar system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stability {
    Attracting,
    Repelling,
    Saddle,
}

/// An equilibrium of the `(w, c)` system with its classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    /// `(w, c)` coordinates.
    pub point: (f64, f64),
    pub stability: Stability,
}

/// A parameter/initial-condition pair with its derived constants cached.
///
/// All methods are pure; the struct is plain data and safe to share across
/// threads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct System {
    pub params: RateConstants,
    pub ics: InitialConditions,
    pub derived: DerivedQuantities,
}

impl System {
    pub fn new(params: RateConstants, ics: InitialConditions) -> Self {
        let derived = derived(&params, &ics);
        Self {
            params,
            ics,
            derived,
        }
    }

    /// Mass-action field in `(z, c)` coordinates with `e` eliminated.
    ///
    /// Returns `(dz/dt, dc/dt)`.
    pub fn rhs_zc(&self, z: f64, c: f64) -> (f64, f64) {
        let RateConstants { k1, km1, k2 } = self.params;
        let et = self.derived.et;
        let dz = -k1 * (et - z) * z + (km1 + 2.0 * k1 * z) * c;
        let dc = k1 * (et - z) * z - (km1 + k2 + 2.0 * k1 * z) * c;
        (dz, dc)
    }

    /// Mass-action field in `(w, c)` coordinates.
    ///
    /// Returns `(dc/dt, dw/dt)`.
    pub fn rhs_wc(&self, w: f64, c: f64) -> (f64, f64) {
        let RateConstants { k1, km1, k2 } = self.params;
        let e = self.ics.e_offset() + w - c;
        let z = self.ics.z_pool() - c - w;
        let dc = k1 * e * z - (km1 + k2) * c;
        (dc, k2 * c)
    }

    /// Three-variable field `(dz, dc, dw)` from the reduced mass-action
    /// system; `e` is reconstructed through the conservation law.
    pub fn rhs_full(&self, z: f64, c: f64) -> (f64, f64, f64) {
        let (dz, dc) = self.rhs_zc(z, c);
        (dz, dc, self.params.k2 * c)
    }

    fn discriminant(&self, w: f64, ksat: f64) -> f64 {
        let s = ksat + self.derived.et;
        s * s - 4.0 * (self.ics.z_pool() - w) * (self.ics.e_offset() + w)
    }

    fn nullcline_roots(&self, w: f64, ksat: f64) -> Result<(f64, f64), ModelError> {
        let mut disc = self.discriminant(w, ksat);
        if disc < 0.0 {
            // Tolerate pure rounding noise at the tangency; anything larger
            // means w is genuinely outside the feasible band.
            let s = ksat + self.derived.et;
            if disc > -1e-13 * (s * s).max(1.0) {
                disc = 0.0;
            } else {
                return Err(ModelError::NegativeDiscriminant {
                    w,
                    discriminant: disc,
                });
            }
        }
        let half_sum = 0.5 * (ksat + self.derived.et);
        let half_root = 0.5 * disc.sqrt();
        Ok((half_sum - half_root, half_sum + half_root))
    }

    /// Lower branch of the `c`-nullcline for saturation constant `ksat`
    /// (`km` for the full nullcline, `ks` for its total-QSS variant).
    pub fn h_minus(&self, w: f64, ksat: f64) -> Result<f64, ModelError> {
        self.nullcline_roots(w, ksat).map(|(lo, _)| lo)
    }

    /// Upper branch of the `c`-nullcline.
    pub fn h_plus(&self, w: f64, ksat: f64) -> Result<f64, ModelError> {
        self.nullcline_roots(w, ksat).map(|(_, hi)| hi)
    }

    /// Jacobian of the `(w, c)` field at `(w, c)`, rows/columns ordered
    /// `[c, w]`.
    pub fn jacobian_wc(&self, w: f64, c: f64) -> [[f64; 2]; 2] {
        let RateConstants { k1, km1, k2 } = self.params;
        let e = self.ics.e_offset() + w - c;
        let z = self.ics.z_pool() - c - w;
        [[-k1 * (e + z) - (km1 + k2), k1 * (z - e)], [k2, 0.0]]
    }

    /// Locate both equilibria of the `(w, c)` system and classify them by
    /// the eigenvalues of the Jacobian.
    ///
    /// Fails with [`ModelError::DegenerateEigenvalue`] when an eigenvalue
    /// vanishes within tolerance (loss of hyperbolicity, e.g. `k2 = 0`).
    pub fn equilibria(&self) -> Result<Vec<Equilibrium>, ModelError> {
        let points = [(self.ics.z_pool(), 0.0), (-self.ics.e_offset(), 0.0)];
        let mut out = Vec::with_capacity(2);
        for (w, c) in points {
            let j = self.jacobian_wc(w, c);
            let tr = j[0][0] + j[1][1];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let disc = tr * tr - 4.0 * det;
            // Real parts of the eigenvalue pair.
            let (re1, re2, mag1, mag2) = if disc >= 0.0 {
                let r = disc.sqrt();
                let l1 = 0.5 * (tr + r);
                let l2 = 0.5 * (tr - r);
                (l1, l2, l1.abs(), l2.abs())
            } else {
                let im = 0.5 * (-disc).sqrt();
                let re = 0.5 * tr;
                let mag = (re * re + im * im).sqrt();
                (re, re, mag, mag)
            };
            for (mag, other) in [(mag1, mag2), (mag2, mag1)] {
                if mag < EIGENVALUE_TOL * other.max(1.0) {
                    return Err(ModelError::DegenerateEigenvalue {
                        w,
                        c,
                        eigenvalue: mag,
                    });
                }
            }
            let class = if re1 < 0.0 && re2 < 0.0 {
                Stability::Attracting
            } else if re1 > 0.0 && re2 > 0.0 {
                Stability::Repelling
            } else {
                Stability::Saddle
            };
            out.push(Equilibrium {
                point: (w, c),
                stability: class,
            });
        }
        Ok(out)
    }

    /// Membership in the positively invariant set bounded by the complex
    /// ceiling `lambda_z`, inflated by a small slack so boundary
    /// trajectories pass.
    pub fn in_lambda_star(&self, w: f64, c: f64) -> bool {
        let s = LAMBDA_STAR_SLACK;
        let d = &self.derived;
        w >= -s
            && c >= -s
            && c <= d.ct + s
            && c <= self.ics.e0 + w + s
            && c <= self.ics.z0 - w + s
            && c <= d.lambda_z + s
    }

    /// Residuals of the two conservation laws:
    /// `r1 = z + e + 2c - et`, `r2 = z + c + w - (z0 + c0 + w0)`.
    pub fn conservation_residuals(&self, state: &State) -> (f64, f64) {
        let r1 = state.z + state.e + 2.0 * state.c - self.derived.et;
        let r2 = state.z + state.c + state.w - self.ics.z_pool();
        (r1, r2)
    }

    /// Reconstruct the full state from `(z, c)` via the conservation laws.
    pub fn state_from_zc(&self, z: f64, c: f64) -> State {
        State {
            z,
            c,
            e: self.derived.et - z - 2.0 * c,
            w: self.ics.z_pool() - z - c,
        }
    }

    /// Reconstruct the full state from `(c, w)`.
    pub fn state_from_wc(&self, c: f64, w: f64) -> State {
        let z = self.ics.z_pool() - c - w;
        State {
            z,
            c,
            e: self.derived.et - z - 2.0 * c,
            w,
        }
    }

    /// ODE closure over state `[z, c]`.
    pub fn ode_zc(&self) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
        move |_t, y, dy| {
            let (dz, dc) = self.rhs_zc(y[0], y[1]);
            dy[0] = dz;
            dy[1] = dc;
        }
    }

    /// ODE closure over state `[c, w]`.
    pub fn ode_wc(&self) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
        move |_t, y, dy| {
            let (dc, dw) = self.rhs_wc(y[1], y[0]);
            dy[0] = dc;
            dy[1] = dw;
        }
    }

    /// ODE closure over state `[z, c, w]`.
    pub fn ode_full(&self) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
        move |_t, y, dy| {
            let (dz, dc, dw) = self.rhs_full(y[0], y[1]);
            dy[0] = dz;
            dy[1] = dc;
            dy[2] = dw;
        }
    }

    /// Raw four-species mass-action field over state `[z, c, e, w]`,
    /// with no conservation law substituted; the two linear invariants
    /// are genuine outputs of the integration here.
    pub fn ode_mass_action(&self) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
        move |_t, y, dy| {
            let RateConstants { k1, km1, k2 } = self.params;
            let (z, c, e) = (y[0], y[1], y[2]);
            let bind = k1 * e * z;
            dy[0] = -bind + km1 * c;
            dy[1] = bind - (km1 + k2) * c;
            dy[2] = -bind + (km1 + 2.0 * k2) * c;
            dy[3] = k2 * c;
        }
    }
}

/// Dimensionless `(c, w)` field of the irreversible reaction rescaled to
/// slow time, parameterised by the eigenvalue-ratio `eps_hat = 2 k2 / (k1 et)`
/// and the concentration ratios `sigma = 2 e0 / et`, `theta = 2 z0 / et`.
///
/// State ordering is `[c_hat, w_bar]`.
pub fn scaled_wc_rhs(eps_hat: f64, sigma: f64, theta: f64) -> impl Fn(f64, &[f64], &mut [f64]) {
    move |_t, y, dy| {
        let (c, w) = (y[0], y[1]);
        dy[0] = ((sigma + theta * w - c) * (theta - c - theta * w) - eps_hat * c) / eps_hat;
        dy[1] = c / theta;
    }
}

/// JSON run configuration: rate constants and initial concentrations.
///
/// `c0` and `w0` are optional and default to zero.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub k1: f64,
    pub km1: f64,
    pub k2: f64,
    pub z0: f64,
    pub e0: f64,
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub w0: f64,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::BadConfig(e.to_string()))
    }

    pub fn build(&self) -> Result<System, ModelError> {
        let params = RateConstants::new(self.k1, self.km1, self.k2)?;
        let ics = InitialConditions::with_intermediates(self.z0, self.e0, self.c0, self.w0)?;
        Ok(System::new(params, ics))
    }
}
