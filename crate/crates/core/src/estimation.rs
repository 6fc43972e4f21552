//! Synthetic time-course data and reduced-model parameter estimation.
//!
//! [`gen_synthetic`] integrates the full mass-action model, samples one
//! observable on a time grid and optionally adds seeded Gaussian noise,
//! standing in for a laboratory assay. [`fit_reduced`] then estimates the
//! identifiable parameter combinations of a reduced model by damped least
//! squares: damping grows on rejected steps and shrinks on accepted ones,
//! and the search runs in log-parameter space so rate constants stay
//! positive across the decades they typically span.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{derived, InitialConditions, RateConstants, System};
use crate::ode::{integrate, IntegrationSettings, OdeError};
use crate::reductions::{ReducedKind, SlowVariable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("bad time grid: {0}")]
    BadGrid(String),
    #[error("noise_sd must be >= 0, got {0}")]
    BadNoise(f64),
    #[error("dataset observes {got:?} but the reduced model evolves {expected:?}")]
    ObservableMismatch {
        expected: Observable,
        got: Observable,
    },
    #[error("free parameters must be exactly the identifiable set {expected:?}")]
    WrongFreeParameters { expected: Vec<FitParam> },
    #[error("initial guess for {name:?} = {value} outside bounds [{lower}, {upper}]")]
    BoundsViolation {
        name: FitParam,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("no convergence after {iterations} iterations (rss = {rss})")]
    NonConvergence { iterations: usize, rss: f64 },
    #[error("singular normal equations")]
    SingularNormalEquations,
    #[error("model evaluation failed: {0}")]
    ModelEval(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Which concentration a dataset records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    Z,
    C,
    W,
}

impl Observable {
    /// Index into the `[z, c, w]` state of the full model.
    fn index(&self) -> usize {
        match self {
            Observable::Z => 0,
            Observable::C => 1,
            Observable::W => 2,
        }
    }

    fn of(variable: SlowVariable) -> Observable {
        match variable {
            SlowVariable::Z => Observable::Z,
            SlowVariable::W => Observable::W,
        }
    }
}

/// A sampled time course of one observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub observable: Observable,
    /// `(t, value)` pairs with strictly increasing times.
    pub samples: Vec<(f64, f64)>,
    pub ics: InitialConditions,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn from_samples(
        observable: Observable,
        samples: Vec<(f64, f64)>,
        ics: InitialConditions,
    ) -> Result<Self, EstimationError> {
        validate_grid(samples.iter().map(|s| s.0))?;
        if !samples.iter().all(|s| s.1.is_finite()) {
            return Err(EstimationError::BadGrid(
                "sample values must be finite".into(),
            ));
        }
        Ok(Self {
            observable,
            samples,
            ics,
            noise_sd: 0.0,
            seed: 0,
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }
}

fn validate_grid(times: impl Iterator<Item = f64>) -> Result<(), EstimationError> {
    let mut prev = f64::NEG_INFINITY;
    let mut count = 0usize;
    for t in times {
        if !t.is_finite() || t < 0.0 {
            return Err(EstimationError::BadGrid(format!(
                "time {t} must be finite and >= 0"
            )));
        }
        if t <= prev {
            return Err(EstimationError::BadGrid(
                "times must be strictly increasing".into(),
            ));
        }
        prev = t;
        count += 1;
    }
    if count == 0 {
        return Err(EstimationError::BadGrid("empty time grid".into()));
    }
    Ok(())
}

/// Integrate the full model, sample `observable` on `t_grid` and add
/// zero-mean Gaussian noise with the given seed. A given seed always
/// reproduces the same dataset.
pub fn gen_synthetic(
    params: &RateConstants,
    ics: &InitialConditions,
    observable: Observable,
    t_grid: &[f64],
    noise_sd: f64,
    seed: u64,
) -> Result<Dataset, EstimationError> {
    validate_grid(t_grid.iter().copied())?;
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(EstimationError::BadNoise(noise_sd));
    }
    let sys = System::new(*params, *ics);
    let t_max = *t_grid.last().unwrap();
    let y0 = [ics.z0, ics.c0, ics.w0];
    let mut clean = Vec::with_capacity(t_grid.len());
    if t_max == 0.0 {
        clean.push(y0[observable.index()]);
    } else {
        let settings = IntegrationSettings::with_t_end(t_max);
        let traj = integrate(sys.ode_full(), &y0, &settings)?;
        let mut buf = [0.0; 3];
        for &t in t_grid {
            traj.eval_into(t, &mut buf);
            clean.push(buf[observable.index()]);
        }
    }
    let mut samples: Vec<(f64, f64)> = t_grid.iter().copied().zip(clean.iter().copied()).collect();
    if noise_sd > 0.0 {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sd).expect("noise_sd checked nonnegative");
        for s in &mut samples {
            s.1 += normal.sample(&mut rng);
        }
    }
    Ok(Dataset {
        observable,
        samples,
        ics: *ics,
        noise_sd,
        seed,
    })
}

/// Identifiable parameter combinations of the reduced models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitParam {
    /// Catalytic rate constant `k2`.
    K2,
    /// Saturation constant `ks` of the total / product-slow reductions.
    Ks,
    /// Saturation constant `km` of the classical reductions.
    Km,
    /// Composite rate `k2 / km` of the standard closed form.
    Kappa,
}

/// Identifiable parameter combinations for each reduced model, given that
/// the initial concentrations are known. Fits must free exactly this set.
pub fn identifiability_report(kind: ReducedKind) -> &'static [FitParam] {
    match kind {
        ReducedKind::StandardZ => &[FitParam::Kappa],
        ReducedKind::ReverseW => &[FitParam::K2],
        ReducedKind::TotalW | ReducedKind::PSlowZ => &[FitParam::K2, FitParam::Ks],
        ReducedKind::ClassicalZ | ReducedKind::ClassicalW => &[FitParam::K2, FitParam::Km],
    }
}

/// A parameter freed in a fit, with its initial guess and bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeParam {
    pub name: FitParam,
    pub init: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FreeParam {
    /// Default bounds span the full positive range of plausible rates.
    pub fn new(name: FitParam, init: f64) -> Self {
        Self {
            name,
            init,
            lower: 1e-12,
            upper: 1e12,
        }
    }
}

/// One estimated parameter with its standard error from the Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamEstimate {
    pub name: FitParam,
    pub value: f64,
    pub std_error: f64,
}

/// Converged fit with curvature-based uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub kind: ReducedKind,
    pub params: Vec<ParamEstimate>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Covariance of the natural (not log) parameters.
    pub covariance: Vec<Vec<f64>>,
}

impl FitResult {
    pub fn value_of(&self, name: FitParam) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }
}

/// Evaluate the reduced model named by `kind` at the sample times, for the
/// parameter vector `theta` ordered as in [`identifiability_report`].
fn eval_model(
    kind: ReducedKind,
    ics: &InitialConditions,
    theta: &[f64],
    times: &[f64],
) -> Result<Vec<f64>, EstimationError> {
    let carrier = System::new(
        RateConstants {
            k1: 1.0,
            km1: 0.0,
            k2: 0.0,
        },
        *ics,
    );
    let et = carrier.derived.et;
    let t_max = *times.last().unwrap();
    // Closed forms first; they need no integration.
    match kind {
        ReducedKind::StandardZ => {
            let kappa = theta[0];
            return Ok(times
                .iter()
                .map(|t| ics.z0 * et / (ics.e0 * (kappa * et * t).exp() + ics.z0))
                .collect());
        }
        ReducedKind::ReverseW => {
            let k2 = theta[0];
            return Ok(times
                .iter()
                .map(|t| ics.z0 - (ics.z0 - ics.w0) * (-k2 * t).exp())
                .collect());
        }
        _ => {}
    }
    type ScalarRate = Box<dyn Fn(f64) -> f64>;
    let k2 = theta[0];
    let ksat = theta[1];
    let (rhs, x0): (ScalarRate, f64) = match kind {
        ReducedKind::TotalW | ReducedKind::ClassicalW => (
            Box::new(move |w: f64| match carrier.h_minus(w, ksat) {
                Ok(h) => k2 * h,
                Err(_) => f64::NAN,
            }),
            ics.w0,
        ),
        ReducedKind::ClassicalZ => (
            Box::new(move |z: f64| -k2 * (et - z) * z / (ksat + 2.0 * z)),
            ics.z0,
        ),
        ReducedKind::PSlowZ => {
            let frozen = RateConstants {
                k1: 1.0,
                km1: ksat,
                k2: 0.0,
            };
            let z_start = ics.z0 - derived(&frozen, ics).lambda_z;
            (
                Box::new(move |z: f64| {
                    let denom = ksat * ksat + (et + 2.0 * z) * ksat + 2.0 * z * z;
                    -k2 * z * (et - z) * (ksat + 2.0 * z) / denom
                }),
                z_start,
            )
        }
        ReducedKind::StandardZ | ReducedKind::ReverseW => unreachable!(),
    };
    if t_max == 0.0 {
        return Ok(vec![x0; times.len()]);
    }
    let settings = IntegrationSettings {
        rel_tol: 1e-10,
        abs_tol: 1e-13,
        ..IntegrationSettings::with_t_end(t_max)
    };
    let traj = integrate(move |_t, y, dy| dy[0] = rhs(y[0]), &[x0], &settings)?;
    let mut buf = [0.0; 1];
    Ok(times
        .iter()
        .map(|&t| {
            traj.eval_into(t, &mut buf);
            buf[0]
        })
        .collect())
}

fn residuals(
    kind: ReducedKind,
    dataset: &Dataset,
    theta: &[f64],
    times: &[f64],
) -> Result<(Vec<f64>, f64), EstimationError> {
    let model = eval_model(kind, &dataset.ics, theta, times)?;
    let r: Vec<f64> = model
        .iter()
        .zip(&dataset.samples)
        .map(|(m, s)| m - s.1)
        .collect();
    let rss = r.iter().map(|v| v * v).sum();
    Ok((r, rss))
}

/// Solve a small symmetric linear system by Gaussian elimination with
/// partial pivoting. Returns `None` when a pivot vanishes.
#[allow(clippy::needless_range_loop)]
fn solve_small(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[pivot][col].abs() < 1e-300 || !m[pivot][col].is_finite() {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

const MAX_ITERATIONS: usize = 200;
const RSS_REL_TOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-8;
const FD_STEP: f64 = 1e-6;
/// Largest log-space move per iteration; keeps trial parameters in the
/// regime where the finite-difference sensitivities stay meaningful.
const MAX_LOG_STEP: f64 = 2.0;

/// Fit a reduced model to a dataset by damped least squares in
/// log-parameter space.
///
/// `free` must cover exactly the identifiable set of the model kind; the
/// dataset observable must be the model's slow variable. Closed forms are
/// used where available, reduced-ODE integration otherwise.
#[allow(clippy::needless_range_loop)]
pub fn fit_reduced(
    kind: ReducedKind,
    dataset: &Dataset,
    free: &[FreeParam],
) -> Result<FitResult, EstimationError> {
    let expected = Observable::of(kind.variable());
    if dataset.observable != expected {
        return Err(EstimationError::ObservableMismatch {
            expected,
            got: dataset.observable,
        });
    }
    let wanted = identifiability_report(kind);
    let names: Vec<FitParam> = free.iter().map(|f| f.name).collect();
    if names.len() != wanted.len() || wanted.iter().any(|w| !names.contains(w)) {
        return Err(EstimationError::WrongFreeParameters {
            expected: wanted.to_vec(),
        });
    }
    // Reorder free params to the canonical order.
    let free: Vec<FreeParam> = wanted
        .iter()
        .map(|w| *free.iter().find(|f| f.name == *w).unwrap())
        .collect();
    for f in &free {
        if !(f.init.is_finite() && f.init >= f.lower && f.init <= f.upper && f.lower > 0.0) {
            return Err(EstimationError::BoundsViolation {
                name: f.name,
                value: f.init,
                lower: f.lower,
                upper: f.upper,
            });
        }
    }

    let times = dataset.times();
    let p = free.len();
    let mut u: Vec<f64> = free.iter().map(|f| f.init.ln()).collect();
    let lo: Vec<f64> = free.iter().map(|f| f.lower.ln()).collect();
    let hi: Vec<f64> = free.iter().map(|f| f.upper.ln()).collect();
    let theta_of = |u: &[f64]| -> Vec<f64> { u.iter().map(|v| v.exp()).collect() };

    let (mut r, mut rss) = residuals(kind, dataset, &theta_of(&u), &times)?;
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac: Vec<Vec<f64>> = vec![vec![0.0; p]; times.len()];

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // Central-difference Jacobian in log space.
        for j in 0..p {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += FD_STEP;
            dn[j] -= FD_STEP;
            let (rp, _) = residuals(kind, dataset, &theta_of(&up), &times)?;
            let (rm, _) = residuals(kind, dataset, &theta_of(&dn), &times)?;
            for i in 0..times.len() {
                jac[i][j] = (rp[i] - rm[i]) / (2.0 * FD_STEP);
            }
        }
        let mut a = vec![vec![0.0; p]; p];
        let mut g = vec![0.0; p];
        for i in 0..times.len() {
            for j in 0..p {
                g[j] += jac[i][j] * r[i];
                for k in 0..p {
                    a[j][k] += jac[i][j] * jac[i][k];
                }
            }
        }
        if g.iter().all(|v| v.abs() < GRAD_TOL) {
            converged = true;
            break;
        }
        if (0..p).any(|j| a[j][j] == 0.0 || !a[j][j].is_finite()) {
            if std::env::var("QSSLAB_DEBUG_LM").is_ok() {
                eprintln!("iter {iterations}: a = {a:?}, g = {g:?}, u = {u:?}, rss = {rss}");
            }
            return Err(EstimationError::SingularNormalEquations);
        }

        // Damped trial steps: raise damping until one is accepted.
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = a.clone();
            for j in 0..p {
                damped[j][j] += lambda * a[j][j];
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let delta =
                solve_small(&damped, &neg_g).ok_or(EstimationError::SingularNormalEquations)?;
            let u_try: Vec<f64> = u
                .iter()
                .zip(&delta)
                .zip(lo.iter().zip(&hi))
                .map(|((ui, di), (l, h))| {
                    (ui + di.clamp(-MAX_LOG_STEP, MAX_LOG_STEP)).clamp(*l, *h)
                })
                .collect();
            match residuals(kind, dataset, &theta_of(&u_try), &times) {
                Ok((r_try, rss_try)) if rss_try.is_finite() && rss_try < rss => {
                    let change = (rss - rss_try) / rss.max(1e-300);
                    u = u_try;
                    r = r_try;
                    rss = rss_try;
                    lambda = (lambda / 3.0).max(1e-14);
                    accepted = true;
                    if change < RSS_REL_TOL || rss == 0.0 {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    lambda *= 4.0;
                    if lambda > 1e14 {
                        break;
                    }
                }
            }
        }
        if converged {
            break;
        }
        if !accepted {
            // Damping saturated without progress: at a flat minimum this is
            // convergence, otherwise report failure.
            let scale = rss.sqrt().max(1e-300);
            if g.iter().all(|v| v.abs() < 1e-6 * scale) {
                converged = true;
                break;
            }
            return Err(EstimationError::NonConvergence { iterations, rss });
        }
    }
    if !converged {
        return Err(EstimationError::NonConvergence { iterations, rss });
    }

    let theta = theta_of(&u);
    // Covariance of the natural parameters via the delta method:
    // d r / d theta_j = (d r / d u_j) / theta_j.
    for j in 0..p {
        let mut up = u.clone();
        let mut dn = u.clone();
        up[j] += FD_STEP;
        dn[j] -= FD_STEP;
        let (rp, _) = residuals(kind, dataset, &theta_of(&up), &times)?;
        let (rm, _) = residuals(kind, dataset, &theta_of(&dn), &times)?;
        for i in 0..times.len() {
            jac[i][j] = (rp[i] - rm[i]) / (2.0 * FD_STEP) / theta[j];
        }
    }
    let mut a_nat = vec![vec![0.0; p]; p];
    for i in 0..times.len() {
        for j in 0..p {
            for k in 0..p {
                a_nat[j][k] += jac[i][j] * jac[i][k];
            }
        }
    }
    let dof = times.len().saturating_sub(p).max(1);
    let sigma_sq = rss / dof as f64;
    let mut covariance = vec![vec![0.0; p]; p];
    let mut invertible = true;
    for col in 0..p {
        let mut e = vec![0.0; p];
        e[col] = 1.0;
        match solve_small(&a_nat, &e) {
            Some(x) => {
                for row in 0..p {
                    covariance[row][col] = sigma_sq * x[row];
                }
            }
            None => {
                invertible = false;
                break;
            }
        }
    }
    if !invertible {
        covariance = vec![vec![f64::NAN; p]; p];
    } else {
        for i in 0..p {
            for j in (i + 1)..p {
                let s = 0.5 * (covariance[i][j] + covariance[j][i]);
                covariance[i][j] = s;
                covariance[j][i] = s;
            }
        }
    }
    let params = free
        .iter()
        .enumerate()
        .map(|(j, f)| ParamEstimate {
            name: f.name,
            value: theta[j],
            std_error: if invertible {
                covariance[j][j].max(0.0).sqrt()
            } else {
                f64::NAN
            },
        })
        .collect();
    Ok(FitResult {
        kind,
        params,
        rss,
        iterations,
        converged,
        covariance,
    })
}

/// Mean and spread of per-dataset estimates across repeated experiments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiFitResult {
    pub fits: Vec<FitResult>,
    pub mean: Vec<ParamEstimate>,
    /// Sample standard deviation across datasets.
    pub spread: Vec<ParamEstimate>,
}

/// Fit each dataset independently and average the estimates, the usual
/// refinement when several runs at different `z0` are available.
pub fn fit_multi(
    kind: ReducedKind,
    datasets: &[Dataset],
    free: &[FreeParam],
) -> Result<MultiFitResult, EstimationError> {
    if datasets.is_empty() {
        return Err(EstimationError::BadGrid("no datasets provided".into()));
    }
    let fits: Vec<FitResult> = datasets
        .iter()
        .map(|d| fit_reduced(kind, d, free))
        .collect::<Result<_, _>>()?;
    let p = fits[0].params.len();
    let n = fits.len() as f64;
    let mut mean = Vec::with_capacity(p);
    let mut spread = Vec::with_capacity(p);
    for j in 0..p {
        let name = fits[0].params[j].name;
        let values: Vec<f64> = fits.iter().map(|f| f.params[j].value).collect();
        let m = values.iter().sum::<f64>() / n;
        let var = if fits.len() > 1 {
            values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean.push(ParamEstimate {
            name,
            value: m,
            std_error: (var / n).sqrt(),
        });
        spread.push(ParamEstimate {
            name,
            value: var.sqrt(),
            std_error: 0.0,
        });
    }
    Ok(MultiFitResult { fits, mean, spread })
}

/// Heuristic initial guesses inverted from the data: the late-time slope
/// of `w` (or decay of `z`) seeds the rate, the pool size seeds the
/// saturation constant. Overridable by passing explicit [`FreeParam`]s.
pub fn default_free_params(kind: ReducedKind, dataset: &Dataset) -> Vec<FreeParam> {
    let ics = &dataset.ics;
    let et = ics.z0 + ics.e0 + 2.0 * ics.c0;
    let t_max = dataset
        .samples
        .last()
        .map(|s| s.0)
        .unwrap_or(1.0)
        .max(1e-12);
    let rate_guess = match dataset.observable {
        Observable::W => {
            // w relaxes towards z0; use the two latest distinct samples.
            let n = dataset.samples.len();
            if n >= 2 {
                let (t1, w1) = dataset.samples[n / 2];
                let (t2, w2) = dataset.samples[n - 1];
                let g1 = (ics.z0 - w1).max(1e-12);
                let g2 = (ics.z0 - w2).max(1e-12);
                ((g1 / g2).ln() / (t2 - t1)).abs().clamp(1e-8, 1e8)
            } else {
                1.0 / t_max
            }
        }
        _ => {
            let n = dataset.samples.len();
            if n >= 2 {
                let (t1, z1) = dataset.samples[0];
                let (t2, z2) = dataset.samples[n - 1];
                let g1 = z1.max(1e-12);
                let g2 = z2.max(1e-12);
                ((g1 / g2).ln() / ((t2 - t1) * et)).abs().clamp(1e-8, 1e8)
            } else {
                1.0 / (t_max * et)
            }
        }
    };
    identifiability_report(kind)
        .iter()
        .map(|name| match name {
            FitParam::Kappa => FreeParam::new(FitParam::Kappa, rate_guess),
            FitParam::K2 => FreeParam::new(FitParam::K2, rate_guess),
            FitParam::Ks | FitParam::Km => FreeParam::new(*name, et),
        })
        .collect()
}
