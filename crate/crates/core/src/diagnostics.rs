//! Validity diagnostics for the quasi-steady-state reductions.
//!
//! The central object is the dimensionless parameter `eps`, which bounds
//! the long-run distance between a trajectory and the lower nullcline.
//! It factors into three parameters, each tied to one reduction and each
//! in `[0, 1]`, so the report doubles as a map of which reduction the
//! current experiment supports. The table-style qualifier forms (the ones
//! quoted to experimentalists) are reported side by side with the
//! factorisation forms.
//!
//! Beyond the static parameters, this module verifies the two exponential
//! error bounds along computed trajectories, classifies the layer-problem
//! branches, measures how closely trajectories approach the transcritical
//! point (including the square-root scaling law in the eigenvalue ratio)
//! and times the approach to the slow manifold.

use serde::Serialize;
use thiserror::Error;

use crate::model::{derived, scaled_wc_rhs, InitialConditions, ModelError, RateConstants, System};
use crate::ode::{
    detect_min_distance, detect_tube_entry, integrate, IntegrationSettings, OdeError, Trajectory,
};

/// Absolute slack allowed on squared-error bound checks; covers
/// integration and rounding error only, the bounds themselves are exact.
pub const BOUND_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    /// Fully singular corner `km = 0` with `e0 <= z0`: the decay rate
    /// constant vanishes and no epsilon can be formed.
    #[error("phi = 0 (km = 0 with e0 <= z0); epsilon parameters undefined")]
    PhiZero,
    #[error("trajectory starts outside the invariant region at (w, c) = ({w}, {c})")]
    NotInLambdaStar { w: f64, c: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("need at least {needed} distinct values, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Every dimensionless validity parameter of the reaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonReport {
    /// Master parameter bounding the scaled nullcline error; equals
    /// `eps1 * eps2 * eps_dd` by construction.
    pub eps: f64,
    /// `k1 et / (km1 + k2 + k1 et)`; small iff the standard reduction holds.
    pub eps1: f64,
    /// `k2 / (km1 + k2)`; small iff the product-slow reduction holds.
    pub eps2: f64,
    /// `(km1 + k2) / (k1 phi)`; small near the fully irreversible limit.
    pub eps_dd: f64,
    /// Eigenvalue ratio `k2 / (k1 e0)` of the linearised flow.
    pub eps_star: f64,
    /// `2 k2 / (k1 et)`, the scaling-law parameter.
    pub eps_hat: f64,
    /// `sqrt((km1 + k2) / (k1 et))`, the reverse-reduction qualifier.
    pub eps_tilde: f64,
    /// `2 e0 / et`.
    pub sigma: f64,
    /// `2 z0 / et`.
    pub theta: f64,
    /// Table-style qualifier `k1 et / (km1 + k2)`.
    pub eps1_table: f64,
    /// Table-style qualifier `k2 / km1`.
    pub eps2_table: f64,
}

fn epsilons_unchecked(params: &RateConstants, ics: &InitialConditions) -> EpsilonReport {
    let d = derived(params, ics);
    let RateConstants { k1, km1, k2 } = *params;
    let et = d.et;
    let eps1 = k1 * et / (km1 + k2 + k1 * et);
    let eps2 = if km1 + k2 == 0.0 {
        0.0
    } else {
        k2 / (km1 + k2)
    };
    let eps_dd = (km1 + k2) / (k1 * d.phi);
    EpsilonReport {
        eps: eps1 * eps2 * eps_dd,
        eps1,
        eps2,
        eps_dd,
        eps_star: k2 / (k1 * ics.e0),
        eps_hat: 2.0 * k2 / (k1 * et),
        eps_tilde: ((km1 + k2) / (k1 * et)).sqrt(),
        sigma: 2.0 * ics.e0 / et,
        theta: 2.0 * ics.z0 / et,
        eps1_table: k1 * et / (km1 + k2),
        eps2_table: if k2 == 0.0 { 0.0 } else { k2 / km1 },
    }
}

/// Compute the full epsilon report.
pub fn epsilons(
    params: &RateConstants,
    ics: &InitialConditions,
) -> Result<EpsilonReport, DiagnosticsError> {
    let d = derived(params, ics);
    if d.phi <= 0.0 {
        return Err(DiagnosticsError::PhiZero);
    }
    Ok(epsilons_unchecked(params, ics))
}

/// Pointwise error `c - h-(w; km)` of a `(c, w)` trajectory against the
/// lower nullcline, sampled at the stored output times.
pub fn qss_error_series(
    system: &System,
    traj: &Trajectory,
) -> Result<Vec<(f64, f64)>, DiagnosticsError> {
    let km = system.derived.km;
    let mut out = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        let y = traj.state(i);
        let h = system.h_minus(y[1], km)?;
        out.push((traj.times()[i], y[0] - h));
    }
    Ok(out)
}

/// Outcome of an error-bound verification along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// Smallest value of `bound - error^2` over the run (without slack);
    /// negative values within the slack still count as holding.
    pub worst_margin: f64,
}

/// Verify the exponential nullcline-error bound
/// `E^2(t) <= E^2(0) exp(-k1 phi t) + eps^2 lambda_z^2`
/// at every output time of a `(c, w)` trajectory started in the invariant
/// region.
pub fn check_prop1(system: &System, traj: &Trajectory) -> Result<BoundCheck, DiagnosticsError> {
    let y0 = traj.state(0);
    let (c0, w0) = (y0[0], y0[1]);
    if !system.in_lambda_star(w0, c0) {
        return Err(DiagnosticsError::NotInLambdaStar { w: w0, c: c0 });
    }
    let eps = epsilons(&system.params, &system.ics)?.eps;
    let d = &system.derived;
    let series = qss_error_series(system, traj)?;
    let e0_sq = series[0].1 * series[0].1;
    let floor = eps * eps * d.lambda_z * d.lambda_z;
    let rate = system.params.k1 * d.phi;
    let mut holds = true;
    let mut worst = f64::INFINITY;
    for (t, e) in series {
        let bound = e0_sq * (-rate * t).exp() + floor;
        let margin = bound - e * e;
        worst = worst.min(margin);
        holds &= margin >= -BOUND_SLACK;
    }
    Ok(BoundCheck {
        holds,
        worst_margin: worst,
    })
}

/// Stability of one branch of the layer-problem critical set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BranchStability {
    Attracting,
    Repulsive,
    NonHyperbolic,
}

/// Layer-problem eigenvalues and branch classification at a given `w`.
///
/// In the fully irreversible singular limit the critical set is the pair
/// of lines `c = z0 - w` (branch 1) and `c = e0 + w` (branch 2), whose
/// transverse eigenvalues are `-k1 (e0 - z0 + 2w)` and its negative; the
/// branches exchange stability where both vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerStability {
    pub lambda1: f64,
    pub lambda2: f64,
    pub s1: BranchStability,
    pub s2: BranchStability,
}

pub fn layer_stability(system: &System, w: f64) -> LayerStability {
    let k1 = system.params.k1;
    let gap = system.ics.e0 - system.ics.z0 + 2.0 * w;
    let lambda1 = -k1 * gap;
    let lambda2 = k1 * gap;
    let scale = k1 * (system.ics.e0 + system.ics.z0 + 2.0 * w.abs()).max(1e-300);
    let classify = |lam: f64| {
        if lam.abs() <= 1e-12 * scale {
            BranchStability::NonHyperbolic
        } else if lam < 0.0 {
            BranchStability::Attracting
        } else {
            BranchStability::Repulsive
        }
    };
    LayerStability {
        lambda1,
        lambda2,
        s1: classify(lambda1),
        s2: classify(lambda2),
    }
}

/// Distance from the branch intersection to the nullcline apex, plus the
/// same value scaled by the half-pool `et / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BifurcationDistance {
    pub d_b: f64,
    pub scaled: f64,
}

/// `sqrt(q^2 + 2 et q) - q` with `q = k2/k1` for the irreversible layer
/// problem and `q = km` when unbinding is retained.
pub fn bifurcation_distance(
    params: &RateConstants,
    ics: &InitialConditions,
    reversible: bool,
) -> BifurcationDistance {
    let d = derived(params, ics);
    let q = if reversible { d.km } else { d.k };
    let d_b = (q * q + 2.0 * d.et * q).sqrt() - q;
    BifurcationDistance {
        d_b,
        scaled: 2.0 * d_b / d.et,
    }
}

/// Verify the slow-time contraction bound
/// `Z^2(T) <= Z^2(0) exp((eps_dd - 1) T / eps_dd)`, `Z = c - (z0 - w)`,
/// `T = k2 t`, along a `(c, w)` trajectory of the irreversible reaction
/// with `z0 <= e0`.
pub fn check_prop3(system: &System, traj: &Trajectory) -> Result<BoundCheck, DiagnosticsError> {
    let ics = &system.ics;
    if ics.z0 > ics.e0 {
        return Err(DiagnosticsError::PreconditionViolated(format!(
            "requires z0 <= e0, got z0 = {}, e0 = {}",
            ics.z0, ics.e0
        )));
    }
    if system.params.km1 != 0.0 {
        return Err(DiagnosticsError::PreconditionViolated(format!(
            "requires km1 = 0 (irreversible binding), got {}",
            system.params.km1
        )));
    }
    if system.params.k2 <= 0.0 {
        return Err(DiagnosticsError::PreconditionViolated(
            "requires k2 > 0 for the slow-time rescaling".into(),
        ));
    }
    let eps_dd = epsilons(&system.params, &system.ics)?.eps_dd;
    let decay = (eps_dd - 1.0) / eps_dd;
    let zres = |i: usize| {
        let y = traj.state(i);
        y[0] - (ics.z0 - y[1])
    };
    let z0_sq = zres(0) * zres(0);
    let mut holds = true;
    let mut worst = f64::INFINITY;
    for i in 0..traj.len() {
        let slow_time = system.params.k2 * traj.times()[i];
        let bound = z0_sq * (decay * slow_time).exp();
        let z = zres(i);
        let margin = bound - z * z;
        worst = worst.min(margin);
        holds &= margin >= -BOUND_SLACK;
    }
    Ok(BoundCheck {
        holds,
        worst_margin: worst,
    })
}

/// Result of the square-root scaling-law sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSweep {
    /// `(eps_hat, minimum scaled distance)` pairs, sorted by `eps_hat`.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `log(distance)` against `log(eps_hat)`.
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
}

/// Integration horizon (slow time) for the dimensionless experiments;
/// the closest approach to the critical intersection happens well before.
const SCALED_T_END: f64 = 1.0;

fn scaled_settings(t_end: f64) -> IntegrationSettings {
    IntegrationSettings {
        t_end,
        ..IntegrationSettings::default()
    }
}

/// Sweep the eigenvalue ratio for the equal-pools irreversible experiment:
/// integrate the dimensionless system from the origin for each value,
/// record the minimum distance to the critical intersection `(w, c) = (0, 1)`
/// and fit the log-log slope, which the square-root law predicts to be 1/2.
pub fn scaling_sweep(eps_hat_values: &[f64]) -> Result<ScalingSweep, DiagnosticsError> {
    let mut values: Vec<f64> = eps_hat_values.to_vec();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    if values.len() < 3 {
        return Err(DiagnosticsError::InsufficientPoints {
            needed: 3,
            got: values.len(),
        });
    }
    for &e in &values {
        if !(e.is_finite() && e > 0.0 && e < 1.0) {
            return Err(DiagnosticsError::PreconditionViolated(format!(
                "eps_hat values must lie in (0, 1), got {e}"
            )));
        }
    }
    let mut points = Vec::with_capacity(values.len());
    for &eps_hat in &values {
        let traj = integrate(
            scaled_wc_rhs(eps_hat, 1.0, 1.0),
            &[0.0, 0.0],
            &scaled_settings(SCALED_T_END),
        )?;
        // State order is [c, w]; the intersection sits at c = 1, w = 0.
        let (_, dist) = detect_min_distance(&traj, &[1.0, 0.0]);
        points.push((eps_hat, dist));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let dof = (points.len().max(3) - 2) as f64;
    let slope_stderr = (ss_res / dof / sxx).sqrt();
    Ok(ScalingSweep {
        points,
        slope,
        slope_stderr,
        intercept,
    })
}

/// Slow-manifold approach timing for the equal-pools experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproachTime {
    /// First slow time with `|c - (1 - w)| <= eps_star`; `None` if the
    /// tube is never entered within the horizon.
    pub t_entry: Option<f64>,
    /// `-eps_star ln eps_star`.
    pub lower: f64,
    /// `-sqrt(eps_star) ln eps_star`.
    pub upper: f64,
}

/// Time the approach to the attracting branch in the dimensionless
/// equal-pools system started from the origin. The entry time is expected
/// in `(lower, upper]`: the plain eigenvalue-ratio estimate is too short
/// near the non-hyperbolic point, where contraction slows to the
/// square-root rate.
pub fn approach_time(eps_star: f64) -> Result<ApproachTime, DiagnosticsError> {
    if !(eps_star > 0.0 && eps_star < 1.0) {
        return Err(DiagnosticsError::PreconditionViolated(format!(
            "eps_star must lie in (0, 1), got {eps_star}"
        )));
    }
    let lower = -eps_star * eps_star.ln();
    let upper = -eps_star.sqrt() * eps_star.ln();
    let t_end = (3.0 * upper).clamp(0.5, 2.0);
    let traj = integrate(
        scaled_wc_rhs(eps_star, 1.0, 1.0),
        &[0.0, 0.0],
        &scaled_settings(t_end),
    )?;
    let t_entry = detect_tube_entry(&traj, |y| y[0] - (1.0 - y[1]), eps_star);
    Ok(ApproachTime {
        t_entry,
        lower,
        upper,
    })
}

/// Reduction recommended by the qualifier table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Recommendation {
    #[serde(rename = "sQSSA")]
    Standard,
    #[serde(rename = "rQSSA")]
    Reverse,
    #[serde(rename = "tQSSA")]
    Total,
}

/// Full diagnostics report emitted by the `diagnose` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub epsilons: EpsilonReport,
    pub d_b: BifurcationDistance,
    /// Whether `d_b` retained the unbinding rate.
    pub reversible: bool,
    pub tol: f64,
    /// Possibly empty (no reduction certified) or multiple.
    pub recommended: Vec<Recommendation>,
}

/// Evaluate the table qualifiers against `tol` and recommend reductions.
///
/// The standard reduction is certified by the table form of `eps1`, the
/// reverse one by `eps_tilde` together with `z0 <= e0`, and the total one
/// by the table form of `eps2`. In the fully singular corner where the
/// factorisation forms are undefined they are reported as NaN
/// (serialised as null); the table qualifiers remain meaningful.
pub fn recommend(params: &RateConstants, ics: &InitialConditions, tol: f64) -> DiagnosticsReport {
    let eps = epsilons_unchecked(params, ics);
    let mut recommended = Vec::new();
    if eps.eps1_table <= tol {
        recommended.push(Recommendation::Standard);
    }
    if eps.eps_tilde <= tol && ics.z0 <= ics.e0 {
        recommended.push(Recommendation::Reverse);
    }
    if eps.eps2_table <= tol {
        recommended.push(Recommendation::Total);
    }
    let reversible = params.km1 > 0.0;
    DiagnosticsReport {
        epsilons: eps,
        d_b: bifurcation_distance(params, ics, reversible),
        reversible,
        tol,
        recommended,
    }
}
