//! Reduced models of the activation reaction and the projection machinery
//! behind them.
//!
//! Six one-dimensional reductions are provided: the two classical
//! nullcline substitutions (in `z` and in `w`), the standard reduction
//! valid for slow binding, the product-slow reduction valid for slow
//! catalysis, the total reduction (saturation constant `ks` in place of
//! `km`), and the reverse reduction valid when both `km1` and `k2` are
//! small with `z0 <= e0`. Each reduction carries the initial value
//! prescribed for its slow variable by the corresponding layer problem.
//!
//! [`fenichel_projection`] builds the tangent-space projector
//! `P = I - N (Df N)^-1 Df` for the two parameter limits of interest, and
//! [`center_manifold`] gives the quadratic manifold coefficients for the
//! small-total-pool limit, which reproduces the standard reduction by an
//! entirely different route.

use serde::Serialize;
use thiserror::Error;

use crate::model::{derived, InitialConditions, RateConstants, System};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    /// `km1 = k2 = 0`; the reduction divides by `km`.
    #[error("km vanishes (km1 = k2 = 0)")]
    ZeroKm,
    /// The layer analysis behind the reduced initial conditions assumes
    /// no preformed complex.
    #[error("reduced initial conditions require c0 = 0, got {0}")]
    UnsupportedC0(f64),
    /// `Df N` vanished: normal hyperbolicity is lost at this point.
    #[error("singular Df*N = {0} (normal hyperbolicity lost)")]
    SingularDfN(f64),
}

/// Which reduced model to use and which variable it evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReducedKind {
    /// Nullcline substitution into the `z` equation.
    ClassicalZ,
    /// Nullcline substitution into the `w` equation.
    ClassicalW,
    /// Slow-binding projection; valid as `k1` becomes small.
    StandardZ,
    /// Slow-catalysis projection for `z`; valid as `k2` becomes small.
    PSlowZ,
    /// `w` reduction with `ks` in place of `km`.
    TotalW,
    /// Linear reverse reduction; valid for small `km1`, `k2` and `z0 <= e0`.
    ReverseW,
}

/// The slow variable a reduction evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SlowVariable {
    Z,
    W,
}

impl ReducedKind {
    pub fn variable(&self) -> SlowVariable {
        match self {
            ReducedKind::ClassicalZ | ReducedKind::StandardZ | ReducedKind::PSlowZ => {
                SlowVariable::Z
            }
            ReducedKind::ClassicalW | ReducedKind::TotalW | ReducedKind::ReverseW => {
                SlowVariable::W
            }
        }
    }

    pub const ALL: [ReducedKind; 6] = [
        ReducedKind::ClassicalZ,
        ReducedKind::ClassicalW,
        ReducedKind::StandardZ,
        ReducedKind::PSlowZ,
        ReducedKind::TotalW,
        ReducedKind::ReverseW,
    ];
}

/// Initial value for the slow variable of a reduction.
///
/// The `z`-reductions start from `z0` except for the slow-catalysis case,
/// where the approach to the manifold conserves `z + c` and the slow flow
/// starts from `z0 - lambda_z`, with `lambda_z` recomputed at `k2 = 0`.
/// All `w`-reductions start from `w0`.
pub fn make_reduced_ic(
    kind: ReducedKind,
    params: &RateConstants,
    ics: &InitialConditions,
) -> Result<f64, ReductionError> {
    if ics.c0 != 0.0 {
        return Err(ReductionError::UnsupportedC0(ics.c0));
    }
    Ok(match kind {
        ReducedKind::ClassicalZ | ReducedKind::StandardZ => ics.z0,
        ReducedKind::PSlowZ => {
            let frozen = RateConstants { k2: 0.0, ..*params };
            ics.z0 - derived(&frozen, ics).lambda_z
        }
        ReducedKind::ClassicalW | ReducedKind::TotalW | ReducedKind::ReverseW => ics.w0,
    })
}

/// A reduced model bound to a parameter set, ready to evaluate or integrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedModel {
    pub kind: ReducedKind,
    pub system: System,
    pub slow_ic: f64,
}

impl ReducedModel {
    pub fn new(
        kind: ReducedKind,
        params: RateConstants,
        ics: InitialConditions,
    ) -> Result<Self, ReductionError> {
        let system = System::new(params, ics);
        if matches!(kind, ReducedKind::StandardZ) && system.derived.km == 0.0 {
            return Err(ReductionError::ZeroKm);
        }
        let slow_ic = make_reduced_ic(kind, &params, &ics)?;
        Ok(Self {
            kind,
            system,
            slow_ic,
        })
    }

    /// Right-hand side of the reduction at slow-variable value `x`.
    ///
    /// Returns NaN where the defining expression leaves the feasible band;
    /// the integrator reports that as a non-finite derivative.
    pub fn rhs(&self, x: f64) -> f64 {
        let p = &self.system.params;
        let d = &self.system.derived;
        match self.kind {
            ReducedKind::ClassicalZ => -p.k2 * (d.et - x) * x / (d.km + 2.0 * x),
            ReducedKind::ClassicalW => match self.system.h_minus(x, d.km) {
                Ok(h) => p.k2 * h,
                Err(_) => f64::NAN,
            },
            ReducedKind::StandardZ => -(p.k2 / d.km) * (d.et - x) * x,
            ReducedKind::PSlowZ => {
                let ks = d.ks;
                let denom = ks * ks + (d.et + 2.0 * x) * ks + 2.0 * x * x;
                -p.k2 * x * (d.et - x) * (ks + 2.0 * x) / denom
            }
            ReducedKind::TotalW => match self.system.h_minus(x, d.ks) {
                Ok(h) => p.k2 * h,
                Err(_) => f64::NAN,
            },
            ReducedKind::ReverseW => p.k2 * (self.system.ics.z0 - x),
        }
    }

    /// ODE closure over the one-dimensional slow state.
    pub fn ode(&self) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
        move |_t, y, dy| dy[0] = self.rhs(y[0])
    }

    /// Closed-form solution of the slow variable where one exists
    /// (standard and reverse reductions).
    pub fn closed_form(&self, t: f64) -> Option<f64> {
        match self.kind {
            ReducedKind::StandardZ => Some(standard_closed_form(&self.system, t).0),
            ReducedKind::ReverseW => Some(reverse_closed_form(&self.system, t)),
            _ => None,
        }
    }
}

/// Closed-form `(z(t), w(t))` of the standard reduction:
/// `z = z0 et / (e0 exp(k2 et t / km) + z0)`, `w = z0 - z`.
pub fn standard_closed_form(system: &System, t: f64) -> (f64, f64) {
    let d = &system.derived;
    let ics = &system.ics;
    let growth = (system.params.k2 * d.et * t / d.km).exp();
    let z = ics.z0 * d.et / (ics.e0 * growth + ics.z0);
    (z, ics.z0 - z)
}

/// Closed-form `w(t)` of the reverse reduction:
/// `w = z0 - (z0 - w0) exp(-k2 t)`.
pub fn reverse_closed_form(system: &System, t: f64) -> f64 {
    let ics = &system.ics;
    ics.z0 - (ics.z0 - ics.w0) * (-system.params.k2 * t).exp()
}

/// The two parameter limits with a normally hyperbolic critical manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Tfpv {
    /// `k1 -> 0`: critical manifold `c = 0`, standard reduction.
    SlowBinding,
    /// `k2 -> 0`: critical manifold `c = (et - z) z / (ks + 2 z)`,
    /// product-slow reduction.
    SlowCatalysis,
}

/// Ingredients of the tangent-space projector at a `(z, c)` point:
/// the fast direction `n`, the constraint `f` with gradient `df`, and the
/// projector `pi = I - n (df n)^-1 df`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionData {
    pub n: [f64; 2],
    pub f: f64,
    pub df: [f64; 2],
    pub pi: [[f64; 2]; 2],
}

/// Build the projector for the given limit at `(z, c)`.
///
/// For [`Tfpv::SlowBinding`] the projector is constant,
/// `[[1, ks/km], [0, 0]]`; for [`Tfpv::SlowCatalysis`] it is assembled
/// numerically from `n = [-1, 1]` and the gradient of the constraint
/// `f = k1 (et - z) z - (km1 + 2 k1 z) c` (the negative of the fast `z`
/// rate, so that `n f` reproduces the unperturbed field).
pub fn fenichel_projection(
    system: &System,
    tfpv: Tfpv,
    point: (f64, f64),
) -> Result<ProjectionData, ReductionError> {
    let (z, c) = point;
    let p = &system.params;
    let et = system.derived.et;
    let (n, f, df) = match tfpv {
        Tfpv::SlowBinding => ([p.km1, -(p.km1 + p.k2)], c, [0.0, 1.0]),
        Tfpv::SlowCatalysis => {
            let f = p.k1 * (et - z) * z - (p.km1 + 2.0 * p.k1 * z) * c;
            let df_dz = p.k1 * (et - 2.0 * z) - 2.0 * p.k1 * c;
            let df_dc = -(p.km1 + 2.0 * p.k1 * z);
            ([-1.0, 1.0], f, [df_dz, df_dc])
        }
    };
    let dfn = df[0] * n[0] + df[1] * n[1];
    let scale = (df[0].abs() * n[0].abs() + df[1].abs() * n[1].abs()).max(1.0);
    if dfn.abs() < 1e-12 * scale {
        return Err(ReductionError::SingularDfN(dfn));
    }
    let mut pi = [[0.0; 2]; 2];
    for r in 0..2 {
        for col in 0..2 {
            let identity = if r == col { 1.0 } else { 0.0 };
            pi[r][col] = identity - n[r] * df[col] / dfn;
        }
    }
    Ok(ProjectionData { n, f, df, pi })
}

/// Perturbation field projected onto the slow tangent space at `(z, c)`.
///
/// For the slow-binding limit the perturbation is the binding flux; for
/// the slow-catalysis limit it is the catalytic drain `(0, -k2 c)` in the
/// sign convention of [`fenichel_projection`]. Evaluated on the critical
/// manifold this gives the reduced slow flow.
pub fn projected_slow_field(
    system: &System,
    tfpv: Tfpv,
    point: (f64, f64),
) -> Result<[f64; 2], ReductionError> {
    let (z, c) = point;
    let p = &system.params;
    let et = system.derived.et;
    let g = match tfpv {
        Tfpv::SlowBinding => [
            -p.k1 * (et - z) * z + 2.0 * p.k1 * z * c,
            p.k1 * (et - z) * z - 2.0 * p.k1 * z * c,
        ],
        Tfpv::SlowCatalysis => [0.0, -p.k2 * c],
    };
    let proj = fenichel_projection(system, tfpv, point)?;
    Ok([
        proj.pi[0][0] * g[0] + proj.pi[0][1] * g[1],
        proj.pi[1][0] * g[0] + proj.pi[1][1] * g[1],
    ])
}

/// Quadratic coefficients `(alpha, beta, gamma)` of the local invariant
/// manifold `c = alpha z^2 + beta et z + gamma et^2` in the small-pool
/// limit: `(-1/km, 1/km, 0)`.
pub fn center_manifold(params: &RateConstants) -> Result<(f64, f64, f64), ReductionError> {
    let km = params.km();
    if km == 0.0 {
        return Err(ReductionError::ZeroKm);
    }
    Ok((-1.0 / km, 1.0 / km, 0.0))
}

/// Residual of the invariance equation for the quadratic manifold at
/// `(z, et)`; decays with the cube of the scale, which is what makes the
/// quadratic truncation consistent.
pub fn invariance_residual(params: &RateConstants, z: f64, et: f64) -> f64 {
    let (alpha, beta, _gamma) = match center_manifold(params) {
        Ok(c) => c,
        Err(_) => return f64::NAN,
    };
    let h = alpha * z * z + beta * et * z;
    let dh_dz = 2.0 * alpha * z + beta * et;
    let k1 = params.k1;
    let zdot = -k1 * (et - z) * z + (params.km1 + 2.0 * k1 * z) * h;
    let cdot = k1 * (et - z) * z - (params.km1 + params.k2 + 2.0 * k1 * z) * h;
    dh_dz * zdot - cdot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, IntegrationSettings};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn slow_catalysis_regime() -> (RateConstants, InitialConditions) {
        (
            RateConstants::new(1.0, 5.0, 0.01).unwrap(),
            InitialConditions::new(9.0, 1.0).unwrap(),
        )
    }

    fn fast_exchange_regime() -> (RateConstants, InitialConditions) {
        (
            RateConstants::new(2.0, 500.0, 500.0).unwrap(),
            InitialConditions::new(1.0, 9.0).unwrap(),
        )
    }

    fn model(kind: ReducedKind, pi: (RateConstants, InitialConditions)) -> ReducedModel {
        ReducedModel::new(kind, pi.0, pi.1).unwrap()
    }

    #[test]
    fn classical_z_examples() {
        let m = model(ReducedKind::ClassicalZ, slow_catalysis_regime());
        assert_eq!(m.rhs(0.0), 0.0);
        assert_eq!(m.rhs(m.system.derived.et), 0.0);
        assert_relative_eq!(m.rhs(5.0), -0.01 * 25.0 / 15.01, max_relative = 1e-14);
        assert_relative_eq!(m.rhs(5.0), -0.0166556, max_relative = 1e-5);
    }

    #[test]
    fn classical_w_examples() {
        let m = model(ReducedKind::ClassicalW, slow_catalysis_regime());
        assert_abs_diff_eq!(m.rhs(m.system.ics.z0), 0.0, epsilon = 1e-14);
        // k2 h-(0; km), with h-(0) from the quadratic-root oracle.
        assert_relative_eq!(m.rhs(0.0), 0.01 * 0.6256815, max_relative = 1e-6);
        let zero_k2 = ReducedModel::new(
            ReducedKind::ClassicalW,
            RateConstants::new(1.0, 5.0, 0.0).unwrap(),
            slow_catalysis_regime().1,
        )
        .unwrap();
        for w in [0.0, 2.0, 7.0] {
            assert_eq!(zero_k2.rhs(w), 0.0);
        }
    }

    #[test]
    fn standard_closed_form_examples() {
        let m = model(ReducedKind::StandardZ, fast_exchange_regime());
        let (z, w) = standard_closed_form(&m.system, 0.0);
        assert_relative_eq!(z, 1.0, max_relative = 1e-14);
        assert_abs_diff_eq!(w, 0.0, epsilon = 1e-14);
        // k2 et / km = 10, so at t = 0.1 the exponent is 1.
        let (z, _) = standard_closed_form(&m.system, 0.1);
        let oracle = 10.0 / (9.0 * std::f64::consts::E + 1.0);
        assert_relative_eq!(z, oracle, max_relative = 1e-14);
        assert_relative_eq!(z, 0.3927030, max_relative = 1e-6);
        // Long-time limits.
        let (z, w) = standard_closed_form(&m.system, 1e3);
        assert_abs_diff_eq!(z, 0.0, epsilon = 1e-12);
        assert_relative_eq!(w, m.system.ics.z0, max_relative = 1e-12);
    }

    #[test]
    fn standard_closed_form_matches_its_ode() {
        let m = model(ReducedKind::StandardZ, fast_exchange_regime());
        let settings = IntegrationSettings::with_t_end(0.5);
        let traj = integrate(m.ode(), &[m.slow_ic], &settings).unwrap();
        for &t in traj.times().iter().step_by(7) {
            let (z, _) = standard_closed_form(&m.system, t);
            assert_abs_diff_eq!(traj.eval(t)[0], z, epsilon = 1e-8);
        }
    }

    #[test]
    fn pslow_examples() {
        let m = model(ReducedKind::PSlowZ, slow_catalysis_regime());
        assert_eq!(m.rhs(0.0), 0.0);
        assert_eq!(m.rhs(m.system.derived.et), 0.0);
        // ks = 5, et = 10, k2 = 0.01, z = 5.
        assert_relative_eq!(m.rhs(5.0), -3.75 / 175.0, max_relative = 1e-14);
    }

    #[test]
    fn pslow_approaches_standard_for_large_ks() {
        let params = RateConstants::new(1.0, 1e6, 0.01).unwrap();
        let ics = InitialConditions::new(9.0, 1.0).unwrap();
        let ps = ReducedModel::new(ReducedKind::PSlowZ, params, ics).unwrap();
        // Compare against -(k2/ks)(et - z) z directly.
        for z in [1.0, 3.0, 7.0] {
            let limit = -(params.k2 / params.ks()) * (ps.system.derived.et - z) * z;
            let rel = ((ps.rhs(z) - limit) / limit).abs();
            assert!(rel < 1e-4, "relative deviation {rel} at z = {z}");
        }
    }

    #[test]
    fn total_w_examples() {
        let m = model(ReducedKind::TotalW, slow_catalysis_regime());
        assert_abs_diff_eq!(m.rhs(m.system.ics.z0), 0.0, epsilon = 1e-14);
        // k2 h-(0; ks) with ks = 5: oracle root of c^2 - 15c + 9 = 0.
        let oracle = 0.5 * (15.0 - (225.0f64 - 36.0).sqrt());
        assert_relative_eq!(m.rhs(0.0), 0.01 * oracle, max_relative = 1e-13);
        assert_relative_eq!(m.rhs(0.0), 0.0062614, max_relative = 1e-4);
        // With k2 factored out the rate is h-(; ks) itself.
        assert_relative_eq!(
            m.rhs(2.0) / m.system.params.k2,
            m.system.h_minus(2.0, m.system.derived.ks).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn reverse_examples() {
        let params = RateConstants::new(1.0, 0.0, 0.1).unwrap();
        let ics = InitialConditions::new(5.0, 5.0).unwrap();
        let m = ReducedModel::new(ReducedKind::ReverseW, params, ics).unwrap();
        assert_eq!(m.rhs(5.0), 0.0);
        assert_eq!(reverse_closed_form(&m.system, 0.0), 0.0);
        assert_relative_eq!(
            reverse_closed_form(&m.system, 10.0),
            5.0 * (1.0 - (-1.0f64).exp()),
            max_relative = 1e-14
        );
    }

    #[test]
    fn reduced_ics() {
        let (p, ics) = slow_catalysis_regime();
        assert_eq!(
            make_reduced_ic(ReducedKind::StandardZ, &p, &ics).unwrap(),
            9.0
        );
        assert_eq!(
            make_reduced_ic(ReducedKind::ReverseW, &p, &ics).unwrap(),
            0.0
        );
        // Slow-catalysis start: z0 - lambda_z evaluated at k2 = 0.
        let ic = make_reduced_ic(ReducedKind::PSlowZ, &p, &ics).unwrap();
        let oracle = 9.0 - 0.5 * (15.0 - 125.0f64.sqrt());
        assert_relative_eq!(ic, oracle, max_relative = 1e-14);
        assert_relative_eq!(ic, 7.0901699, max_relative = 1e-7);
        let with_c0 = InitialConditions::with_intermediates(9.0, 1.0, 0.5, 0.0).unwrap();
        assert!(matches!(
            make_reduced_ic(ReducedKind::StandardZ, &p, &with_c0),
            Err(ReductionError::UnsupportedC0(_))
        ));
    }

    #[test]
    fn projection_slow_binding_matrix() {
        let params = RateConstants::new(0.7, 3.0, 1.0).unwrap();
        let sys = System::new(params, InitialConditions::new(2.0, 1.0).unwrap());
        let proj = fenichel_projection(&sys, Tfpv::SlowBinding, (1.0, 0.0)).unwrap();
        assert_relative_eq!(proj.pi[0][0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(proj.pi[0][1], 0.75, max_relative = 1e-12);
        assert_eq!(proj.pi[1][0], 0.0);
        assert_abs_diff_eq!(proj.pi[1][1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn projection_slow_catalysis_matches_pslow_field() {
        let (p, ics) = slow_catalysis_regime();
        let sys = System::new(p, ics);
        let reduced = ReducedModel::new(ReducedKind::PSlowZ, p, ics).unwrap();
        for z in [0.5, 2.0, 4.5, 8.0] {
            let c = (sys.derived.et - z) * z / (sys.derived.ks + 2.0 * z);
            let field = projected_slow_field(&sys, Tfpv::SlowCatalysis, (z, c)).unwrap();
            let rel = ((field[0] - reduced.rhs(z)) / reduced.rhs(z)).abs();
            assert!(rel < 1e-10, "slow field mismatch {rel} at z = {z}");
        }
    }

    #[test]
    fn projection_singular_at_tangency() {
        // With km1 = 0, Df*N = k1 (2c - et) vanishes on the line c = et/2,
        // where the two critical branches meet.
        let params = RateConstants::new(1.0, 0.0, 0.0).unwrap();
        let sys = System::new(params, InitialConditions::new(2.0, 2.0).unwrap());
        let err = fenichel_projection(&sys, Tfpv::SlowCatalysis, (1.0, sys.derived.ct));
        assert!(matches!(err, Err(ReductionError::SingularDfN(_))));
    }

    #[test]
    fn center_manifold_coefficients() {
        let params = RateConstants::new(1.0, 3.0, 1.0).unwrap();
        let (a, b, g) = center_manifold(&params).unwrap();
        assert_eq!((a, b, g), (-0.25, 0.25, 0.0));
        assert!(matches!(
            center_manifold(&RateConstants::new(1.0, 0.0, 0.0).unwrap()),
            Err(ReductionError::ZeroKm)
        ));
    }

    #[test]
    fn invariance_residual_cubic_decay() {
        // Scale both z and et along a ray; on the ray z = et the residual
        // vanishes identically (the point is an equilibrium), so probe the
        // generic direction z = et / 3 instead.
        let params = RateConstants::new(1.0, 3.0, 1.0).unwrap();
        let s = 1e-3;
        let r1 = invariance_residual(&params, s, 3.0 * s);
        let r2 = invariance_residual(&params, 0.5 * s, 1.5 * s);
        let ratio = r1 / r2;
        assert!((ratio - 8.0).abs() < 1.6, "cubic decay ratio {ratio}");
    }

    #[test]
    fn center_manifold_flow_equals_standard_reduction() {
        // -k2 h(z, et) with the quadratic manifold h is -(k2/km)(et - z) z,
        // the same expression as the standard reduction.
        let params = RateConstants::new(2.0, 3.0, 1.0).unwrap();
        let ics = InitialConditions::new(0.01, 0.02).unwrap();
        let m = ReducedModel::new(ReducedKind::StandardZ, params, ics).unwrap();
        let (alpha, beta, _) = center_manifold(&params).unwrap();
        let et = m.system.derived.et;
        for z in [0.001, 0.005, 0.02] {
            let manifold_flow = -params.k2 * (alpha * z * z + beta * et * z);
            assert_relative_eq!(manifold_flow, m.rhs(z), max_relative = 1e-12);
        }
    }

    proptest! {
        /// The projector is idempotent and annihilates the fast direction
        /// at normally hyperbolic points, for both limits.
        #[test]
        fn projector_structure(
            k1 in 1e-2..1e2f64,
            km1 in 1e-3..1e2f64,
            k2 in 1e-3..1e2f64,
            z0 in 1e-2..1e1f64,
            e0 in 1e-2..1e1f64,
            zfrac in 0.05..0.95f64,
        ) {
            let sys = System::new(
                RateConstants::new(k1, km1, k2).unwrap(),
                InitialConditions::new(z0, e0).unwrap(),
            );
            let z = zfrac * sys.derived.et;
            let c = (sys.derived.et - z) * z / (sys.derived.ks + 2.0 * z);
            for tfpv in [Tfpv::SlowBinding, Tfpv::SlowCatalysis] {
                let proj = match fenichel_projection(&sys, tfpv, (z, c)) {
                    Ok(p) => p,
                    Err(ReductionError::SingularDfN(_)) => continue,
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                };
                let pi = proj.pi;
                for r in 0..2 {
                    for s in 0..2 {
                        let sq = pi[r][0] * pi[0][s] + pi[r][1] * pi[1][s];
                        prop_assert!((sq - pi[r][s]).abs() < 1e-12);
                    }
                    let ann = pi[r][0] * proj.n[0] + pi[r][1] * proj.n[1];
                    let nscale = proj.n[0].abs().max(proj.n[1].abs());
                    prop_assert!(ann.abs() < 1e-12 * nscale.max(1.0));
                }
            }
        }

        /// Reduced z-rates are nonpositive and w-rates nonnegative on the
        /// physical ranges.
        #[test]
        fn reduced_rate_signs(
            k1 in 1e-2..1e2f64,
            km1 in 1e-3..1e2f64,
            k2 in 1e-3..1e2f64,
            z0 in 1e-2..1e1f64,
            e0 in 1e-2..1e1f64,
            frac in 0.0..1.0f64,
        ) {
            let params = RateConstants::new(k1, km1, k2).unwrap();
            let ics = InitialConditions::new(z0, e0).unwrap();
            for kind in ReducedKind::ALL {
                let m = ReducedModel::new(kind, params, ics).unwrap();
                match kind.variable() {
                    SlowVariable::Z => {
                        let z = frac * m.system.derived.et;
                        prop_assert!(m.rhs(z) <= 1e-12);
                    }
                    SlowVariable::W => {
                        let w = frac * z0;
                        prop_assert!(m.rhs(w) >= -1e-12);
                    }
                }
            }
        }

        /// The classical and standard z-rates differ by at most the factor
        /// 2z/km relative.
        #[test]
        fn classical_vs_standard_ratio(
            k1 in 1e-2..1e2f64,
            km1 in 1e-2..1e2f64,
            k2 in 1e-2..1e2f64,
            z0 in 1e-2..1e1f64,
            e0 in 1e-2..1e1f64,
            frac in 0.01..0.99f64,
        ) {
            let params = RateConstants::new(k1, km1, k2).unwrap();
            let ics = InitialConditions::new(z0, e0).unwrap();
            let classical = ReducedModel::new(ReducedKind::ClassicalZ, params, ics).unwrap();
            let standard = ReducedModel::new(ReducedKind::StandardZ, params, ics).unwrap();
            let z = frac * classical.system.derived.et;
            let km = classical.system.derived.km;
            let gap = (classical.rhs(z) - standard.rhs(z)).abs();
            let bound = (2.0 * z / km) * standard.rhs(z).abs();
            prop_assert!(gap <= bound * (1.0 + 1e-12) + 1e-300);
        }
    }
}
