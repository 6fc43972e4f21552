//! Trajectory export in the `t,z,c,e,w` CSV format.
//!
//! One row per output time, LF line endings, 17 significant digits so the
//! series can be re-read losslessly. States integrated in a reduced
//! coordinate system are completed through the conservation laws.

use crate::model::{State, System};
use crate::ode::{t_inf, BoxedRhs, Trajectory};

/// Coordinate system a trajectory was integrated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coords {
    /// State `[z, c]`.
    Zc,
    /// State `[c, w]`.
    Wc,
    /// State `[z, c, e, w]` from the raw mass-action field.
    Full,
}

impl Coords {
    pub fn dim(&self) -> usize {
        match self {
            Coords::Zc | Coords::Wc => 2,
            Coords::Full => 4,
        }
    }

    /// Initial state vector for this coordinate system.
    pub fn initial_state(&self, system: &System) -> Vec<f64> {
        let ics = &system.ics;
        match self {
            Coords::Zc => vec![ics.z0, ics.c0],
            Coords::Wc => vec![ics.c0, ics.w0],
            Coords::Full => vec![ics.z0, ics.c0, ics.e0, ics.w0],
        }
    }

    /// Complete a state vector of this coordinate system to all four
    /// concentrations.
    pub fn complete(&self, system: &System, y: &[f64]) -> State {
        match self {
            Coords::Zc => system.state_from_zc(y[0], y[1]),
            Coords::Wc => system.state_from_wc(y[0], y[1]),
            Coords::Full => State {
                z: y[0],
                c: y[1],
                e: y[2],
                w: y[3],
            },
        }
    }

    /// Vector field for this coordinate system.
    pub fn ode<'a>(&self, system: &'a System) -> BoxedRhs<'a> {
        match self {
            Coords::Zc => Box::new(system.ode_zc()),
            Coords::Wc => Box::new(system.ode_wc()),
            Coords::Full => Box::new(system.ode_mass_action()),
        }
    }
}

/// Render a trajectory as CSV with header `t,z,c,e,w`; appends a `t_inf`
/// column with the display-time transform when asked.
pub fn trajectory_csv(
    system: &System,
    traj: &Trajectory,
    coords: Coords,
    include_t_inf: bool,
) -> String {
    let mut out = String::with_capacity(traj.len() * 96);
    out.push_str(if include_t_inf {
        "t,z,c,e,w,t_inf\n"
    } else {
        "t,z,c,e,w\n"
    });
    for i in 0..traj.len() {
        let t = traj.times()[i];
        let s = coords.complete(system, traj.state(i));
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t, s.z, s.c, s.e, s.w
        ));
        if include_t_inf {
            out.push_str(&format!(",{:.16e}", t_inf(t)));
        }
        out.push('\n');
    }
    out
}
