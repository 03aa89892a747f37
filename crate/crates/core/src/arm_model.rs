//! Geometry, forward kinematics, Euler dynamics and box constraints of the
//! 4-DOF arm (three pitch joints plus a base rotation about z).

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Link lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmGeometry {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl Default for ArmGeometry {
    fn default() -> Self {
        Self {
            l1: 3.0,
            l2: 2.5,
            l3: 1.0,
        }
    }
}

impl ArmGeometry {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Result<Self, ConfigError> {
        let g = Self { l1, l2, l3 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [("l1", self.l1), ("l2", self.l2), ("l3", self.l3)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(format!(
                    "link length {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Maximum planar reach `L1 + L2 + L3`.
    pub fn reach(&self) -> f64 {
        self.l1 + self.l2 + self.l3
    }
}

/// Configuration angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct JointState {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
}

impl JointState {
    pub const fn new(alpha: f64, beta: f64, gamma: f64, theta: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            theta,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.theta]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl From<[f64; 4]> for JointState {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<JointState> for [f64; 4] {
    fn from(s: JointState) -> Self {
        s.to_array()
    }
}

/// Angular rates in radians per second, in the same axis order as [`JointState`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct ControlInput {
    pub d_alpha: f64,
    pub d_beta: f64,
    pub d_gamma: f64,
    pub d_theta: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(d_alpha: f64, d_beta: f64, d_gamma: f64, d_theta: f64) -> Self {
        Self {
            d_alpha,
            d_beta,
            d_gamma,
            d_theta,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.d_alpha, self.d_beta, self.d_gamma, self.d_theta]
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(self, k: f64) -> Self {
        let a = self.to_array();
        Self::from([a[0] * k, a[1] * k, a[2] * k, a[3] * k])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl From<[f64; 4]> for ControlInput {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<ControlInput> for [f64; 4] {
    fn from(u: ControlInput) -> Self {
        u.to_array()
    }
}

fn check_box(lower: &[f64; 4], upper: &[f64; 4], what: &str) -> Result<(), ConfigError> {
    for i in 0..4 {
        if !(lower[i].is_finite() && upper[i].is_finite()) || lower[i] > upper[i] {
            return Err(ConfigError::invalid(format!(
                "{what}: axis {i} has invalid bounds [{}, {}]",
                lower[i], upper[i]
            )));
        }
    }
    Ok(())
}

/// Componentwise angle bounds (alpha, beta, gamma, theta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl Default for JointLimits {
    fn default() -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        Self {
            lower: [-FRAC_PI_2, -FRAC_PI_2, -FRAC_PI_2, -PI],
            upper: [FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, PI],
        }
    }
}

impl JointLimits {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_box(&self.lower, &self.upper, "joint limits")
    }

    pub fn contains(&self, state: &JointState) -> bool {
        check_limits(state, self).is_satisfied()
    }
}

/// Componentwise rate bounds; every interval must contain zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputLimits {
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl Default for InputLimits {
    fn default() -> Self {
        Self::symmetric(1.0)
    }
}

impl InputLimits {
    pub fn symmetric(rate: f64) -> Self {
        Self {
            lower: [-rate; 4],
            upper: [rate; 4],
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check_box(&self.lower, &self.upper, "input limits")?;
        for i in 0..4 {
            if self.lower[i] > 0.0 || self.upper[i] < 0.0 {
                return Err(ConfigError::invalid(format!(
                    "input limits: axis {i} interval must contain zero"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, u: &ControlInput, tol: f64) -> bool {
        let a = u.to_array();
        (0..4).all(|i| a[i] >= self.lower[i] - tol && a[i] <= self.upper[i] + tol)
    }
}

/// The three tracked points of the arm, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianPoints {
    pub p2: [f64; 3],
    pub p3: [f64; 3],
    pub p4: [f64; 3],
}

/// Forward kinematics of the elbow chain.
///
/// The sign convention follows the arm's published model: the first link
/// leans away from the azimuth direction for positive `alpha`, the third
/// link hangs straight down at `gamma = 0`.
pub fn fk_points(state: &JointState, geom: &ArmGeometry) -> CartesianPoints {
    let (sa, ca) = state.alpha.sin_cos();
    let (sb, cb) = state.beta.sin_cos();
    let (sg, cg) = state.gamma.sin_cos();
    let (st, ct) = state.theta.sin_cos();

    let p2 = [-geom.l1 * sa * ct, -geom.l1 * sa * st, geom.l1 * ca];
    let p3 = [
        p2[0] + geom.l2 * cb * ct,
        p2[1] + geom.l2 * cb * st,
        p2[2] + geom.l2 * sb,
    ];
    let p4 = [
        p3[0] + geom.l3 * sg * ct,
        p3[1] + geom.l3 * sg * st,
        p3[2] - geom.l3 * cg,
    ];
    CartesianPoints { p2, p3, p4 }
}

/// End-effector position only.
pub fn end_effector(state: &JointState, geom: &ArmGeometry) -> [f64; 3] {
    fk_points(state, geom).p4
}

/// Signed planar radius of the end-effector along the azimuth direction, and
/// its height. `x4 = rho cos(theta)`, `y4 = rho sin(theta)`, so
/// `x4^2 + y4^2 = rho^2` regardless of `theta`.
pub fn radial_height(state: &JointState, geom: &ArmGeometry) -> (f64, f64) {
    let rho = -geom.l1 * state.alpha.sin() + geom.l2 * state.beta.cos() + geom.l3 * state.gamma.sin();
    let z = geom.l1 * state.alpha.cos() + geom.l2 * state.beta.sin() - geom.l3 * state.gamma.cos();
    (rho, z)
}

/// First and second derivatives of `rho` and `z` with respect to
/// (alpha, beta, gamma). Both functions are separable in the angles, so the
/// Hessians are diagonal.
#[derive(Debug, Clone, Copy)]
pub struct RadialHeightDerivatives {
    pub rho: f64,
    pub z: f64,
    pub d_rho: [f64; 3],
    pub dd_rho: [f64; 3],
    pub d_z: [f64; 3],
    pub dd_z: [f64; 3],
}

pub fn radial_height_derivatives(state: &JointState, geom: &ArmGeometry) -> RadialHeightDerivatives {
    let (sa, ca) = state.alpha.sin_cos();
    let (sb, cb) = state.beta.sin_cos();
    let (sg, cg) = state.gamma.sin_cos();
    let (l1, l2, l3) = (geom.l1, geom.l2, geom.l3);
    RadialHeightDerivatives {
        rho: -l1 * sa + l2 * cb + l3 * sg,
        z: l1 * ca + l2 * sb - l3 * cg,
        d_rho: [-l1 * ca, -l2 * sb, l3 * cg],
        dd_rho: [l1 * sa, -l2 * cb, -l3 * sg],
        d_z: [-l1 * sa, l2 * cb, l3 * sg],
        dd_z: [-l1 * ca, -l2 * sb, l3 * cg],
    }
}

/// Forward Euler update of every angle by `rate * dt`. No clamping.
pub fn step(state: &JointState, input: &ControlInput, dt: f64) -> JointState {
    JointState::new(
        state.alpha + input.d_alpha * dt,
        state.beta + input.d_beta * dt,
        state.gamma + input.d_gamma * dt,
        state.theta + input.d_theta * dt,
    )
}

/// Per-axis signed excess beyond the joint limits: positive above the upper
/// bound, negative below the lower bound, zero inside (bounds inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LimitViolation {
    pub excess: [f64; 4],
}

impl LimitViolation {
    pub fn is_satisfied(&self) -> bool {
        self.excess.iter().all(|&e| e == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.excess.iter().fold(0.0, |m, e| m.max(e.abs()))
    }
}

pub fn check_limits(state: &JointState, limits: &JointLimits) -> LimitViolation {
    let a = state.to_array();
    let mut excess = [0.0; 4];
    for i in 0..4 {
        if a[i] > limits.upper[i] {
            excess[i] = a[i] - limits.upper[i];
        } else if a[i] < limits.lower[i] {
            excess[i] = a[i] - limits.lower[i];
        }
    }
    LimitViolation { excess }
}

/// Componentwise projection onto the input box.
pub fn clamp_input(input: &ControlInput, limits: &InputLimits) -> ControlInput {
    let a = input.to_array();
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = a[i].clamp(limits.lower[i], limits.upper[i]);
    }
    ControlInput::from(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn assert_point(p: [f64; 3], q: [f64; 3]) {
        for i in 0..3 {
            assert_abs_diff_eq!(p[i], q[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn fk_zero_angles() {
        let pts = fk_points(&JointState::default(), &ArmGeometry::new(1.0, 1.0, 1.0).unwrap());
        assert_point(pts.p2, [0.0, 0.0, 1.0]);
        assert_point(pts.p3, [1.0, 0.0, 1.0]);
        assert_point(pts.p4, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn fk_folded_elbow() {
        let s = JointState::new(FRAC_PI_2, 0.0, FRAC_PI_2, 0.0);
        let pts = fk_points(&s, &ArmGeometry::new(1.0, 1.0, 1.0).unwrap());
        assert_point(pts.p2, [-1.0, 0.0, 0.0]);
        assert_point(pts.p3, [0.0, 0.0, 0.0]);
        assert_point(pts.p4, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn fk_base_rotation() {
        let s = JointState::new(0.0, 0.0, 0.0, FRAC_PI_2);
        let pts = fk_points(&s, &ArmGeometry::new(2.0, 1.0, 1.0).unwrap());
        assert_point(pts.p2, [0.0, 0.0, 2.0]);
        assert_point(pts.p3, [0.0, 1.0, 2.0]);
        assert_point(pts.p4, [0.0, 1.0, 1.0]);
    }

    #[test]
    fn radial_height_matches_fk() {
        let g = ArmGeometry::default();
        let s = JointState::new(-0.4, 0.7, 1.1, 2.3);
        let p4 = end_effector(&s, &g);
        let (rho, z) = radial_height(&s, &g);
        assert_abs_diff_eq!(p4[0].hypot(p4[1]), rho.abs(), epsilon = 1e-12);
        assert_abs_diff_eq!(p4[2], z, epsilon = 1e-12);
    }

    #[test]
    fn euler_step_examples() {
        let zero = JointState::default();
        assert_eq!(step(&zero, &ControlInput::ZERO, 0.1), zero);

        let s = step(&zero, &ControlInput::new(0.1, 0.2, -0.1, 0.05), 0.1);
        assert_abs_diff_eq!(s.alpha, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(s.beta, 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(s.gamma, -0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(s.theta, 0.005, epsilon = 1e-15);

        let s = step(
            &JointState::new(1.0, 1.0, 1.0, 1.0),
            &ControlInput::new(-1.0, -1.0, -1.0, -1.0),
            1.0,
        );
        assert_eq!(s, JointState::default());
    }

    #[test]
    fn limit_report() {
        let lim = JointLimits::default();
        let on_bound = JointState::new(FRAC_PI_2, -FRAC_PI_2, 0.0, PI);
        assert!(check_limits(&on_bound, &lim).is_satisfied());

        let over = JointState::new(FRAC_PI_2 + 0.1, 0.0, 0.0, 0.0);
        let v = check_limits(&over, &lim);
        assert_abs_diff_eq!(v.excess[0], 0.1, epsilon = 1e-12);
        assert_eq!(&v.excess[1..], &[0.0, 0.0, 0.0]);

        let under = JointState::new(0.0, 0.0, 0.0, -PI - 0.25);
        assert_abs_diff_eq!(check_limits(&under, &lim).excess[3], -0.25, epsilon = 1e-12);

        assert!(check_limits(&JointState::new(0.1, -0.2, 0.3, 1.0), &lim).is_satisfied());
    }

    #[test]
    fn clamp_examples() {
        let lim = InputLimits::symmetric(1.0);
        let u = ControlInput::new(0.5, -0.2, 0.0, 1.0);
        assert_eq!(clamp_input(&u, &lim), u);
        let u = ControlInput::new(1.7, -3.0, 0.2, 0.0);
        assert_eq!(clamp_input(&u, &lim), ControlInput::new(1.0, -1.0, 0.2, 0.0));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ArmGeometry::new(1.0, 0.0, 1.0).is_err());
        let lim = InputLimits {
            lower: [0.1, -1.0, -1.0, -1.0],
            upper: [1.0; 4],
        };
        assert!(lim.validate().is_err());
        let jl = JointLimits {
            lower: [1.0, 0.0, 0.0, 0.0],
            upper: [0.0, 1.0, 1.0, 1.0],
        };
        assert!(jl.validate().is_err());
    }
}
