//! Harmonic signals `v(k) = v_e + v_s sin(wk) + v_c cos(wk)` and the
//! parameter-only admissibility tests: the dynamics set `D` (linear
//! equalities) and the cone set `C_sigma` (one pair of 3-dimensional
//! second-order cones per output row).

use std::fmt;

use crate::error::{check_len, Error, Result};
use crate::model::{LtiModel, OutputConstraint, Vector};

/// Tolerance for membership in the dynamics set.
pub const D_TOLERANCE: f64 = 1e-9;

/// Angular frequency in radians per sample, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Frequency(f64);

impl Frequency {
    pub fn new(w: f64) -> Result<Self> {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "frequency must be finite and positive, got {w}"
            )));
        }
        Ok(Self(w))
    }

    /// Frequency of a signal with period `period` samples.
    pub fn from_period(period: f64) -> Result<Self> {
        Self::new(2.0 * std::f64::consts::PI / period)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn period(self) -> f64 {
        2.0 * std::f64::consts::PI / self.0
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The triple `(v_e, v_s, v_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicParams {
    pub center: Vector,
    pub sine: Vector,
    pub cosine: Vector,
}

impl HarmonicParams {
    pub fn new(center: Vector, sine: Vector, cosine: Vector) -> Result<Self> {
        check_len("sine parameter", center.len(), sine.len())?;
        check_len("cosine parameter", center.len(), cosine.len())?;
        Ok(Self {
            center,
            sine,
            cosine,
        })
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            center: Vector::zeros(m),
            sine: Vector::zeros(m),
            cosine: Vector::zeros(m),
        }
    }

    pub fn constant(v: Vector) -> Self {
        let m = v.len();
        Self {
            center: v,
            sine: Vector::zeros(m),
            cosine: Vector::zeros(m),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, w: Frequency, k: i64) -> Vector {
        self.eval_at(w.value() * k as f64)
    }

    /// Value at phase `theta = w k`.
    pub fn eval_at(&self, theta: f64) -> Vector {
        let (s, c) = theta.sin_cos();
        &self.center + &self.sine * s + &self.cosine * c
    }

    /// One-step time shift: the centre is kept and `(v_s, v_c)` is mapped by
    /// the block rotation `[[I cos w, -I sin w], [I sin w, I cos w]]`.
    pub fn rotate(&self, w: Frequency) -> Self {
        self.rotate_by(w.value())
    }

    /// Rotation by an arbitrary angle; `rotate_by(w * n)` is an `n`-step shift.
    pub fn rotate_by(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            center: self.center.clone(),
            sine: &self.sine * c - &self.cosine * s,
            cosine: &self.sine * s + &self.cosine * c,
        }
    }

    /// `(v_e, v_s, v_c)` stacked into one vector of length `3m`.
    pub fn stacked(&self) -> Vector {
        let m = self.dim();
        let mut out = Vector::zeros(3 * m);
        out.rows_mut(0, m).copy_from(&self.center);
        out.rows_mut(m, m).copy_from(&self.sine);
        out.rows_mut(2 * m, m).copy_from(&self.cosine);
        out
    }

    pub fn from_stacked(v: &[f64]) -> Result<Self> {
        if v.len() % 3 != 0 {
            return Err(Error::InvalidArgument(format!(
                "stacked harmonic parameters must have length divisible by 3, got {}",
                v.len()
            )));
        }
        let m = v.len() / 3;
        Ok(Self {
            center: Vector::from_row_slice(&v[..m]),
            sine: Vector::from_row_slice(&v[m..2 * m]),
            cosine: Vector::from_row_slice(&v[2 * m..]),
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            center: &self.center * s,
            sine: &self.sine * s,
            cosine: &self.cosine * s,
        }
    }

    /// `sqrt(|v_s|^2 + |v_c|^2)`.
    pub fn oscillation_norm(&self) -> f64 {
        (self.sine.norm_squared() + self.cosine.norm_squared()).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = |a: &Vector, b: &Vector| (a - b).amax();
        d(&self.center, &other.center)
            .max(d(&self.sine, &other.sine))
            .max(d(&self.cosine, &other.cosine))
    }
}

impl std::ops::Add for &HarmonicParams {
    type Output = HarmonicParams;

    fn add(self, rhs: &HarmonicParams) -> HarmonicParams {
        HarmonicParams {
            center: &self.center + &rhs.center,
            sine: &self.sine + &rhs.sine,
            cosine: &self.cosine + &rhs.cosine,
        }
    }
}

impl std::ops::Sub for &HarmonicParams {
    type Output = HarmonicParams;

    fn sub(self, rhs: &HarmonicParams) -> HarmonicParams {
        HarmonicParams {
            center: &self.center - &rhs.center,
            sine: &self.sine - &rhs.sine,
            cosine: &self.cosine - &rhs.cosine,
        }
    }
}

/// `(y_e, y_s, y_c)` with `y_* = E x_* + F u_*`.
pub fn output_params(
    xh: &HarmonicParams,
    uh: &HarmonicParams,
    c: &OutputConstraint,
) -> Result<HarmonicParams> {
    check_len("state parameters", c.nx(), xh.dim())?;
    check_len("input parameters", c.nu(), uh.dim())?;
    Ok(HarmonicParams {
        center: c.e() * &xh.center + c.f() * &uh.center,
        sine: c.e() * &xh.sine + c.f() * &uh.sine,
        cosine: c.e() * &xh.cosine + c.f() * &uh.cosine,
    })
}

/// Largest absolute residual of the three equalities defining `D`.
pub fn dynamics_residual(
    xh: &HarmonicParams,
    uh: &HarmonicParams,
    model: &LtiModel,
    w: Frequency,
) -> Result<f64> {
    check_len("state parameters", model.nx(), xh.dim())?;
    check_len("input parameters", model.nu(), uh.dim())?;
    let (a, b) = (model.a(), model.b());
    let (s, c) = w.value().sin_cos();
    let r_e = &xh.center - a * &xh.center - b * &uh.center;
    let r_s = &xh.sine * c - &xh.cosine * s - a * &xh.sine - b * &uh.sine;
    let r_c = &xh.sine * s + &xh.cosine * c - a * &xh.cosine - b * &uh.cosine;
    Ok(r_e.amax().max(r_s.amax()).max(r_c.amax()))
}

/// Per-row slack of the upper and lower cones.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeMarginReport {
    /// `y_hi - sigma - y_e - |(y_s, y_c)|` per row.
    pub upper: Vec<f64>,
    /// `y_e - y_lo - sigma - |(y_s, y_c)|` per row.
    pub lower: Vec<f64>,
}

impl ConeMarginReport {
    pub fn min(&self) -> f64 {
        self.upper
            .iter()
            .chain(&self.lower)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Row with the smallest margin, and that margin.
    pub fn worst_row(&self) -> (usize, f64) {
        (0..self.upper.len())
            .map(|i| (i, self.upper[i].min(self.lower[i])))
            .fold((0, f64::INFINITY), |acc, r| if r.1 < acc.1 { r } else { acc })
    }

    pub fn is_member(&self) -> bool {
        self.min() >= 0.0
    }
}

pub fn cone_margins(
    xh: &HarmonicParams,
    uh: &HarmonicParams,
    c: &OutputConstraint,
    sigma: f64,
) -> Result<ConeMarginReport> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    let y = output_params(xh, uh, c)?;
    let ny = c.ny();
    let mut upper = Vec::with_capacity(ny);
    let mut lower = Vec::with_capacity(ny);
    for i in 0..ny {
        let amp = y.sine[i].hypot(y.cosine[i]);
        upper.push(c.hi()[i] - sigma - y.center[i] - amp);
        lower.push(y.center[i] - c.lo()[i] - sigma - amp);
    }
    Ok(ConeMarginReport { upper, lower })
}

/// Parameters in `D` (within [`D_TOLERANCE`]) and in `C_sigma`.
pub fn is_admissible(
    xh: &HarmonicParams,
    uh: &HarmonicParams,
    model: &LtiModel,
    c: &OutputConstraint,
    w: Frequency,
    sigma: f64,
) -> bool {
    let in_d = matches!(dynamics_residual(xh, uh, model, w), Ok(r) if r <= D_TOLERANCE);
    in_d && matches!(cone_margins(xh, uh, c, sigma), Ok(m) if m.is_member())
}

/// Admissible with a strictly positive `sigma`, so constraints hold strictly for all time.
pub fn is_strictly_admissible(
    xh: &HarmonicParams,
    uh: &HarmonicParams,
    model: &LtiModel,
    c: &OutputConstraint,
    w: Frequency,
    sigma: f64,
) -> bool {
    sigma > 0.0 && is_admissible(xh, uh, model, c, w, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_double_integrator, Matrix};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn scalar(e: f64, s: f64, c: f64) -> HarmonicParams {
        HarmonicParams::new(v(&[e]), v(&[s]), v(&[c])).unwrap()
    }

    #[test]
    fn frequency_must_be_positive() {
        assert!(Frequency::new(0.0).is_err());
        assert!(Frequency::new(-1.0).is_err());
        assert!(Frequency::new(f64::NAN).is_err());
        assert_abs_diff_eq!(Frequency::from_period(32.0).unwrap().value(), PI / 16.0);
    }

    #[test]
    fn constant_signal() {
        let p = HarmonicParams::constant(v(&[1.5, -2.0]));
        let w = Frequency::new(0.3).unwrap();
        for k in -5..20 {
            assert_eq!(p.eval(w, k), v(&[1.5, -2.0]));
        }
    }

    #[test]
    fn periodicity_at_pi_over_16() {
        let p = HarmonicParams::new(v(&[0.1, 0.2]), v(&[1.0, -0.5]), v(&[0.3, 0.7])).unwrap();
        let w = Frequency::new(PI / 16.0).unwrap();
        for k in -40..40 {
            assert!((p.eval(w, k) - p.eval(w, k + 32)).amax() < 1e-12);
        }
    }

    #[test]
    fn quarter_period_value_and_rotation() {
        let w = Frequency::new(PI / 2.0).unwrap();
        assert_abs_diff_eq!(scalar(0.0, 1.0, 0.0).eval(w, 1)[0], 1.0, epsilon = 1e-15);
        let r = scalar(0.0, 1.0, 0.0).rotate(w);
        assert_abs_diff_eq!(r.sine[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.cosine[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_angle_rotation_is_identity() {
        let p = HarmonicParams::new(v(&[1.0]), v(&[2.0]), v(&[3.0])).unwrap();
        assert_eq!(p.rotate_by(0.0), p);
    }

    #[test]
    fn full_turn_returns_original() {
        let p = HarmonicParams::new(v(&[1.0, 2.0]), v(&[-0.4, 0.9]), v(&[2.5, -1.0])).unwrap();
        let w = Frequency::new(PI / 16.0).unwrap();
        let mut q = p.clone();
        for _ in 0..32 {
            q = q.rotate(w);
        }
        assert!(p.max_abs_diff(&q) < 1e-12);
    }

    #[test]
    fn stacked_layout() {
        let p = HarmonicParams::new(v(&[1.0, 2.0]), v(&[3.0, 4.0]), v(&[5.0, 6.0])).unwrap();
        assert_eq!(p.stacked().as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(HarmonicParams::from_stacked(p.stacked().as_slice()).unwrap(), p);
        assert!(HarmonicParams::from_stacked(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn equilibrium_pair_is_in_d() {
        let (m, _) = make_double_integrator();
        // Any position with zero velocity and zero input is an equilibrium.
        let xh = HarmonicParams::constant(v(&[0.7, 0.0]));
        let uh = HarmonicParams::zeros(1);
        let w = Frequency::new(0.4).unwrap();
        assert_eq!(dynamics_residual(&xh, &uh, &m, w).unwrap(), 0.0);
    }

    /// Solve the D equations for the input parameters by least squares, given
    /// state parameters that are consistent with some input.
    fn d_member_from_inputs(m: &LtiModel, w: Frequency, us: f64, uc: f64) -> (HarmonicParams, HarmonicParams) {
        // (x_s, x_c) from [[cI - A, -sI], [sI, cI - A]] [x_s; x_c] = [B u_s; B u_c].
        let (s, c) = w.value().sin_cos();
        let n = m.nx();
        let mut lhs = Matrix::zeros(2 * n, 2 * n);
        let eye = Matrix::identity(n, n);
        lhs.view_mut((0, 0), (n, n)).copy_from(&(&eye * c - m.a()));
        lhs.view_mut((0, n), (n, n)).copy_from(&(&eye * -s));
        lhs.view_mut((n, 0), (n, n)).copy_from(&(&eye * s));
        lhs.view_mut((n, n), (n, n)).copy_from(&(&eye * c - m.a()));
        let mut rhs = Vector::zeros(2 * n);
        rhs.rows_mut(0, n).copy_from(&(m.b() * us));
        rhs.rows_mut(n, n).copy_from(&(m.b() * uc));
        let sol = lhs.lu().solve(&rhs).unwrap();
        let xh = HarmonicParams::new(
            v(&[0.3, 0.0]),
            sol.rows(0, n).into_owned(),
            sol.rows(n, n).into_owned(),
        )
        .unwrap();
        // Recover the inputs from the states by least squares, independently.
        let bpinv = m.b().clone().pseudo_inverse(1e-14).unwrap();
        let ue = &bpinv * (&xh.center - m.a() * &xh.center);
        let us_ls = &bpinv * (&xh.sine * c - &xh.cosine * s - m.a() * &xh.sine);
        let uc_ls = &bpinv * (&xh.sine * s + &xh.cosine * c - m.a() * &xh.cosine);
        (xh, HarmonicParams::new(ue, us_ls, uc_ls).unwrap())
    }

    #[test]
    fn least_squares_inputs_put_random_states_in_d() {
        let (m, _) = make_double_integrator();
        let w = Frequency::new(0.37).unwrap();
        let (xh, uh) = d_member_from_inputs(&m, w, 0.8, -0.3);
        assert!(dynamics_residual(&xh, &uh, &m, w).unwrap() <= 1e-10);
    }

    #[test]
    fn perturbation_leaves_d() {
        let (m, _) = make_double_integrator();
        let w = Frequency::new(0.37).unwrap();
        let (mut xh, uh) = d_member_from_inputs(&m, w, 0.8, -0.3);
        let eps = 1e-3;
        xh.sine[1] += eps;
        let r = dynamics_residual(&xh, &uh, &m, w).unwrap();
        assert!(r > 0.5 * eps, "residual {r}");
    }

    #[test]
    fn d_membership_gives_one_step_consistency() {
        let (m, _) = make_double_integrator();
        let w = Frequency::new(0.91).unwrap();
        let (xh, uh) = d_member_from_inputs(&m, w, -0.2, 0.5);
        for k in -10..50 {
            let pred = m.step(&xh.eval(w, k), &uh.eval(w, k)).unwrap();
            assert!((pred - xh.eval(w, k + 1)).amax() < 1e-10);
        }
    }

    #[test]
    fn centered_constant_margins_equal_distance_to_bounds() {
        let c = OutputConstraint::new(
            Matrix::identity(1, 1),
            Matrix::zeros(1, 1),
            v(&[-1.0]),
            v(&[3.0]),
        )
        .unwrap();
        let r = cone_margins(&scalar(0.5, 0.0, 0.0), &HarmonicParams::zeros(1), &c, 0.0).unwrap();
        assert_abs_diff_eq!(r.upper[0], 2.5);
        assert_abs_diff_eq!(r.lower[0], 1.5);
        assert_abs_diff_eq!(r.min(), 1.5);
    }

    #[test]
    fn amplitude_filling_the_band_has_zero_margins() {
        let c = OutputConstraint::new(
            Matrix::identity(1, 1),
            Matrix::zeros(1, 1),
            v(&[-1.0]),
            v(&[1.0]),
        )
        .unwrap();
        let a = 1.0 / 2f64.sqrt();
        let r = cone_margins(&scalar(0.0, a, a), &HarmonicParams::zeros(1), &c, 0.0).unwrap();
        assert_abs_diff_eq!(r.upper[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.lower[0], 0.0, epsilon = 1e-15);
        assert!(r.is_member());
    }

    #[test]
    fn negative_sigma_rejected() {
        let (_, c) = make_double_integrator();
        assert!(cone_margins(&HarmonicParams::zeros(2), &HarmonicParams::zeros(1), &c, -1.0).is_err());
    }

    #[test]
    fn admissibility_checks() {
        let (m, c) = make_double_integrator();
        let w = Frequency::new(0.3).unwrap();
        let origin_x = HarmonicParams::zeros(2);
        let origin_u = HarmonicParams::zeros(1);
        assert!(is_admissible(&origin_x, &origin_u, &m, &c, w, 1e-3));
        assert!(is_strictly_admissible(&origin_x, &origin_u, &m, &c, w, 1e-3));
        assert!(!is_strictly_admissible(&origin_x, &origin_u, &m, &c, w, 0.0));

        // An equilibrium outside the position box is in D but violates a cone row.
        let far = HarmonicParams::constant(v(&[6.0, 0.0]));
        assert_eq!(dynamics_residual(&far, &origin_u, &m, w).unwrap(), 0.0);
        assert!(!is_admissible(&far, &origin_u, &m, &c, w, 0.0));
        let r = cone_margins(&far, &origin_u, &c, 0.0).unwrap();
        assert_eq!(r.worst_row().0, 0);
    }

    proptest! {
        #[test]
        fn rotation_preserves_oscillation_energy(
            s in proptest::collection::vec(-10.0..10.0f64, 3),
            c in proptest::collection::vec(-10.0..10.0f64, 3),
            w in 1e-3..3.1f64,
        ) {
            let p = HarmonicParams::new(Vector::zeros(3), v(&s), v(&c)).unwrap();
            let r = p.rotate(Frequency::new(w).unwrap());
            let before = p.sine.norm_squared() + p.cosine.norm_squared();
            let after = r.sine.norm_squared() + r.cosine.norm_squared();
            prop_assert!((before - after).abs() <= 1e-12 * (1.0 + before));
        }

        #[test]
        fn rotation_is_a_one_step_time_shift(
            e in proptest::collection::vec(-5.0..5.0f64, 2),
            s in proptest::collection::vec(-5.0..5.0f64, 2),
            c in proptest::collection::vec(-5.0..5.0f64, 2),
            w in 1e-3..3.1f64,
            k in -50i64..50,
        ) {
            let p = HarmonicParams::new(v(&e), v(&s), v(&c)).unwrap();
            let w = Frequency::new(w).unwrap();
            let lhs = p.rotate(w).eval(w, k);
            let rhs = p.eval(w, k + 1);
            prop_assert!((lhs - rhs).amax() <= 1e-10);
        }
    }
}
