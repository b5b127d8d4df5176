//! Discrete-time LTI plants and polytopic output constraints.
//!
//! Two concrete instances ship with the crate: a small double integrator used
//! as an oracle-friendly test plant, and a linear ball-and-plate surrogate used
//! by the case-study scenarios.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Gravity used by the ball-and-plate surrogate.
pub const GRAVITY: f64 = 9.81;
/// Sample time of the ball-and-plate surrogate, in seconds.
pub const BALL_PLATE_SAMPLE_TIME: f64 = 0.2;
/// Input scaling applied to the ball-and-plate surrogate.
pub const BALL_PLATE_INPUT_SCALE: f64 = 50.0;
/// Plate angle bound (15 degrees).
pub const PLATE_ANGLE_MAX: f64 = 0.2618;
/// Plate angular-rate bound.
pub const PLATE_RATE_MAX: f64 = 0.5;
/// Bound on the scaled inputs.
pub const INPUT_MAX: f64 = 1.0;
/// Distance from the origin to the vertices of the hexagonal position constraint.
pub const HEXAGON_RADIUS: f64 = 1.0;

/// `x(t+1) = A x(t) + B u(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    a: Matrix,
    b: Matrix,
}

impl LtiModel {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        check_len("B rows", a.nrows(), b.nrows())?;
        if a.nrows() == 0 || b.ncols() == 0 {
            return Err(Error::InvalidArgument("empty model".into()));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        check_len("state", self.nx(), x.len())?;
        check_len("input", self.nu(), u.len())?;
        Ok(&self.a * x + &self.b * u)
    }

    /// `[B, AB, ..., A^{k-1} B]`.
    pub fn controllability_matrix(&self, k: usize) -> Matrix {
        let (nx, nu) = (self.nx(), self.nu());
        let mut out = Matrix::zeros(nx, nu * k);
        let mut block = self.b.clone();
        for i in 0..k {
            out.view_mut((0, i * nu), (nx, nu)).copy_from(&block);
            block = &self.a * block;
        }
        out
    }

    /// Smallest `k` with `rank [B, AB, ..., A^{k-1} B] = n_x`.
    pub fn controllability_index(&self) -> Result<usize> {
        let nx = self.nx();
        let mut rank = 0;
        for k in 1..=nx {
            rank = numerical_rank(&self.controllability_matrix(k));
            if rank == nx {
                return Ok(k);
            }
        }
        Err(Error::Uncontrollable { rank, n: nx })
    }
}

pub(crate) fn numerical_rank(m: &Matrix) -> usize {
    if m.is_empty() {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let tol = (m.nrows().max(m.ncols()) as f64) * f64::EPSILON * smax.max(1e-300);
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// `y_lo <= E x + F u <= y_hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputConstraint {
    e: Matrix,
    f: Matrix,
    lo: Vector,
    hi: Vector,
}

impl OutputConstraint {
    pub fn new(e: Matrix, f: Matrix, lo: Vector, hi: Vector) -> Result<Self> {
        let ny = e.nrows();
        check_len("F rows", ny, f.nrows())?;
        check_len("lower bound", ny, lo.len())?;
        check_len("upper bound", ny, hi.len())?;
        if let Some(i) = (0..ny).find(|&i| !(lo[i] < hi[i])) {
            return Err(Error::InvalidArgument(format!(
                "constraint row {i}: lower bound {} is not below upper bound {}",
                lo[i], hi[i]
            )));
        }
        Ok(Self { e, f, lo, hi })
    }

    pub fn e(&self) -> &Matrix {
        &self.e
    }

    pub fn f(&self) -> &Matrix {
        &self.f
    }

    pub fn lo(&self) -> &Vector {
        &self.lo
    }

    pub fn hi(&self) -> &Vector {
        &self.hi
    }

    pub fn ny(&self) -> usize {
        self.e.nrows()
    }

    pub fn nx(&self) -> usize {
        self.e.ncols()
    }

    pub fn nu(&self) -> usize {
        self.f.ncols()
    }

    pub fn check_model(&self, model: &LtiModel) -> Result<()> {
        check_len("E columns", model.nx(), self.nx())?;
        check_len("F columns", model.nu(), self.nu())
    }

    pub fn value(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        check_len("state", self.nx(), x.len())?;
        check_len("input", self.nu(), u.len())?;
        Ok(&self.e * x + &self.f * u)
    }

    /// Smallest signed distance to either bound over all rows; negative when violated.
    pub fn min_margin(&self, x: &Vector, u: &Vector) -> Result<f64> {
        let y = self.value(x, u)?;
        Ok((0..self.ny())
            .map(|i| (self.hi[i] - y[i]).min(y[i] - self.lo[i]))
            .fold(f64::INFINITY, f64::min))
    }

    pub fn is_satisfied(&self, x: &Vector, u: &Vector, slack: f64) -> Result<bool> {
        let y = self.value(x, u)?;
        Ok((0..self.ny()).all(|i| self.lo[i] - slack <= y[i] && y[i] <= self.hi[i] + slack))
    }

    /// Whether row `i` depends on the input.
    pub(crate) fn row_has_input(&self, i: usize) -> bool {
        self.f.row(i).iter().any(|v| *v != 0.0)
    }
}

/// Unit-step discrete double integrator with symmetric boxes `|x_i| <= 5`, `|u| <= 1`.
pub fn make_double_integrator() -> (LtiModel, OutputConstraint) {
    let a = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let b = Matrix::from_column_slice(2, 1, &[0.5, 1.0]);
    let model = LtiModel::new(a, b).expect("double integrator is well formed");

    let mut e = Matrix::zeros(3, 2);
    e[(0, 0)] = 1.0;
    e[(1, 1)] = 1.0;
    let mut f = Matrix::zeros(3, 1);
    f[(2, 0)] = 1.0;
    let hi = Vector::from_vec(vec![5.0, 5.0, 1.0]);
    let lo = -&hi;
    let cons = OutputConstraint::new(e, f, lo, hi).expect("double integrator constraints");
    (model, cons)
}

/// One axis of the plate: state `(p, p', theta, theta')`, input `theta''`,
/// with `p'' = (5g/7) theta`, discretised exactly by zero-order hold.
fn ball_plate_axis(h: f64) -> (Matrix, Vector) {
    let k = 5.0 * GRAVITY / 7.0;
    // The continuous generator is nilpotent, so the exponential series terminates.
    #[rustfmt::skip]
    let a = Matrix::from_row_slice(4, 4, &[
        1.0, h,   k * h * h / 2.0, k * h.powi(3) / 6.0,
        0.0, 1.0, k * h,           k * h * h / 2.0,
        0.0, 0.0, 1.0,             h,
        0.0, 0.0, 0.0,             1.0,
    ]);
    let b = Vector::from_vec(vec![
        k * h.powi(4) / 24.0,
        k * h.powi(3) / 6.0,
        h * h / 2.0,
        h,
    ]);
    (a, b)
}

/// Index of the ball position along each plate axis in the surrogate state.
pub const BALL_PLATE_POSITION: [usize; 2] = [0, 4];

/// Linear ball-and-plate surrogate (8 states, 2 inputs).
///
/// State ordering is `(p1, p1', theta1, theta1', p2, p2', theta2, theta2')`.
/// The model input is the plate angular acceleration divided by
/// [`BALL_PLATE_INPUT_SCALE`]. Constraint rows, in order: the two inputs,
/// angle and rate of each axis, then six hexagon half-planes on `(p1, p2)`.
pub fn make_ball_and_plate() -> (LtiModel, OutputConstraint) {
    let (a1, b1) = ball_plate_axis(BALL_PLATE_SAMPLE_TIME);
    let mut a = Matrix::zeros(8, 8);
    let mut b = Matrix::zeros(8, 2);
    for axis in 0..2 {
        let o = 4 * axis;
        a.view_mut((o, o), (4, 4)).copy_from(&a1);
        for r in 0..4 {
            b[(o + r, axis)] = b1[r] * BALL_PLATE_INPUT_SCALE;
        }
    }
    let model = LtiModel::new(a, b).expect("ball and plate is well formed");

    let ny = 2 + 4 + 6;
    let mut e = Matrix::zeros(ny, 8);
    let mut f = Matrix::zeros(ny, 2);
    let mut lo = Vector::zeros(ny);
    let mut hi = Vector::zeros(ny);

    for i in 0..2 {
        f[(i, i)] = 1.0;
        lo[i] = -INPUT_MAX;
        hi[i] = INPUT_MAX;
    }
    for axis in 0..2 {
        let o = 4 * axis;
        let r = 2 + 2 * axis;
        e[(r, o + 2)] = 1.0;
        lo[r] = -PLATE_ANGLE_MAX;
        hi[r] = PLATE_ANGLE_MAX;
        e[(r + 1, o + 3)] = 1.0;
        lo[r + 1] = -PLATE_RATE_MAX;
        hi[r + 1] = PLATE_RATE_MAX;
    }
    // Regular hexagon: one half-plane per edge, normals at 30 + 60k degrees.
    let apothem = HEXAGON_RADIUS * (std::f64::consts::PI / 6.0).cos();
    for k in 0..6 {
        let ang = (30.0 + 60.0 * k as f64).to_radians();
        let r = 6 + k;
        e[(r, BALL_PLATE_POSITION[0])] = ang.cos();
        e[(r, BALL_PLATE_POSITION[1])] = ang.sin();
        // Only the outward side binds; the opposite edge bounds the other side.
        lo[r] = -1e3;
        hi[r] = apothem;
    }
    let cons = OutputConstraint::new(e, f, lo, hi).expect("ball and plate constraints");
    (model, cons)
}

/// Build a matrix from row-major nested rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::InvalidArgument(format!(
                "row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}
