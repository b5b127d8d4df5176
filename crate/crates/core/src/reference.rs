//! Reference construction: single harmonics in `D`, multi-harmonic
//! trajectories satisfying the dynamics, and the local harmonic
//! approximation of a sampled reference.

use nalgebra::linalg::SVD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::harmonic::{cone_margins, Frequency, HarmonicParams};
use crate::hmpc::{push_harmonic_dynamics, ReferenceParams};
use crate::model::{LtiModel, Matrix, OutputConstraint, Vector};
use crate::socp::Triplets;

pub fn advance(reference: &ReferenceParams, w: Frequency) -> ReferenceParams {
    reference.advance(w)
}

/// Desired centre and sine/cosine coefficients of one state component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateTarget {
    pub index: usize,
    pub center: f64,
    pub sine: f64,
    pub cosine: f64,
}

impl StateTarget {
    pub fn new(index: usize, center: f64, sine: f64, cosine: f64) -> Self {
        Self {
            index,
            center,
            sine,
            cosine,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            sine: self.sine * s,
            cosine: self.cosine * s,
            ..*self
        }
    }
}

/// Orthonormal basis of the null space of `m`.
fn nullspace(m: &Matrix) -> Matrix {
    let n = m.ncols();
    let mut sq = Matrix::zeros(n.max(m.nrows()), n);
    sq.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = SVD::new(sq, false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(1.0);
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    Matrix::from_fn(n, cols.len(), |i, j| vt[(cols[j], i)])
}

fn pinv_solve(m: &Matrix, b: &Vector) -> Result<Vector> {
    if m.ncols() == 0 {
        return Ok(Vector::zeros(0));
    }
    if m.nrows() == 0 {
        return Ok(Vector::zeros(m.ncols()));
    }
    SVD::new(m.clone(), true, true)
        .solve(b, 1e-12)
        .map_err(|e| Error::Numerical(e.to_string()))
}

/// Dense matrix of the `D` equalities in the variables `[x_e, x_s, x_c, u_e, u_s, u_c]`.
fn harmonic_dynamics_matrix(model: &LtiModel, w: f64) -> Matrix {
    let (nx, nu) = (model.nx(), model.nu());
    let mut t = Triplets::default();
    push_harmonic_dynamics(&mut t, 0, 0, 3 * nx, nx, nu, model.a(), model.b(), w);
    t.build(3 * nx, 3 * (nx + nu)).to_dense()
}

fn split_params(v: &Vector, nx: usize) -> ReferenceParams {
    let s = v.as_slice();
    ReferenceParams::new(
        HarmonicParams::from_stacked(&s[..3 * nx]).expect("length divisible by 3"),
        HarmonicParams::from_stacked(&s[3 * nx..]).expect("length divisible by 3"),
    )
}

/// Parameters in `D` whose targeted state components match `targets` in
/// least squares (minimum norm among the best fits). No constraint check.
pub fn harmonic_from_hint(model: &LtiModel, w: Frequency, targets: &[StateTarget]) -> Result<ReferenceParams> {
    let nx = model.nx();
    for t in targets {
        if t.index >= nx {
            return Err(Error::InvalidArgument(format!("target state {} out of range", t.index)));
        }
    }
    let basis = nullspace(&harmonic_dynamics_matrix(model, w.value()));
    let nt = targets.len();
    let mut sel = Matrix::zeros(3 * nt, basis.nrows());
    let mut rhs = Vector::zeros(3 * nt);
    for (r, t) in targets.iter().enumerate() {
        for (j, val) in [t.center, t.sine, t.cosine].into_iter().enumerate() {
            sel[(3 * r + j, j * nx + t.index)] = 1.0;
            rhs[3 * r + j] = val;
        }
    }
    let coeff = pinv_solve(&(&sel * &basis), &rhs)?;
    Ok(split_params(&(&basis * coeff), nx))
}

/// Like [`harmonic_from_hint`], and additionally requires membership in
/// `C_sigma`; otherwise reports the row with the smallest margin.
pub fn make_admissible_harmonic(
    model: &LtiModel,
    cons: &OutputConstraint,
    w: Frequency,
    targets: &[StateTarget],
    sigma: f64,
) -> Result<ReferenceParams> {
    model.controllability_index()?;
    cons.check_model(model)?;
    let r = harmonic_from_hint(model, w, targets)?;
    let margins = cone_margins(&r.x, &r.u, cons, sigma)?;
    let (row, margin) = margins.worst_row();
    if margin < 0.0 {
        return Err(Error::InfeasibleHint { row, margin });
    }
    Ok(r)
}

/// One harmonic of a multi-harmonic reference, at `order * w_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicComponent {
    pub order: usize,
    pub x_sine: Vector,
    pub x_cosine: Vector,
    pub u_sine: Vector,
    pub u_cosine: Vector,
}

/// `x_r(t) = x_re + sum_i x_rs,i sin(i w_r t) + x_rc,i cos(i w_r t)`, likewise for `u_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHarmonicReference {
    pub w_r: Frequency,
    pub x_center: Vector,
    pub u_center: Vector,
    pub components: Vec<HarmonicComponent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHarmonicSpec {
    pub w_r: Frequency,
    pub harmonics: usize,
    pub seed: u64,
    /// Largest deviation of any shaped state from its centre.
    pub amplitude: f64,
    /// States that receive random shape targets.
    pub shaped_states: Vec<usize>,
    /// Desired equilibrium components.
    pub center: Vec<(usize, f64)>,
}

impl MultiHarmonicReference {
    pub fn eval(&self, t: i64) -> (Vector, Vector) {
        let mut x = self.x_center.clone();
        let mut u = self.u_center.clone();
        for c in &self.components {
            let (s, co) = (c.order as f64 * self.w_r.value() * t as f64).sin_cos();
            x += &c.x_sine * s + &c.x_cosine * co;
            u += &c.u_sine * s + &c.u_cosine * co;
        }
        (x, u)
    }

    /// Number of samples after which the signal repeats, when `2 pi / w_r` is an integer.
    pub fn period(&self) -> Option<usize> {
        let p = self.w_r.period();
        ((p - p.round()).abs() < 1e-9 && p >= 1.0).then(|| p.round() as usize)
    }

    /// `max_t |x(t+1) - A x(t) - B u(t)|` over `t in range`.
    pub fn dynamics_residual(&self, model: &LtiModel, range: std::ops::Range<i64>) -> f64 {
        range
            .map(|t| {
                let (x, u) = self.eval(t);
                let (x1, _) = self.eval(t + 1);
                (x1 - model.a() * x - model.b() * u).amax()
            })
            .fold(0.0, f64::max)
    }

    /// Smallest constraint margin over `range`.
    pub fn constraint_margin(&self, cons: &OutputConstraint, range: std::ops::Range<i64>) -> Result<f64> {
        let mut m = f64::INFINITY;
        for t in range {
            let (x, u) = self.eval(t);
            m = m.min(cons.min_margin(&x, &u)?);
        }
        Ok(m)
    }

    /// Sum of two references with the same base frequency.
    pub fn superpose(&self, other: &Self) -> Result<Self> {
        if (self.w_r.value() - other.w_r.value()).abs() > 0.0 {
            return Err(Error::InvalidArgument("base frequencies differ".into()));
        }
        check_len("state centre", self.x_center.len(), other.x_center.len())?;
        check_len("input centre", self.u_center.len(), other.u_center.len())?;
        let mut components = self.components.clone();
        for c in &other.components {
            match components.iter_mut().find(|d| d.order == c.order) {
                Some(d) => {
                    d.x_sine += &c.x_sine;
                    d.x_cosine += &c.x_cosine;
                    d.u_sine += &c.u_sine;
                    d.u_cosine += &c.u_cosine;
                }
                None => components.push(c.clone()),
            }
        }
        components.sort_by_key(|c| c.order);
        Ok(Self {
            w_r: self.w_r,
            x_center: &self.x_center + &other.x_center,
            u_center: &self.u_center + &other.u_center,
            components,
        })
    }

    fn scale_oscillation(&mut self, s: f64) {
        for c in &mut self.components {
            c.x_sine *= s;
            c.x_cosine *= s;
            c.u_sine *= s;
            c.u_cosine *= s;
        }
    }
}

impl std::ops::Add for &MultiHarmonicReference {
    type Output = MultiHarmonicReference;

    /// Panics when the base frequencies or dimensions differ; see [`MultiHarmonicReference::superpose`].
    fn add(self, rhs: &MultiHarmonicReference) -> MultiHarmonicReference {
        self.superpose(rhs).expect("compatible references")
    }
}

/// Random multi-harmonic trajectory of the model: each harmonic lies in `D`
/// at its own frequency and the centre is an equilibrium.
pub fn make_multi_harmonic(model: &LtiModel, spec: &MultiHarmonicSpec) -> Result<MultiHarmonicReference> {
    let (nx, nu) = (model.nx(), model.nu());
    if spec.harmonics == 0 {
        return Err(Error::InvalidArgument("at least one harmonic is required".into()));
    }
    if !(spec.amplitude >= 0.0 && spec.amplitude.is_finite()) {
        return Err(Error::InvalidArgument("amplitude must be finite and nonnegative".into()));
    }
    let shaped: Vec<usize> = if spec.shaped_states.is_empty() {
        (0..nx).collect()
    } else {
        spec.shaped_states.clone()
    };
    if let Some(&bad) = shaped.iter().chain(spec.center.iter().map(|(i, _)| i)).find(|&&i| i >= nx) {
        return Err(Error::InvalidArgument(format!("state index {bad} out of range")));
    }

    // Equilibrium centre.
    let mut eq = Matrix::zeros(nx, nx + nu);
    eq.view_mut((0, 0), (nx, nx)).copy_from(&(Matrix::identity(nx, nx) - model.a()));
    eq.view_mut((0, nx), (nx, nu)).copy_from(&(-model.b()));
    let basis = nullspace(&eq);
    let mut sel = Matrix::zeros(spec.center.len(), nx + nu);
    let mut rhs = Vector::zeros(spec.center.len());
    for (r, &(i, v)) in spec.center.iter().enumerate() {
        sel[(r, i)] = 1.0;
        rhs[r] = v;
    }
    let c = pinv_solve(&(&sel * &basis), &rhs)?;
    let center = &basis * c;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut components = Vec::with_capacity(spec.harmonics);
    for order in 1..=spec.harmonics {
        let scale = 1.0 / order as f64;
        let targets: Vec<StateTarget> = shaped
            .iter()
            .map(|&i| StateTarget::new(i, 0.0, scale * rng.gen_range(-1.0..1.0), scale * rng.gen_range(-1.0..1.0)))
            .collect();
        let w = Frequency::new(order as f64 * spec.w_r.value())?;
        let p = harmonic_from_hint(model, w, &targets)?;
        components.push(HarmonicComponent {
            order,
            x_sine: p.x.sine,
            x_cosine: p.x.cosine,
            u_sine: p.u.sine,
            u_cosine: p.u.cosine,
        });
    }
    let mut r = MultiHarmonicReference {
        w_r: spec.w_r,
        x_center: center.rows(0, nx).into_owned(),
        u_center: center.rows(nx, nu).into_owned(),
        components,
    };

    let horizon = r.period().unwrap_or(1024) as i64;
    let mut peak: f64 = 0.0;
    for t in 0..horizon {
        let (x, _) = r.eval(t);
        for &i in &shaped {
            peak = peak.max((x[i] - r.x_center[i]).abs());
        }
    }
    if peak > 0.0 {
        r.scale_oscillation(spec.amplitude / peak);
    }
    Ok(r)
}

/// Fits `(v_e, v_s, v_c)` per component to the values and central-difference
/// slopes of the sampled reference at relative times `0` and `N`.
///
/// `x_window[j]` and `u_window[j]` hold the samples at time `t - 1 + j`,
/// `j = 0..=N+2`.
pub fn local_harmonic_approx(
    x_window: &[Vector],
    u_window: &[Vector],
    w: Frequency,
    horizon: usize,
) -> Result<ReferenceParams> {
    check_len("state window", horizon + 3, x_window.len())?;
    check_len("input window", horizon + 3, u_window.len())?;
    let wv = w.value();
    let (sn, cn) = (wv * horizon as f64).sin_cos();
    let sw = wv.sin();
    #[rustfmt::skip]
    let m = Matrix::from_row_slice(4, 3, &[
        1.0, 0.0,     1.0,
        0.0, sw,      0.0,
        1.0, sn,      cn,
        0.0, cn * sw, -sn * sw,
    ]);
    let svd = SVD::new(m, true, true);
    let fit = |window: &[Vector]| -> Result<HarmonicParams> {
        let dim = window[0].len();
        let mut p = HarmonicParams::zeros(dim);
        for i in 0..dim {
            let v = |j: usize| window[j][i];
            let rhs = Vector::from_vec(vec![
                v(1),
                0.5 * (v(2) - v(0)),
                v(horizon + 1),
                0.5 * (v(horizon + 2) - v(horizon)),
            ]);
            let sol = svd.solve(&rhs, 1e-12).map_err(|e| Error::Numerical(e.to_string()))?;
            p.center[i] = sol[0];
            p.sine[i] = sol[1];
            p.cosine[i] = sol[2];
        }
        Ok(p)
    };
    Ok(ReferenceParams::new(fit(x_window)?, fit(u_window)?))
}

/// A reference trajectory as seen by the controllers.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSignal {
    /// Single harmonic; `params` are expressed at `t = 0`.
    Harmonic { params: ReferenceParams, w: Frequency },
    Multi(MultiHarmonicReference),
}

impl ReferenceSignal {
    pub fn sample(&self, t: i64) -> (Vector, Vector) {
        match self {
            Self::Harmonic { params, w } => params.eval(*w, t),
            Self::Multi(m) => m.eval(t),
        }
    }

    /// Samples at `t, t+1, ..., t+len-1`.
    pub fn window(&self, t: i64, len: usize) -> (Vec<Vector>, Vec<Vector>) {
        (0..len as i64).map(|j| self.sample(t + j)).unzip()
    }

    /// Harmonic parameters in relative time at `t`, for a controller running at
    /// frequency `w` with horizon `horizon`. Exact for a harmonic reference at
    /// the same frequency; a local fit otherwise.
    pub fn params_at(&self, t: i64, w: Frequency, horizon: usize) -> Result<ReferenceParams> {
        if let Self::Harmonic { params, w: wr } = self {
            if wr.value() == w.value() {
                return Ok(params.advance_by(w, t));
            }
        }
        let (xs, us) = self.window(t - 1, horizon + 3);
        local_harmonic_approx(&xs, &us, w, horizon)
    }

    pub fn period(&self) -> Option<usize> {
        let p = match self {
            Self::Harmonic { w, .. } => w.period(),
            Self::Multi(m) => m.w_r.period(),
        };
        ((p - p.round()).abs() < 1e-9 && p >= 1.0).then(|| p.round() as usize)
    }

    /// Largest oscillation amplitude of state `i` about its mean over one period.
    pub fn amplitude(&self, i: usize, samples: usize) -> f64 {
        let xs: Vec<f64> = (0..samples as i64).map(|t| self.sample(t).0[i]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        xs.iter().fold(0.0, |m, v| m.max((v - mean).abs()))
    }
}
