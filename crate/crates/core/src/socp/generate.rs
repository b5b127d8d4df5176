//! Random feasible conic programs for solver testing.

use rand::Rng;

use super::{CscMatrix, ConicProgram};

/// Shape limits of [`random_program`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomProgramSpec {
    pub min_vars: usize,
    pub max_vars: usize,
    /// Probability of each entry of the constraint matrices being nonzero.
    pub density: f64,
}

impl Default for RandomProgramSpec {
    fn default() -> Self {
        Self {
            min_vars: 2,
            max_vars: 60,
            density: 0.3,
        }
    }
}

fn sparse_rows(rng: &mut impl Rng, rows: usize, n: usize, density: f64) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::new();
    for i in 0..rows {
        // Every row touches at least one variable.
        let anchor = rng.gen_range(0..n);
        t.push((i, anchor, rng.gen_range(-1.0..1.0)));
        for j in (0..n).filter(|&j| j != anchor) {
            if rng.gen_bool(density) {
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    t
}

fn times(t: &[(usize, usize, f64)], z: &[f64], rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    for &(i, j, v) in t {
        out[i] += v * z[j];
    }
    out
}

/// A convex program with boxes and second-order cones that is strictly
/// feasible at a random interior point.
pub fn random_program(rng: &mut impl Rng, spec: &RandomProgramSpec) -> ConicProgram {
    let n = rng.gen_range(spec.min_vars..=spec.max_vars);
    let z0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut prog = ConicProgram::empty(n);

    let k = rng.gen_range(1..=n);
    let l = sparse_rows(rng, k, n, spec.density);
    let mut p = Vec::new();
    for &(r, i, a) in &l {
        for &(s, j, b) in &l {
            if r == s {
                p.push((i, j, a * b));
            }
        }
    }
    for i in 0..n {
        p.push((i, i, rng.gen_range(0.01..1.0)));
    }
    prog.p = CscMatrix::from_triplets(n, n, &p);
    prog.q = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();

    let n_eq = rng.gen_range(0..=n / 3);
    let eq = sparse_rows(rng, n_eq, n, spec.density);
    prog.eq_rhs = times(&eq, &z0, n_eq);
    prog.eq_matrix = CscMatrix::from_triplets(n_eq, n, &eq);

    let n_box = rng.gen_range(0..=n);
    let bx = sparse_rows(rng, n_box, n, spec.density);
    let g = times(&bx, &z0, n_box);
    prog.box_lo = g.iter().map(|v| v - rng.gen_range(0.05..1.0)).collect();
    prog.box_hi = g.iter().map(|v| v + rng.gen_range(0.05..1.0)).collect();
    prog.box_matrix = CscMatrix::from_triplets(n_box, n, &bx);

    let n_cones = rng.gen_range(0..=4);
    let dims: Vec<usize> = (0..n_cones).map(|_| rng.gen_range(2..=5)).collect();
    let rows: usize = dims.iter().sum();
    let cm = sparse_rows(rng, rows, n, spec.density);
    let c = times(&cm, &z0, rows);
    let mut offset = vec![0.0; rows];
    let mut o = 0;
    for &d in &dims {
        // Pick the slack at z0, then solve for the offset.
        let tail: Vec<f64> = (1..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = tail.iter().map(|v| v * v).sum::<f64>().sqrt();
        offset[o] = norm + rng.gen_range(0.05..1.0) - c[o];
        for (i, v) in tail.iter().enumerate() {
            offset[o + 1 + i] = v - c[o + 1 + i];
        }
        o += d;
    }
    prog.cone_matrix = CscMatrix::from_triplets(rows, n, &cm);
    prog.cone_offset = offset;
    prog.cone_dims = dims;
    prog
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_programs_are_valid_and_strictly_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let prog = random_program(&mut rng, &RandomProgramSpec::default());
            prog.validate().unwrap();
            assert!(prog.n >= 2 && prog.n <= 60);
        }
    }
}
