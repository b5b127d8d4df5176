//! Projections onto the product of a box and second-order cones.

/// Euclidean projection onto `{(t, v) : |v| <= t}`.
pub fn project_soc(y: &mut [f64]) {
    let (head, tail) = y.split_first_mut().expect("cone of dimension zero");
    let norm = tail.iter().map(|v| v * v).sum::<f64>().sqrt();
    let t = *head;
    if norm <= -t {
        *head = 0.0;
        tail.iter_mut().for_each(|v| *v = 0.0);
    } else if norm <= t {
        // Inside already.
    } else {
        let alpha = 0.5 * (1.0 + t / norm);
        *head = 0.5 * (norm + t);
        tail.iter_mut().for_each(|v| *v *= alpha);
    }
}

/// Projection onto the polar cone `-K`.
pub fn project_soc_polar(y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = -*v);
    project_soc(y);
    y.iter_mut().for_each(|v| *v = -*v);
}

pub fn soc_margin(y: &[f64]) -> f64 {
    y[0] - y[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `K = [lo, hi] x SOC(d_1) x ... x SOC(d_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub soc_dims: Vec<usize>,
}

impl ConeSet {
    pub fn n_box(&self) -> usize {
        self.lo.len()
    }

    pub fn dim(&self) -> usize {
        self.lo.len() + self.soc_dims.iter().sum::<usize>()
    }

    pub fn project(&self, y: &mut [f64]) {
        debug_assert_eq!(y.len(), self.dim());
        let nb = self.n_box();
        for i in 0..nb {
            y[i] = y[i].clamp(self.lo[i], self.hi[i]);
        }
        let mut off = nb;
        for &d in &self.soc_dims {
            project_soc(&mut y[off..off + d]);
            off += d;
        }
    }

    /// Largest violation of membership, zero when inside.
    pub fn violation(&self, y: &[f64]) -> f64 {
        let nb = self.n_box();
        let mut v: f64 = 0.0;
        for i in 0..nb {
            v = v.max(self.lo[i] - y[i]).max(y[i] - self.hi[i]);
        }
        let mut off = nb;
        for &d in &self.soc_dims {
            v = v.max(-soc_margin(&y[off..off + d]));
            off += d;
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_cases() {
        let mut a = [2.0, 1.0, 1.0];
        project_soc(&mut a);
        assert_eq!(a, [2.0, 1.0, 1.0]);

        let mut b = [-3.0, 1.0, 0.0];
        project_soc(&mut b);
        assert_eq!(b, [0.0, 0.0, 0.0]);

        let mut c = [0.0, 2.0, 0.0];
        project_soc(&mut c);
        assert!((c[0] - 1.0).abs() < 1e-15 && (c[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn box_and_cone_product() {
        let k = ConeSet {
            lo: vec![-1.0, 0.0],
            hi: vec![1.0, 0.0],
            soc_dims: vec![3],
        };
        let mut y = [5.0, 0.3, 0.0, 3.0, 4.0];
        assert!(k.violation(&y) > 0.0);
        k.project(&mut y);
        assert_eq!(&y[..2], &[1.0, 0.0]);
        assert!(k.violation(&y) < 1e-15);
    }

    proptest! {
        #[test]
        fn moreau_decomposition(t in -5.0..5.0f64, a in -5.0..5.0f64, b in -5.0..5.0f64) {
            let y = [t, a, b];
            let mut p = y;
            project_soc(&mut p);
            let mut q = y;
            project_soc_polar(&mut q);
            for i in 0..3 {
                prop_assert!((p[i] + q[i] - y[i]).abs() < 1e-12);
            }
            let dot: f64 = p.iter().zip(&q).map(|(x, z)| x * z).sum();
            prop_assert!(dot.abs() < 1e-9);
            prop_assert!(soc_margin(&p) > -1e-12);
        }

        #[test]
        fn projection_is_idempotent(t in -5.0..5.0f64, a in -5.0..5.0f64, b in -5.0..5.0f64) {
            let mut p = [t, a, b];
            project_soc(&mut p);
            let mut pp = p;
            project_soc(&mut pp);
            for i in 0..3 {
                prop_assert!((p[i] - pp[i]).abs() < 1e-12);
            }
        }
    }
}
