//! Small fixed-dimension vector/tensor helpers for d in {2, 3}.
//!
//! Hot loops work on `[f64; D]` arrays with `D` a const generic; public
//! results cross into dimension-erased types (`Vec<f64>`, `DynMat`) at the
//! API boundary.

/// Dimension-erased d x d tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DynMat {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl DynMat {
    pub fn zeros(dim: usize) -> Self {
        DynMat { dim, data: vec![0.0; dim * dim] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// x^T M x for a unit or general vector x.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += x[i] * self.get(i, j) * x[j];
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &DynMat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Isotropic-frame assembly: trans * I + (long - trans) * rhat rhat^T.
    pub fn from_axis(dim: usize, rhat: &[f64], long: f64, trans: f64) -> Self {
        let mut m = DynMat::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                let mut v = (long - trans) * rhat[i] * rhat[j];
                if i == j {
                    v += trans;
                }
                m.set(i, j, v);
            }
        }
        m
    }
}

pub fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        s += a[i] * b[i];
    }
    s
}

pub fn norm<const D: usize>(a: &[f64; D]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale<const D: usize>(a: &[f64; D], c: f64) -> [f64; D] {
    let mut out = [0.0; D];
    for i in 0..D {
        out[i] = a[i] * c;
    }
    out
}

pub fn add_scaled<const D: usize>(a: &mut [f64; D], b: &[f64; D], c: f64) {
    for i in 0..D {
        a[i] += b[i] * c;
    }
}

pub fn sub<const D: usize>(a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    let mut out = [0.0; D];
    for i in 0..D {
        out[i] = a[i] - b[i];
    }
    out
}

/// In-place lower Cholesky of a symmetric PSD matrix in row-major order.
/// A jitter floor proportional to the trace keeps nearly-degenerate inputs
/// factorizable; returns the jitter actually applied.
pub fn cholesky_in_place(n: usize, m: &mut [f64], jitter_rel: f64) -> f64 {
    let tr: f64 = (0..n).map(|i| m[i * n + i]).sum();
    let jitter = jitter_rel * tr.max(f64::MIN_POSITIVE);
    for i in 0..n {
        m[i * n + i] += jitter;
    }
    for j in 0..n {
        for k in 0..j {
            let l = m[j * n + k];
            for i in j..n {
                m[i * n + j] -= m[i * n + k] * l;
            }
        }
        let diag = m[j * n + j].max(0.0).sqrt();
        let inv = if diag > 0.0 { 1.0 / diag } else { 0.0 };
        m[j * n + j] = diag;
        for i in (j + 1)..n {
            m[i * n + j] *= inv;
        }
        // clear the stale upper-triangle copies so m holds exactly L
        for i in (j + 1)..n {
            m[j * n + i] = 0.0;
        }
    }
    jitter
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        // A = L0 L0^T with a known L0
        let l0 = [2.0, 0.0, 0.0, 0.5, 1.5, 0.0, -0.3, 0.7, 1.1];
        let mut a = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    a[i * 3 + j] += l0[i * 3 + k] * l0[j * 3 + k];
                }
            }
        }
        let mut l = a;
        cholesky_in_place(3, &mut l, 0.0);
        let mut back = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    back[i * 3 + j] += l[i * 3 + k] * l[j * 3 + k];
                }
            }
        }
        for i in 0..9 {
            assert!((back[i] - a[i]).abs() < 1e-12, "entry {i}");
        }
    }

    #[test]
    fn cholesky_degenerate_with_jitter() {
        // rank-1 matrix; jitter makes the factorization usable
        let mut m = [1.0, 1.0, 1.0, 1.0];
        cholesky_in_place(2, &mut m, 1e-14);
        assert!(m.iter().all(|v| v.is_finite()));
        assert!(m[0] > 0.0);
    }

    #[test]
    fn axis_assembly() {
        let rhat = [0.6, 0.8];
        let m = DynMat::from_axis(2, &rhat, 2.0, 1.0);
        // eigenvector checks: along rhat -> long, perpendicular -> trans
        let long = m.quad_form(&rhat);
        let perp = [-0.8, 0.6];
        let trans = m.quad_form(&perp);
        assert!((long - 2.0).abs() < 1e-14);
        assert!((trans - 1.0).abs() < 1e-14);
    }
}
