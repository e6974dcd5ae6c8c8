//! Maps between unconstrained vectors and valid model parameters.
//!
//! Positive scalars go through softplus; PSD matrices through a
//! lower-triangular factor with softplus diagonal.

use nalgebra::{DMatrix, DVector};

use crate::model::{Model1Params, Model2Params, ModelKind, ModelParams};

/// Smallest value fed to the softplus inverse.
const POSITIVE_FLOOR: f64 = 1e-300;

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_inv(y: f64) -> f64 {
    let y = y.max(POSITIVE_FLOOR);
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Number of free coordinates for a model of `n` assets.
pub fn dimension(kind: ModelKind, n: usize) -> usize {
    let tri = n * (n + 1) / 2;
    match kind {
        ModelKind::Model1 => 5 * n + 2 + tri,
        ModelKind::Model2 => 2 * n + 1 + 2 * tri,
    }
}

/// Cholesky-style factor that tolerates semidefinite input: columns whose
/// pivot vanishes are left at zero.
pub fn psd_cholesky(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut l = DMatrix::zeros(n, n);
    let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 1e-14 * scale {
            continue;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    l
}

struct Writer<'a> {
    out: &'a mut Vec<f64>,
}

impl Writer<'_> {
    fn raw(&mut self, v: &DVector<f64>) {
        self.out.extend(v.iter());
    }
    fn positive(&mut self, v: f64) {
        self.out.push(softplus_inv(v));
    }
    fn positives(&mut self, v: &DVector<f64>) {
        for &x in v.iter() {
            self.positive(x);
        }
    }
    fn psd(&mut self, m: &DMatrix<f64>) {
        let l = psd_cholesky(m);
        for i in 0..l.nrows() {
            for j in 0..=i {
                if i == j {
                    self.positive(l[(i, i)]);
                } else {
                    self.out.push(l[(i, j)]);
                }
            }
        }
    }
}

struct Reader<'a> {
    x: &'a [f64],
    at: usize,
}

impl Reader<'_> {
    fn raw(&mut self, n: usize) -> DVector<f64> {
        let v = DVector::from_column_slice(&self.x[self.at..self.at + n]);
        self.at += n;
        v
    }
    fn positive(&mut self) -> f64 {
        let v = softplus(self.x[self.at]);
        self.at += 1;
        v
    }
    fn positives(&mut self, n: usize) -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|_| self.positive()))
    }
    fn psd(&mut self, n: usize) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                l[(i, j)] = if i == j {
                    self.positive()
                } else {
                    let v = self.x[self.at];
                    self.at += 1;
                    v
                };
            }
        }
        &l * l.transpose()
    }
}

pub fn encode(params: &ModelParams) -> DVector<f64> {
    let mut out = Vec::new();
    let mut w = Writer { out: &mut out };
    match params {
        ModelParams::Model1(p) => {
            w.raw(&p.mu_tilde);
            w.positive(p.sigma);
            w.positives(&p.lambda);
            w.raw(&p.theta);
            w.positives(&p.sigma_jump);
            w.positive(p.gamma);
            w.raw(&p.mu);
            w.psd(&p.a);
        }
        ModelParams::Model2(p) => {
            w.raw(&p.mu_tilde);
            w.psd(&p.q);
            w.positive(p.lambda);
            w.raw(&p.mu);
            w.psd(&p.a);
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`encode`]. Output always satisfies the model invariants, so
/// it is assembled without re-validation.
pub fn decode(kind: ModelKind, n: usize, x: &DVector<f64>) -> ModelParams {
    debug_assert_eq!(x.len(), dimension(kind, n));
    let mut r = Reader { x: x.as_slice(), at: 0 };
    match kind {
        ModelKind::Model1 => {
            let mu_tilde = r.raw(n);
            let sigma = r.positive();
            let lambda = r.positives(n);
            let theta = r.raw(n);
            let sigma_jump = r.positives(n);
            let gamma = r.positive();
            let mu = r.raw(n);
            let a = r.psd(n);
            ModelParams::Model1(Model1Params { n, mu_tilde, sigma, lambda, theta, sigma_jump, gamma, mu, a })
        }
        ModelKind::Model2 => {
            let mu_tilde = r.raw(n);
            let q = r.psd(n);
            let lambda = r.positive();
            let mu = r.raw(n);
            let a = r.psd(n);
            ModelParams::Model2(Model2Params { n, mu_tilde, q, lambda, mu, a })
        }
    }
}
