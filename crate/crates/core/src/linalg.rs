//! Dense complex matrices and LU determinants in log-magnitude/phase form.
//!
//! Storage is split into separate real and imaginary row-major planes so the
//! elimination inner loop is plain `f64` slice arithmetic.

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix { n, re: vec![0.0; n * n], im: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.re[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from separate planes (row-major).
    pub fn from_planes(n: usize, re: Vec<f64>, im: Vec<f64>) -> Self {
        assert_eq!(re.len(), n * n);
        assert_eq!(im.len(), n * n);
        CMatrix { n, re, im }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let k = i * self.n + j;
        Complex64::new(self.re[k], self.im[k])
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let k = i * self.n + j;
        self.re[k] = v.re;
        self.im[k] = v.im;
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    /// `I + s·self`.
    pub fn identity_plus(&self, s: f64) -> CMatrix {
        let mut m = CMatrix {
            n: self.n,
            re: self.re.iter().map(|x| s * x).collect(),
            im: self.im.iter().map(|x| s * x).collect(),
        };
        for i in 0..self.n {
            m.re[i * self.n + i] += 1.0;
        }
        m
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        let rows = crate::par::map_range(n, |i| {
            let mut re = vec![0.0; n];
            let mut im = vec![0.0; n];
            for k in 0..n {
                let (ar, ai) = (self.re[i * n + k], self.im[i * n + k]);
                if ar == 0.0 && ai == 0.0 {
                    continue;
                }
                let (br, bi) = (&other.re[k * n..(k + 1) * n], &other.im[k * n..(k + 1) * n]);
                for j in 0..n {
                    re[j] += ar * br[j] - ai * bi[j];
                    im[j] += ar * bi[j] + ai * br[j];
                }
            }
            (re, im)
        });
        for (i, (re, im)) in rows.into_iter().enumerate() {
            out.re[i * n..(i + 1) * n].copy_from_slice(&re);
            out.im[i * n..(i + 1) * n].copy_from_slice(&im);
        }
        out
    }

    /// Principal submatrix on the given index set.
    pub fn principal(&self, idx: &[usize]) -> CMatrix {
        CMatrix::from_fn(idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max)
    }
}

/// A determinant as `exp(log_abs) · phase` with `|phase| = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub log_abs: f64,
    pub phase: Complex64,
    /// An exactly zero pivot was met; the determinant is 0.
    pub singular: bool,
}

impl LogDet {
    pub fn one() -> Self {
        LogDet { log_abs: 0.0, phase: Complex64::new(1.0, 0.0), singular: false }
    }

    /// Log-polar form of a plain complex number.
    pub fn from_value(z: Complex64) -> Self {
        let m = z.norm();
        if m == 0.0 {
            return LogDet { log_abs: f64::NEG_INFINITY, phase: Complex64::new(1.0, 0.0), singular: true };
        }
        LogDet { log_abs: m.ln(), phase: z / m, singular: false }
    }

    /// The determinant value; `0` when singular, non-finite on overflow.
    pub fn value(&self) -> Complex64 {
        if self.singular {
            return Complex64::new(0.0, 0.0);
        }
        self.phase * self.log_abs.exp()
    }

    pub fn mul(&self, other: &LogDet) -> LogDet {
        let p = self.phase * other.phase;
        LogDet { log_abs: self.log_abs + other.log_abs, phase: p / p.norm(), singular: self.singular || other.singular }
    }

    pub fn arg(&self) -> f64 {
        self.phase.arg()
    }
}

/// Determinant by LU with partial pivoting; consumes the matrix.
pub fn log_det(mut m: CMatrix) -> LogDet {
    let n = m.n;
    let mut out = LogDet::one();
    let (re, im) = (&mut m.re, &mut m.im);
    for k in 0..n {
        // Pivot: largest modulus in column k at or below the diagonal.
        let mut p = k;
        let mut best = re[k * n + k].hypot(im[k * n + k]);
        for i in k + 1..n {
            let v = re[i * n + k].hypot(im[i * n + k]);
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 {
            out.singular = true;
            out.log_abs = f64::NEG_INFINITY;
            return out;
        }
        if p != k {
            for j in 0..n {
                re.swap(k * n + j, p * n + j);
                im.swap(k * n + j, p * n + j);
            }
            out.phase = -out.phase;
        }
        let piv = Complex64::new(re[k * n + k], im[k * n + k]);
        out.log_abs += best.ln();
        out.phase *= piv / best;
        let inv = 1.0 / piv;
        let (head, tail) = re.split_at_mut((k + 1) * n);
        let (head_im, tail_im) = im.split_at_mut((k + 1) * n);
        let pr = &head[k * n + k + 1..(k + 1) * n];
        let pi = &head_im[k * n + k + 1..(k + 1) * n];
        for (row_re, row_im) in tail.chunks_exact_mut(n).zip(tail_im.chunks_exact_mut(n)) {
            let l = Complex64::new(row_re[k], row_im[k]) * inv;
            if l.re == 0.0 && l.im == 0.0 {
                continue;
            }
            let (lr, li) = (l.re, l.im);
            let rr = &mut row_re[k + 1..];
            let ri = &mut row_im[k + 1..];
            for j in 0..pr.len() {
                let (a, b) = (pr[j], pi[j]);
                rr[j] -= lr * a - li * b;
                ri[j] -= lr * b + li * a;
            }
        }
        // Keep the phase on the unit circle.
        out.phase /= out.phase.norm();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            }
        }
        m
    }

    fn det_small(m: &CMatrix) -> Complex64 {
        match m.dim() {
            1 => m.get(0, 0),
            2 => m.get(0, 0) * m.get(1, 1) - m.get(0, 1) * m.get(1, 0),
            3 => {
                let g = |i, j| m.get(i, j);
                g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                    + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn matches_cofactor_expansion() {
        for n in 1..=3 {
            for seed in 0..5 {
                let m = random(n, seed);
                let d = log_det(m.clone()).value();
                let e = det_small(&m);
                assert!((d - e).norm() < 1e-13 * (1.0 + e.norm()), "n={n} seed={seed}");
            }
        }
    }

    #[test]
    fn multiplicative() {
        let a = random(12, 1);
        let b = random(12, 2);
        let da = log_det(a.clone());
        let db = log_det(b.clone());
        let dab = log_det(a.matmul(&b));
        let prod = da.mul(&db);
        assert!((dab.log_abs - prod.log_abs).abs() < 1e-11);
        assert!((dab.phase - prod.phase).norm() < 1e-11);
    }

    #[test]
    fn singular_detected() {
        let mut m = CMatrix::zeros(3);
        m.set(0, 0, Complex64::new(1.0, 0.0));
        m.set(1, 1, Complex64::new(2.0, 0.0));
        let d = log_det(m);
        assert!(d.singular);
        assert_eq!(d.value(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn large_magnitudes_do_not_overflow_log() {
        let mut m = CMatrix::identity(400);
        for i in 0..400 {
            m.set(i, i, Complex64::new(0.0, 1e3));
        }
        let d = log_det(m);
        assert!((d.log_abs - 400.0 * 1e3f64.ln()).abs() < 1e-9);
        // i^400 = 1
        assert!((d.phase - Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }
}
