use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// `out = x · w` where `x` is `n × a` and `w` is `a × b` (row-major slice).
pub fn matmul(x: &Matrix, w: &[f64], b: usize) -> Matrix {
    let a = x.cols;
    debug_assert_eq!(w.len(), a * b);
    let mut out = Matrix::zeros(x.rows, b);
    for i in 0..x.rows {
        let xi = x.row(i);
        let oi = out.row_mut(i);
        for (k, &xv) in xi.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wk = &w[k * b..(k + 1) * b];
            for (o, &wv) in oi.iter_mut().zip(wk) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// Accumulates `dw += xᵀ · dy` and returns `dx = dy · wᵀ`.
pub fn matmul_backward(x: &Matrix, w: &[f64], dy: &Matrix, dw: &mut [f64]) -> Matrix {
    let (a, b) = (x.cols, dy.cols);
    let mut dx = Matrix::zeros(x.rows, a);
    for i in 0..x.rows {
        let xi = x.row(i);
        let dyi = dy.row(i);
        let dxi = dx.row_mut(i);
        for k in 0..a {
            let wk = &w[k * b..(k + 1) * b];
            let dwk = &mut dw[k * b..(k + 1) * b];
            let mut acc = 0.0;
            for j in 0..b {
                dwk[j] += xi[k] * dyi[j];
                acc += dyi[j] * wk[j];
            }
            dxi[k] = acc;
        }
    }
    dx
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place numerically stable softmax.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = libm::exp(*x - max);
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Cross-entropy of `logits` against `target` and its gradient w.r.t. the
/// logits (`softmax - onehot`).
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&l| libm::exp(l - max)).sum::<f64>());
    let loss = lse - logits[target];
    p[target] -= 1.0;
    (loss, p)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn l2_norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}
