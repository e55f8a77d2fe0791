use serde::{Deserialize, Serialize};

use super::NumError;

/// Dense row-major matrix of `f64`.
///
/// Vectors are represented as `1 × n` rows; batches stack one row per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumError> {
        if data.len() != rows * cols {
            return Err(NumError::Shape(format!(
                "buffer of length {} cannot hold a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// A single-row tensor.
    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    /// A single-column tensor.
    pub fn column_vector(data: Vec<f64>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    /// Stacks equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(NumError::Shape(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Scalar value of a `1 × 1` tensor.
    pub fn scalar(&self) -> Option<f64> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor2D) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, k: f64) {
        for a in &mut self.data {
            *a *= k;
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor2D) -> Result<Tensor2D, NumError> {
        if self.cols != other.rows {
            return Err(NumError::Shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Tensor2D::zeros(self.rows, other.cols);
        matmul_into(self, other, &mut out);
        Ok(out)
    }
}

// Each output row depends only on the matching input row and is accumulated in
// a fixed k order, so results do not depend on how rows are batched together.
pub(crate) fn matmul_into(a: &Tensor2D, b: &Tensor2D, out: &mut Tensor2D) {
    let n = b.cols;
    for i in 0..a.rows {
        let a_row = &a.data[i * a.cols..(i + 1) * a.cols];
        let o_row = &mut out.data[i * n..(i + 1) * n];
        for (k, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b.data[k * n..(k + 1) * n];
            for (o, &bv) in o_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `acc += aᵀ · g` where `a` is `r × k` and `g` is `r × n`.
pub(crate) fn accumulate_at_b(a: &Tensor2D, g: &Tensor2D, acc: &mut Tensor2D) {
    let n = g.cols;
    for i in 0..a.rows {
        let a_row = &a.data[i * a.cols..(i + 1) * a.cols];
        let g_row = &g.data[i * n..(i + 1) * n];
        for (k, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let acc_row = &mut acc.data[k * n..(k + 1) * n];
            for (o, &gv) in acc_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

/// `acc += g · bᵀ` where `g` is `r × n` and `b` is `k × n`.
pub(crate) fn accumulate_a_bt(g: &Tensor2D, b: &Tensor2D, acc: &mut Tensor2D) {
    let n = g.cols;
    for i in 0..g.rows {
        let g_row = &g.data[i * n..(i + 1) * n];
        for k in 0..b.rows {
            let b_row = &b.data[k * n..(k + 1) * n];
            let mut s = 0.0;
            for (gv, bv) in g_row.iter().zip(b_row) {
                s += gv * bv;
            }
            acc.data[i * acc.cols + k] += s;
        }
    }
}

/// Numerically stable softmax of a logit slice.
pub fn softmax_logits(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_logits(&[0.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(softmax_logits(&[1000.0, 1000.0]), vec![0.5, 0.5]);
        let p = softmax_logits(&[1f64.ln(), 3f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-12);
        assert!((p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn matmul_shape_error() {
        let a = Tensor2D::zeros(2, 3);
        let b = Tensor2D::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(NumError::Shape(_))));
    }

    #[test]
    fn transposed_products_agree_with_matmul() {
        let a = Tensor2D::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let g = Tensor2D::from_vec(2, 2, vec![1.0, -1.0, 0.5, 2.0]).unwrap();
        let mut acc = Tensor2D::zeros(3, 2);
        accumulate_at_b(&a, &g, &mut acc);
        assert_eq!(acc, a.transpose().matmul(&g).unwrap());

        let b = Tensor2D::from_vec(3, 2, vec![1.0, 0.0, 2.0, 1.0, -1.0, 3.0]).unwrap();
        let mut acc = Tensor2D::zeros(2, 3);
        accumulate_a_bt(&g, &b, &mut acc);
        assert_eq!(acc, g.matmul(&b.transpose()).unwrap());
    }
}
