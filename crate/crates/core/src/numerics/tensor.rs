use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`. Vectors are single-column matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Reduction used by [`Tensor::row_pool`] and [`Tensor::col_pool`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Mean,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape { op: "from_vec", left: (rows, cols), right: (data.len(), 1) });
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Builds a matrix from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Tensor { rows: rows.len(), cols, data: rows.concat() }
    }

    /// A column vector.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { rows: data.len(), cols: 1, data }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![x] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    pub fn into_vec(self) -> Vec<f64> {
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

    pub fn scalar_value(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape { op, left: self.shape(), right: other.shape() });
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::Shape { op: "matmul", left: self.shape(), right: other.shape() });
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for p in 0..self.cols {
                let a = self.data[i * self.cols + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(other, op)?;
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// `scale * self + shift`, elementwise.
    pub fn affine(&self, scale: f64, shift: f64) -> Tensor {
        self.map(|x| scale * x + shift)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn column(&self, j: usize) -> Tensor {
        Tensor::vector((0..self.rows).map(|r| self.get(r, j)).collect())
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            if p.rows != rows {
                return Err(Error::Shape { op: "concat_cols", left: (rows, offset), right: p.shape() });
            }
            for r in 0..rows {
                for c in 0..p.cols {
                    out.data[r * cols + offset + c] = p.data[r * p.cols + c];
                }
            }
            offset += p.cols;
        }
        Ok(out)
    }

    /// Softmax over the valid entries of a vector; masked entries get weight 0.
    pub fn masked_softmax(&self, mask: &[bool]) -> Result<Tensor> {
        if self.cols != 1 || mask.len() != self.rows {
            return Err(Error::Shape { op: "masked_softmax", left: self.shape(), right: (mask.len(), 1) });
        }
        let max = self
            .data
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&x, _)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::FullyMasked("masked_softmax"));
        }
        let mut out: Vec<f64> = self
            .data
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { (x - max).exp() } else { 0.0 })
            .collect();
        let total: f64 = out.iter().sum();
        for x in &mut out {
            *x /= total;
        }
        Ok(Tensor::vector(out))
    }

    /// Reduces each row over the valid columns. Rows that are masked out
    /// yield 0 and no argmax. Returns the column vector of pooled values and,
    /// for max pooling, the first maximal column per row.
    pub fn row_pool(&self, row_mask: &[bool], col_mask: &[bool], kind: PoolKind) -> Result<(Tensor, Vec<Option<usize>>)> {
        self.check_masks(row_mask, col_mask, "row_pool")?;
        let cols: Vec<usize> = (0..self.cols).filter(|&c| col_mask[c]).collect();
        let mut values = vec![0.0; self.rows];
        let mut arg = vec![None; self.rows];
        for r in (0..self.rows).filter(|&r| row_mask[r]) {
            let (v, a) = pool(cols.iter().map(|&c| (c, self.get(r, c))), kind);
            values[r] = v;
            arg[r] = a;
        }
        Ok((Tensor::vector(values), arg))
    }

    /// Reduces each column over the valid rows; see [`Tensor::row_pool`].
    pub fn col_pool(&self, row_mask: &[bool], col_mask: &[bool], kind: PoolKind) -> Result<(Tensor, Vec<Option<usize>>)> {
        self.check_masks(row_mask, col_mask, "col_pool")?;
        let rows: Vec<usize> = (0..self.rows).filter(|&r| row_mask[r]).collect();
        let mut values = vec![0.0; self.cols];
        let mut arg = vec![None; self.cols];
        for c in (0..self.cols).filter(|&c| col_mask[c]) {
            let (v, a) = pool(rows.iter().map(|&r| (r, self.get(r, c))), kind);
            values[c] = v;
            arg[c] = a;
        }
        Ok((Tensor::vector(values), arg))
    }

    fn check_masks(&self, row_mask: &[bool], col_mask: &[bool], op: &'static str) -> Result<()> {
        if row_mask.len() != self.rows || col_mask.len() != self.cols {
            return Err(Error::Shape { op, left: self.shape(), right: (row_mask.len(), col_mask.len()) });
        }
        if !row_mask.iter().any(|&m| m) || !col_mask.iter().any(|&m| m) {
            return Err(Error::FullyMasked(op));
        }
        Ok(())
    }
}

fn pool(values: impl Iterator<Item = (usize, f64)>, kind: PoolKind) -> (f64, Option<usize>) {
    match kind {
        PoolKind::Max => {
            let mut best: Option<(usize, f64)> = None;
            for (i, v) in values {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            let (i, v) = best.expect("at least one valid position");
            (v, Some(i))
        }
        PoolKind::Mean => {
            let (mut sum, mut n) = (0.0, 0usize);
            for (_, v) in values {
                sum += v;
                n += 1;
            }
            (sum / n as f64, None)
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_softmax() {
        let s = Tensor::vector(vec![0.0; 3]).masked_softmax(&[true; 3]).unwrap();
        for &w in s.data() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn masked_softmax_zeroes_invalid() {
        let s = Tensor::vector(vec![100.0, 1.0, 1.0]).masked_softmax(&[false, true, true]).unwrap();
        assert_eq!(s.data(), &[0.0, 0.5, 0.5]);
        assert!(matches!(
            Tensor::vector(vec![1.0, 2.0]).masked_softmax(&[false, false]),
            Err(Error::FullyMasked(_))
        ));
    }

    #[test]
    fn row_max_values_and_argmax() {
        let a = Tensor::from_rows(&[&[1.0, 5.0], &[3.0, 2.0]]);
        let (v, arg) = a.row_pool(&[true, true], &[true, true], PoolKind::Max).unwrap();
        assert_eq!(v.data(), &[5.0, 3.0]);
        assert_eq!(arg, vec![Some(1), Some(0)]);
    }

    #[test]
    fn max_ties_pick_first() {
        let a = Tensor::from_rows(&[&[2.0, 2.0]]);
        let (_, arg) = a.row_pool(&[true], &[true, true], PoolKind::Max).unwrap();
        assert_eq!(arg, vec![Some(0)]);
    }

    #[test]
    fn masked_max_ignores_invalid() {
        let a = Tensor::from_rows(&[&[9.0, 1.0], &[8.0, 2.0]]);
        let (v, arg) = a.row_pool(&[true, false], &[false, true], PoolKind::Max).unwrap();
        assert_eq!(v.data(), &[1.0, 0.0]);
        assert_eq!(arg, vec![Some(1), None]);
        assert!(a.col_pool(&[false, false], &[true, true], PoolKind::Max).is_err());
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let err = Tensor::zeros(2, 3).matmul(&Tensor::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Tensor::from_rows(&[&[5.0], &[6.0]]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[17.0, 39.0]);
        assert_eq!(a.transpose().data(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
