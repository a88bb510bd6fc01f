use std::fmt;

use super::ArrayError;

/// Dense row-major array of `f64`.
///
/// A rank-0 array (empty shape) holds a single scalar. Extents of zero are
/// permitted so that empty event sequences flow through the model without
/// special-casing.
#[derive(Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Array {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Array")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, ArrayError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ArrayError::Shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a `rows × cols` matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ArrayError> {
        Self::new(vec![rows, cols], data)
    }

    /// Builds a matrix from nested rows. All rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ArrayError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(ArrayError::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            shape: vec![n, n],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// True when the array holds exactly one element.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> Result<f64, ArrayError> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(ArrayError::Contract(format!(
                "expected a scalar, got shape {:?}",
                self.shape
            )))
        }
    }

    /// Rows and columns of a rank-2 array.
    pub fn dims2(&self) -> Result<(usize, usize), ArrayError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(ArrayError::Shape(format!("expected a matrix, got shape {other:?}"))),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = *self.shape.last().unwrap_or(&1);
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn get2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self, ArrayError> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub(crate) fn add_assign(&mut self, other: &Array) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn transpose(&self) -> Result<Self, ArrayError> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::matrix(c, r, out)
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &Array) -> Result<Self, ArrayError> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(ArrayError::Shape(format!(
                "matmul inner extents differ: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(&self.data, &other.data, &mut out, m, k, n);
        Self::matrix(m, n, out)
    }
}

/// `c += a · b` with `a: m×k`, `b: k×n`, `c: m×n`, all row-major.
///
/// Each output row depends only on the matching row of `a`, accumulated in a
/// fixed order, so a row's value never depends on how many other rows exist.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c += aᵀ · b` with `a: m×k`, `b: m×n`, `c: k×n`.
pub(crate) fn gemm_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c += a · bᵀ` with `a: m×n`, `b: k×n`, `c: m×k`.
pub(crate) fn gemm_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let dot: f64 = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            c[i * k + p] += dot;
        }
    }
}

/// Resulting shape when broadcasting `a` against `b` (numpy rules).
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>, ArrayError> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(ArrayError::Shape(format!(
                "shapes {a:?} and {b:?} are not broadcast-compatible"
            )));
        };
    }
    Ok(out)
}

/// Flat offsets into an operand of shape `src` for every element of the
/// broadcast output shape `out`.
pub(crate) fn broadcast_offsets(src: &[usize], out: &[usize]) -> Vec<usize> {
    let total: usize = out.iter().product();
    if src == out {
        return (0..total).collect();
    }
    let rank = out.len();
    let pad = rank - src.len();
    // strides of the source, zero along broadcast axes
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        strides[i + pad] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    let mut offsets = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..total {
        offsets.push(off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < out[ax] {
                break;
            }
            off -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    offsets
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let a = Array::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(Array::identity(2).matmul(&a).unwrap(), a);
        assert_eq!(a.matmul(&Array::identity(2)).unwrap(), a);
    }

    #[test]
    fn row_times_column() {
        let a = Array::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Array::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Array::zeros(&[2, 3]);
        let b = Array::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&b), Err(ArrayError::Shape(_))));
    }

    #[test]
    fn new_checks_length() {
        assert!(Array::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape(&[3, 4], &[4]).unwrap(), vec![3, 4]);
        assert_eq!(broadcast_shape(&[3, 1], &[1, 4]).unwrap(), vec![3, 4]);
        assert_eq!(broadcast_shape(&[], &[2, 2]).unwrap(), vec![2, 2]);
        assert!(broadcast_shape(&[3, 4], &[3]).is_err());
        assert!(broadcast_shape(&[2, 3], &[3, 2]).is_err());
    }

    #[test]
    fn broadcast_offsets_row_vector() {
        assert_eq!(broadcast_offsets(&[3], &[2, 3]), vec![0, 1, 2, 0, 1, 2]);
        assert_eq!(broadcast_offsets(&[2, 1], &[2, 3]), vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn transpose_roundtrip() {
        let a = Array::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let t = a.transpose().unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.transpose().unwrap(), a);
    }
}
