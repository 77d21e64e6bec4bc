//! Dense complex kernels backed by faer.

use faer::complex_native::c64;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[inline]
pub(crate) fn to_c64(z: Complex64) -> c64 {
    c64::new(z.re, z.im)
}

#[inline]
pub(crate) fn from_c64(z: c64) -> Complex64 {
    Complex64::new(z.re, z.im)
}

/// Row-major slice to a faer matrix.
pub(crate) fn mat_from_row_major(rows: usize, cols: usize, data: &[Complex64]) -> Mat<c64> {
    Mat::from_fn(rows, cols, |i, j| to_c64(data[i * cols + j]))
}

/// `m m^dag`.
pub(crate) fn gram(m: MatRef<'_, c64>) -> Mat<c64> {
    m * m.adjoint()
}

/// Hermitian eigendecomposition with eigenvalues sorted descending.
///
/// Ties keep the solver order, which is ascending-stable reversed.
pub(crate) fn hermitian_eig_desc(h: MatRef<'_, c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let n = h.nrows();
    let evd = h.selfadjoint_eigendecomposition(Side::Lower);
    let s = evd.s().column_vector();
    let u = evd.u();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.read(b).re.total_cmp(&s.read(a).re));
    let values: Vec<f64> = order.iter().map(|&i| s.read(i).re).collect();
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::EigenNonConvergence);
    }
    let vectors = Mat::from_fn(n, n, |i, j| u.read(i, order[j]));
    Ok((values, vectors))
}

/// Orthonormal basis whose leading `k` columns span the leading `k` columns
/// of `m` (assumed independent), with phases matching those columns.
pub(crate) fn orthonormal_completion(m: MatRef<'_, c64>, k: usize) -> Mat<c64> {
    let rows = m.nrows();
    let qr = m.qr();
    let r = qr.compute_r();
    let q = qr.compute_q();
    let mut out = Mat::from_fn(rows, rows, |i, j| q.read(i, j));
    for j in 0..k.min(rows).min(r.ncols()) {
        let rjj = from_c64(r.read(j, j));
        let norm = rjj.norm();
        if norm > 0.0 {
            let phase = to_c64(rjj / norm);
            for i in 0..rows {
                let v = out.read(i, j);
                out.write(i, j, v * phase);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_order_and_reconstruction() {
        let data: Vec<Complex64> = [
            (2.0, 0.0),
            (0.5, 0.5),
            (0.0, -1.0),
            (0.5, -0.5),
            (1.0, 0.0),
            (0.2, 0.0),
            (0.0, 1.0),
            (0.2, 0.0),
            (3.0, 0.0),
        ]
        .iter()
        .map(|&(r, i)| Complex64::new(r, i))
        .collect();
        let h = mat_from_row_major(3, 3, &data);
        let (vals, vecs) = hermitian_eig_desc(h.as_ref()).unwrap();
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let trace: f64 = vals.iter().sum();
        assert!((trace - 6.0).abs() < 1e-12);
        for j in 0..3 {
            let col = vecs.col(j);
            let hv = &h * col;
            for i in 0..3 {
                let d = from_c64(hv.read(i)) - from_c64(col.read(i)) * vals[j];
                assert!(d.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn completion_keeps_leading_columns() {
        let m = Mat::from_fn(4, 4, |i, j| {
            if j == 0 {
                c64::new(0.0, if i == 1 { 1.0 } else { 0.0 })
            } else if i == j {
                c64::new(1.0, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        let q = orthonormal_completion(m.as_ref(), 1);
        let first = from_c64(q.read(1, 0));
        assert!((first - Complex64::new(0.0, 1.0)).norm() < 1e-14);
        let g = q.adjoint() * &q;
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((from_c64(g.read(i, j)) - e).norm() < 1e-14);
            }
        }
    }
}
