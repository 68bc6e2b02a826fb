//! Thin wrappers over LAPACK factorizations used by the tensor-train code.

use ndarray::{s, Array1, Array2, ArrayView2};
use ndarray_linalg::{Eigh, JobSvd, QR, SVD, SVDDC, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Singular values below this fraction of the total norm are always dropped.
pub const SV_FLOOR: f64 = 1e-14;
/// Relative gap under which two singular values count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Truncation {
    pub kept: usize,
    /// Discarded squared weight relative to the total squared weight.
    pub discarded_weight: f64,
    /// The cut fell inside a degenerate multiplet.
    pub split_degenerate: bool,
    /// Values dropped because of the bond cap (not the floor).
    pub capped: bool,
}

/// Copies into row-major layout if needed (LAPACK hands back column-major).
pub fn std2(a: Array2<C64>) -> Array2<C64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Thin SVD `m = u diag(s) vt` with `s` sorted descending.
pub fn svd(m: ArrayView2<C64>) -> Result<(Array2<C64>, Array1<f64>, Array2<C64>)> {
    let (u, s, vt) = match m.svddc(JobSvd::Some) {
        Ok(r) => r,
        Err(_) => {
            log::debug!("gesdd failed on {:?}; retrying with gesvd", m.dim());
            let (u, s, vt) = m.svd(true, true)?;
            let k = s.len();
            let u = u.unwrap().slice_move(s![.., ..k]);
            let vt = vt.unwrap().slice_move(s![..k, ..]);
            (Some(u), s, Some(vt))
        }
    };
    Ok((std2(u.unwrap()), s, std2(vt.unwrap())))
}

/// Number of singular values to keep and the truncation report.
pub fn keep_count(s: &[f64], chi_max: usize, floor: f64) -> Truncation {
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return Truncation { kept: 1.min(s.len()), ..Default::default() };
    }
    let scale = total.sqrt();
    let above = s.iter().take_while(|&&x| x > floor * scale).count().max(1);
    let kept = above.min(chi_max.max(1));
    let discarded: f64 = s[kept..].iter().map(|x| x * x).sum();
    let split_degenerate =
        kept < above && (s[kept - 1] - s[kept]).abs() <= DEGENERACY_TOL * s[kept - 1].max(f64::MIN_POSITIVE);
    Truncation { kept, discarded_weight: discarded / total, split_degenerate, capped: kept < above }
}

/// `(u, s, vt, truncation)` from [`truncated_svd`].
pub type TruncatedSvd = (Array2<C64>, Array1<f64>, Array2<C64>, Truncation);

/// SVD truncated to at most `chi_max` values above the relative floor.
pub fn truncated_svd(m: ArrayView2<C64>, chi_max: usize, floor: f64) -> Result<TruncatedSvd> {
    let (u, s, vt) = svd(m)?;
    let t = keep_count(s.as_slice().unwrap(), chi_max, floor);
    let k = t.kept;
    Ok((std2(u.slice_move(s![.., ..k])), s.slice_move(s![..k]), std2(vt.slice_move(s![..k, ..])), t))
}

/// Reduced QR: `m = q r`, `q` has orthonormal columns.
pub fn qr(m: ArrayView2<C64>) -> Result<(Array2<C64>, Array2<C64>)> {
    let (q, r) = m.qr()?;
    Ok((std2(q), std2(r)))
}

/// Reduced LQ: `m = l q`, `q` has orthonormal rows.
pub fn lq(m: ArrayView2<C64>) -> Result<(Array2<C64>, Array2<C64>)> {
    let mh = m.t().mapv(|z| z.conj());
    let (q, r) = mh.qr()?;
    Ok((std2(r.t().mapv(|z| z.conj())), std2(q.t().mapv(|z| z.conj()))))
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix. The input
/// goes to LAPACK in column-major order: row-major complex input comes back
/// with conjugated eigenvectors.
pub fn eigh(m: ArrayView2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let f = m.t().as_standard_layout().into_owned().reversed_axes();
    let (w, v) = f.eigh(UPLO::Upper)?;
    Ok((w, std2(v)))
}

pub fn dagger(m: ArrayView2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Checks the BLAS/LAPACK backend on a real product and a complex SVD at
/// sizes where broken kernels show up. Some OpenBLAS builds select AVX-512
/// kernels with wrong real GEMM results; `OPENBLAS_CORETYPE=Haswell` avoids
/// them.
pub fn backend_self_test() -> Result<()> {
    let n = 300;
    let mut x = 0x2545f4914f6cdd1du64;
    let mut next = move || {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let a = Array2::from_shape_fn((n, n), |_| next());
    let b = Array2::from_shape_fn((n, n), |_| next());
    let c = a.dot(&b);
    for (i, j) in [(0, 0), (17, 250), (299, 1), (150, 150)] {
        let want: f64 = (0..n).map(|k| a[[i, k]] * b[[k, j]]).sum();
        if (want - c[[i, j]]).abs() > 1e-9 {
            return Err(Error::Linalg(format!(
                "BLAS self-test failed: dgemm off by {:e}; set OPENBLAS_CORETYPE=Haswell",
                (want - c[[i, j]]).abs()
            )));
        }
    }
    let m = Array2::from_shape_fn((n, n / 2), |_| C64::new(next(), next()));
    let (u, s, vt) = svd(m.view())?;
    let r = (&u * &s.mapv(C64::from)).dot(&vt) - &m;
    let err = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if err > 1e-10 {
        return Err(Error::Linalg(format!(
            "LAPACK self-test failed: SVD residual {err:e}; set OPENBLAS_CORETYPE=Haswell"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn sample(m: usize, n: usize) -> Array2<C64> {
        Array2::from_shape_fn((m, n), |(i, j)| {
            C64::new(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i + 2 * j) % 5) as f64 - 2.0)
        })
    }

    #[test]
    fn backend_is_sound() {
        backend_self_test().unwrap();
    }

    #[test]
    fn qr_lq_reconstruct() {
        for &(m, n) in &[(6, 3), (3, 6), (4, 4)] {
            let a = sample(m, n);
            let (q, r) = qr(a.view()).unwrap();
            assert!((q.dot(&r) - &a).iter().all(|z| z.norm() < 1e-10));
            let qhq = dagger(q.view()).dot(&q);
            assert!((qhq - Array2::<C64>::eye(q.ncols())).iter().all(|z| z.norm() < 1e-12));
            let (l, q) = lq(a.view()).unwrap();
            assert!((l.dot(&q) - &a).iter().all(|z| z.norm() < 1e-10));
        }
    }

    #[test]
    fn svd_sorted_and_truncates() {
        let a = sample(8, 5);
        let (u, s, vt) = svd(a.view()).unwrap();
        assert!(s.windows(2).into_iter().all(|w| w[0] >= w[1] && w[1] >= 0.0));
        let us = &u * &s.mapv(C64::from);
        assert!((us.dot(&vt) - &a).iter().all(|z| z.norm() < 1e-10));
        let (_, s2, _, t) = truncated_svd(a.view(), 2, SV_FLOOR).unwrap();
        assert_eq!(s2.len(), 2);
        assert!(t.capped);
        let w: f64 = s.iter().skip(2).map(|x| x * x).sum::<f64>() / s.iter().map(|x| x * x).sum::<f64>();
        assert!((t.discarded_weight - w).abs() < 1e-14);
    }

    #[test]
    fn eigh_reconstructs_complex() {
        let a = sample(4, 4);
        let h = a.dot(&dagger(a.view()));
        let (w, v) = eigh(h.view()).unwrap();
        let d = Array2::from_diag(&w.mapv(C64::from));
        assert!((v.dot(&d).dot(&dagger(v.view())) - &h).iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn flags_degenerate_split() {
        let t = keep_count(&[1.0, 0.5, 0.5, 0.1], 2, SV_FLOOR);
        assert!(t.split_degenerate);
        let t = keep_count(&[1.0, 0.5, 0.5, 0.1], 3, SV_FLOOR);
        assert!(!t.split_degenerate);
        let t = keep_count(&[1.0, 1e-20], 8, SV_FLOOR);
        assert_eq!(t.kept, 1);
        assert!(!t.capped);
    }
}
