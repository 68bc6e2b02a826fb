//! Tensor trains shared by pure states (physical dimension 2) and vectorized
//! operators (physical dimension 4).
//!
//! Site tensors are `(left bond, physical, right bond)` in standard layout.
//! The represented vector is `exp(log_norm)` times the contraction.

mod compress;
mod gates;
mod io;

pub use compress::{compress_two_site, CompressionEvent, CompressionOpts};
pub use gates::{CompiledLayer, SpanGate};
pub use io::{load_checkpoint, save_checkpoint};

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain {
    tensors: Vec<Array3<C64>>,
    phys_dim: usize,
    center: Option<usize>,
    pub log_norm: f64,
}

pub(crate) fn as_mat(a: &Array3<C64>, rows: usize, cols: usize) -> ArrayView2<'_, C64> {
    a.view().into_shape_with_order((rows, cols)).expect("standard layout tensor")
}

pub(crate) fn std3(a: Array3<C64>) -> Array3<C64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Left transfer step: `E'[b, b'] = sum conj(a[x,s,b]) E[x,x'] t[x',s,b']`.
pub(crate) fn transfer_left(e: &Array2<C64>, a: &Array3<C64>, t: &Array3<C64>) -> Array2<C64> {
    let (al, d, ar) = a.dim();
    let (tl, _, tr) = t.dim();
    let x = e.dot(&as_mat(t, tl, d * tr)); // (al, d*tr)
    let x = x.into_shape_with_order((al * d, tr)).unwrap();
    linalg::dagger(as_mat(a, al * d, ar)).dot(&x)
}

/// Right transfer step: `E'[x, x'] = sum conj(a[x,s,b]) t[x',s,b'] E[b,b']`.
pub(crate) fn transfer_right(e: &Array2<C64>, a: &Array3<C64>, t: &Array3<C64>) -> Array2<C64> {
    let (al, d, ar) = a.dim();
    let (tl, _, tr) = t.dim();
    // t . E^T -> (tl*d, ar)
    let y = as_mat(t, tl * d, tr).dot(&e.t()); // (tl*d, ar)
    let y = y.into_shape_with_order((tl, d * ar)).unwrap();
    let ac = as_mat(a, al, d * ar).mapv(|z| z.conj());
    ac.dot(&y.t())
}

impl TensorTrain {
    pub fn from_tensors(tensors: Vec<Array3<C64>>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::InvalidArgument("empty tensor train".into()));
        }
        let d = tensors[0].dim().1;
        let mut prev = 1;
        for (i, t) in tensors.iter().enumerate() {
            let (l, p, _) = t.dim();
            if p != d {
                return Err(Error::DimensionMismatch(format!("site {i} has physical dim {p}, expected {d}")));
            }
            if l != prev {
                return Err(Error::DimensionMismatch(format!("bond mismatch entering site {i}")));
            }
            prev = t.dim().2;
        }
        if prev != 1 {
            return Err(Error::DimensionMismatch("right boundary bond is not 1".into()));
        }
        let tensors = tensors.into_iter().map(std3).collect();
        Ok(TensorTrain { tensors, phys_dim: d, center: None, log_norm: 0.0 })
    }

    /// Product vector from per-site local vectors.
    pub fn product(locals: &[Array1<C64>]) -> Result<Self> {
        let ts = locals.iter().map(|v| v.clone().into_shape_with_order((1, v.len(), 1)).unwrap()).collect();
        let mut tt = Self::from_tensors(ts)?;
        tt.center = None;
        Ok(tt)
    }

    /// `|0...0>` state or, for `d = 4`, the vectorized identity.
    pub fn basis_product(n: usize, d: usize, index: usize) -> Self {
        let mut v = Array1::zeros(d);
        v[index] = C64::new(1.0, 0.0);
        Self::product(&vec![v; n]).unwrap()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn tensors(&self) -> &[Array3<C64>] {
        &self.tensors
    }

    pub fn tensor(&self, i: usize) -> &Array3<C64> {
        &self.tensors[i]
    }

    /// Replaces a site tensor; invalidates the canonical center.
    pub fn set_tensor(&mut self, i: usize, t: Array3<C64>) -> Result<()> {
        let old = self.tensors[i].dim();
        let new = t.dim();
        if old.0 != new.0 || old.2 != new.2 || new.1 != self.phys_dim {
            return Err(Error::DimensionMismatch(format!("site {i}: {old:?} vs {new:?}")));
        }
        self.tensors[i] = std3(t);
        self.center = None;
        Ok(())
    }

    /// Internal bond dimensions (length `len() - 1`).
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.len() - 1].iter().map(|t| t.dim().2).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    fn left_orthonormalize_site(&mut self, i: usize) -> Result<()> {
        let (l, d, r) = self.tensors[i].dim();
        let (q, rr) = linalg::qr(as_mat(&self.tensors[i], l * d, r))?;
        let k = q.ncols();
        self.tensors[i] = q.into_shape_with_order((l, d, k))?;
        let (_, d2, r2) = self.tensors[i + 1].dim();
        let next = rr.dot(&as_mat(&self.tensors[i + 1], r, d2 * r2));
        self.tensors[i + 1] = next.into_shape_with_order((k, d2, r2))?;
        Ok(())
    }

    fn right_orthonormalize_site(&mut self, i: usize) -> Result<()> {
        let (l, d, r) = self.tensors[i].dim();
        let (lm, q) = linalg::lq(as_mat(&self.tensors[i], l, d * r))?;
        let k = q.nrows();
        self.tensors[i] = q.into_shape_with_order((k, d, r))?;
        let (l0, d0, _) = self.tensors[i - 1].dim();
        let prev = as_mat(&self.tensors[i - 1], l0 * d0, l).dot(&lm);
        self.tensors[i - 1] = prev.into_shape_with_order((l0, d0, k))?;
        Ok(())
    }

    /// Brings the train into mixed-canonical form around `center`.
    pub fn canonicalize(&mut self, center: usize) -> Result<()> {
        let n = self.len();
        if center >= n {
            return Err(Error::InvalidArgument(format!("center {center} out of range")));
        }
        match self.center {
            Some(c) => {
                for i in c..center {
                    self.left_orthonormalize_site(i)?;
                }
                for i in (center + 1..=c).rev() {
                    self.right_orthonormalize_site(i)?;
                }
            }
            None => {
                for i in 0..center {
                    self.left_orthonormalize_site(i)?;
                }
                for i in (center + 1..n).rev() {
                    self.right_orthonormalize_site(i)?;
                }
            }
        }
        self.center = Some(center);
        Ok(())
    }

    /// Marks the canonical center without touching tensors. Callers must
    /// guarantee the isometry conditions.
    pub(crate) fn assume_center(&mut self, c: Option<usize>) {
        self.center = c;
    }

    /// Moves the center tensor's norm into `log_norm`; returns the factor.
    pub fn normalize(&mut self) -> Result<f64> {
        let c = self.center.unwrap_or(0);
        self.canonicalize(c)?;
        let nrm = self.tensors[c].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            self.tensors[c].mapv_inplace(|z| z / nrm);
            self.log_norm += nrm.ln();
        }
        Ok(nrm)
    }

    /// Rescales so the represented vector has unit norm; returns the old norm.
    pub fn renormalize(&mut self) -> Result<f64> {
        self.normalize()?;
        let nrm = self.log_norm.exp();
        self.log_norm = 0.0;
        Ok(nrm)
    }

    pub fn scale(&mut self, factor: C64) {
        let i = self.center.unwrap_or(0);
        self.tensors[i].mapv_inplace(|z| z * factor);
    }

    pub fn norm(&self) -> f64 {
        if let Some(c) = self.center {
            let n = self.tensors[c].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            return n * self.log_norm.exp();
        }
        overlap(self, self).map(|z| z.re.max(0.0).sqrt()).unwrap_or(f64::NAN)
    }

    /// Applies `m` (d x d) to the physical leg at position `pos`.
    pub fn apply_single(&mut self, pos: usize, m: ArrayView2<C64>, unitary: bool) -> Result<()> {
        let d = self.phys_dim;
        if m.dim() != (d, d) {
            return Err(Error::DimensionMismatch(format!("single-site op {:?} on dim {d}", m.dim())));
        }
        let (l, _, r) = self.tensors[pos].dim();
        let mut out = Array3::zeros((l, d, r));
        for a in 0..l {
            let blk = self.tensors[pos].slice(s![a, .., ..]);
            out.slice_mut(s![a, .., ..]).assign(&m.dot(&blk));
        }
        self.tensors[pos] = out;
        if !unitary {
            self.center = self.center.filter(|&c| c == pos);
        }
        Ok(())
    }

    /// Exact application of a two-site gate spanning chain positions
    /// `gate.left..=gate.right`. Bonds inside the span grow by the gate rank.
    pub fn apply_span_gate(&mut self, gate: &SpanGate) -> Result<()> {
        let d = self.phys_dim;
        if gate.dim() != d {
            return Err(Error::DimensionMismatch(format!("gate dim {} on train dim {d}", gate.dim())));
        }
        if gate.right >= self.len() {
            return Err(Error::InvalidArgument(format!("gate right end {} out of range", gate.right)));
        }
        let k = gate.rank();
        let (l, r) = (gate.left, gate.right);
        // left end: (a, s', b*K + k)
        {
            let (al, _, ar) = self.tensors[l].dim();
            let a = self.tensors[l].view().permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
            let a = a.into_shape_with_order((d, al * ar))?;
            let w = gate.wl.view().into_shape_with_order((k * d, d))?;
            let x = w.dot(&a).into_shape_with_order((k, d, al, ar))?;
            let x = x.permuted_axes([2, 1, 3, 0]).as_standard_layout().into_owned();
            self.tensors[l] = x.into_shape_with_order((al, d, ar * k))?;
        }
        for m in l + 1..r {
            let (al, _, ar) = self.tensors[m].dim();
            let mut out = Array3::zeros((al * k, d, ar * k));
            for kk in 0..k {
                out.slice_mut(s![kk..;k, .., kk..;k]).assign(&self.tensors[m]);
            }
            self.tensors[m] = out;
        }
        {
            let (al, _, ar) = self.tensors[r].dim();
            let a = self.tensors[r].view().permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
            let a = a.into_shape_with_order((d, al * ar))?;
            let w = gate.wr.view().into_shape_with_order((k * d, d))?;
            let x = w.dot(&a).into_shape_with_order((k, d, al, ar))?;
            let x = x.permuted_axes([2, 0, 1, 3]).as_standard_layout().into_owned();
            self.tensors[r] = x.into_shape_with_order((al * k, d, ar))?;
        }
        self.center = self.center.filter(|&c| c >= l && c <= r);
        Ok(())
    }

    /// Exact application of a full-chain operator train.
    pub fn apply_layer(&mut self, layer: &CompiledLayer) -> Result<()> {
        if layer.len() != self.len() || layer.phys_dim() != self.phys_dim {
            return Err(Error::DimensionMismatch(format!(
                "layer ({} sites, dim {}) vs train ({} sites, dim {})",
                layer.len(),
                layer.phys_dim(),
                self.len(),
                self.phys_dim
            )));
        }
        let d = self.phys_dim;
        for (i, w) in layer.tensors().iter().enumerate() {
            let (al, _, ar) = self.tensors[i].dim();
            let (wl, _, _, wr) = w.dim();
            // out[(a,wl), s', (b,wr)] = sum_s w[wl,s',s,wr] a[a,s,b]
            let wm = w.view().permuted_axes([0, 1, 3, 2]).as_standard_layout().into_owned();
            let wm = wm.into_shape_with_order((wl * d * wr, d))?;
            let am = self.tensors[i].view().permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
            let am = am.into_shape_with_order((d, al * ar))?;
            let x = wm.dot(&am).into_shape_with_order((wl, d, wr, al, ar))?;
            let x = x.permuted_axes([3, 0, 1, 4, 2]).as_standard_layout().into_owned();
            self.tensors[i] = x.into_shape_with_order((al * wl, d, ar * wr))?;
        }
        self.center = None;
        Ok(())
    }

    /// Dense vector, site 0 most significant. Intended for small checks.
    pub fn to_dense(&self) -> Array1<C64> {
        let d = self.phys_dim;
        let mut acc = Array2::from_elem((1, 1), C64::new(self.log_norm.exp(), 0.0));
        for t in &self.tensors {
            let (l, _, r) = t.dim();
            let rows = acc.nrows();
            let x = acc.dot(&as_mat(t, l, d * r));
            acc = x.into_shape_with_order((rows * d, r)).unwrap();
        }
        acc.index_axis_move(Axis(1), 0)
    }

    /// Schmidt values across the bond right of position `cut`, descending,
    /// for the unnormalized contraction (log_norm excluded).
    pub fn singular_values(&mut self, cut: usize) -> Result<Array1<f64>> {
        if cut + 1 >= self.len() {
            return Err(Error::InvalidArgument(format!("cut {cut} out of range")));
        }
        self.canonicalize(cut)?;
        let (l, d, r) = self.tensors[cut].dim();
        let (_, s, _) = linalg::svd(as_mat(&self.tensors[cut], l * d, r))?;
        Ok(s)
    }

    /// Schmidt spectra at every internal bond, via one left-to-right sweep.
    pub fn all_spectra(&self) -> Result<Vec<Array1<f64>>> {
        let mut tt = self.clone();
        tt.canonicalize(0)?;
        let mut out = Vec::with_capacity(tt.len() - 1);
        for i in 0..tt.len() - 1 {
            let (l, d, r) = tt.tensors[i].dim();
            let (u, s, vt) = linalg::svd(as_mat(&tt.tensors[i], l * d, r))?;
            let k = s.len();
            tt.tensors[i] = u.into_shape_with_order((l, d, k))?;
            let sv = &vt * &s.mapv(C64::from).insert_axis(Axis(1));
            let (_, d2, r2) = tt.tensors[i + 1].dim();
            let next = sv.dot(&as_mat(&tt.tensors[i + 1], r, d2 * r2));
            tt.tensors[i + 1] = next.into_shape_with_order((k, d2, r2))?;
            out.push(s);
        }
        Ok(out)
    }
}

/// Von Neumann entropy (natural log) of a Schmidt spectrum.
pub fn spectrum_entropy(s: &Array1<f64>) -> f64 {
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return 0.0;
    }
    s.iter().map(|x| x * x / total).filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum()
}

pub fn entanglement_entropy(tt: &mut TensorTrain, cut: usize) -> Result<f64> {
    Ok(spectrum_entropy(&tt.singular_values(cut)?))
}

/// Largest entanglement entropy over all cuts of the chain.
pub fn max_oee(tt: &TensorTrain) -> Result<f64> {
    if tt.len() < 2 {
        return Ok(0.0);
    }
    Ok(tt.all_spectra()?.iter().map(spectrum_entropy).fold(0.0, f64::max))
}

/// `<a|b>` including both `log_norm` factors.
pub fn overlap(a: &TensorTrain, b: &TensorTrain) -> Result<C64> {
    if a.len() != b.len() || a.phys_dim != b.phys_dim {
        return Err(Error::DimensionMismatch(format!(
            "overlap of ({}, d={}) with ({}, d={})",
            a.len(),
            a.phys_dim,
            b.len(),
            b.phys_dim
        )));
    }
    let mut e = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
    for (x, y) in a.tensors.iter().zip(&b.tensors) {
        e = transfer_left(&e, x, y);
    }
    Ok(e[[0, 0]] * (a.log_norm + b.log_norm).exp())
}

/// Contraction with a product of per-site vectors (no conjugation).
pub fn contract_product(tt: &TensorTrain, locals: &[Array1<C64>]) -> Result<C64> {
    if locals.len() != tt.len() {
        return Err(Error::DimensionMismatch("boundary vector count".into()));
    }
    let mut e = Array1::from_elem(1, C64::new(1.0, 0.0));
    for (t, v) in tt.tensors.iter().zip(locals) {
        if v.len() != tt.phys_dim {
            return Err(Error::DimensionMismatch("boundary vector length".into()));
        }
        let (l, d, r) = t.dim();
        let x = e.dot(&as_mat(t, l, d * r)).into_shape_with_order((d, r)).unwrap();
        e = v.dot(&x);
    }
    Ok(e[0] * tt.log_norm.exp())
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    fn dense_dot(a: &Array1<C64>, b: &Array1<C64>) -> C64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    #[test]
    fn canonicalize_preserves_vector() {
        let tt = random_tt(8, 2, 8, 1);
        let dense = tt.to_dense();
        for c in [0, 3, 7] {
            let mut t2 = tt.clone();
            t2.canonicalize(c).unwrap();
            assert!(dense_close(&dense, &t2.to_dense(), 1e-12));
            for i in 0..c {
                let (l, d, r) = t2.tensor(i).dim();
                let m = as_mat(t2.tensor(i), l * d, r);
                let g = linalg::dagger(m).dot(&m);
                assert!((g - Array2::<C64>::eye(r)).iter().all(|z| z.norm() < 1e-10));
            }
            for i in c + 1..8 {
                let (l, d, r) = t2.tensor(i).dim();
                let m = as_mat(t2.tensor(i), l, d * r);
                let g = m.dot(&linalg::dagger(m));
                assert!((g - Array2::<C64>::eye(l)).iter().all(|z| z.norm() < 1e-10));
            }
            // moving again from a known center
            t2.canonicalize((c + 4) % 8).unwrap();
            assert!(dense_close(&dense, &t2.to_dense(), 1e-12));
        }
    }

    #[test]
    fn product_state_canonical_unchanged() {
        let mut tt = TensorTrain::basis_product(5, 2, 0);
        let before = tt.to_dense();
        tt.canonicalize(0).unwrap();
        assert!(dense_close(&before, &tt.to_dense(), 1e-15));
        assert_eq!(tt.max_bond(), 1);
    }

    #[test]
    fn overlap_matches_dense() {
        for seed in 0..4 {
            let a = random_tt(7, 2, 6, seed);
            let b = random_tt(7, 2, 5, seed + 100);
            let o = overlap(&a, &b).unwrap();
            let od = dense_dot(&a.to_dense(), &b.to_dense());
            assert!((o - od).norm() < 1e-10 * od.norm().max(1.0));
        }
        let a = random_tt(5, 4, 4, 9);
        let b = random_tt(5, 4, 3, 10);
        let od = dense_dot(&a.to_dense(), &b.to_dense());
        assert!((overlap(&a, &b).unwrap() - od).norm() < 1e-10 * od.norm().max(1.0));
    }

    #[test]
    fn orthogonal_products() {
        let a = TensorTrain::basis_product(4, 2, 0);
        let b = TensorTrain::basis_product(4, 2, 1);
        assert_eq!(overlap(&a, &b).unwrap(), C64::new(0.0, 0.0));
        let mut a2 = a.clone();
        a2.normalize().unwrap();
        assert!((overlap(&a2, &a2).unwrap() - 1.0).norm() < 1e-15);
        assert!(overlap(&a, &TensorTrain::basis_product(3, 2, 0)).is_err());
    }

    #[test]
    fn normalize_keeps_vector() {
        let mut tt = random_tt(6, 2, 4, 3);
        let d = tt.to_dense();
        tt.normalize().unwrap();
        assert!(dense_close(&d, &tt.to_dense(), 1e-12));
        assert!((tt.norm() - d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).abs() < 1e-9);
    }

    #[test]
    fn entropies() {
        let mut p = TensorTrain::basis_product(4, 2, 0);
        for c in 0..3 {
            assert!(entanglement_entropy(&mut p, c).unwrap().abs() < 1e-14);
        }
        // (|00> + |11>)/sqrt2
        let h = 1.0 / 2f64.sqrt();
        let mut a = Array3::zeros((1, 2, 2));
        a[[0, 0, 0]] = C64::new(h, 0.0);
        a[[0, 1, 1]] = C64::new(h, 0.0);
        let mut b = Array3::zeros((2, 2, 1));
        b[[0, 0, 0]] = C64::new(1.0, 0.0);
        b[[1, 1, 0]] = C64::new(1.0, 0.0);
        let mut bell = TensorTrain::from_tensors(vec![a, b]).unwrap();
        assert!((entanglement_entropy(&mut bell, 0).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((max_oee(&bell).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn spectra_sorted_and_bounded() {
        let tt = random_tt(8, 4, 6, 5);
        for s in tt.all_spectra().unwrap() {
            assert!(s.iter().all(|&x| x >= 0.0));
            assert!(s.windows(2).into_iter().all(|w| w[0] >= w[1]));
        }
        assert!(max_oee(&tt).unwrap() <= (tt.max_bond() as f64).ln() + 1e-12);
    }

    #[test]
    fn contract_product_matches_dense() {
        let tt = random_tt(5, 2, 4, 11);
        let v = Array1::from(vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.7)]);
        let got = contract_product(&tt, &vec![v.clone(); 5]).unwrap();
        let dense = tt.to_dense();
        let mut want = C64::new(0.0, 0.0);
        for (idx, amp) in dense.iter().enumerate() {
            let mut w = *amp;
            for site in 0..5 {
                w *= v[(idx >> (4 - site)) & 1];
            }
            want += w;
        }
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = Array3::<C64>::zeros((1, 2, 2));
        let b = Array3::<C64>::zeros((3, 2, 1));
        assert!(TensorTrain::from_tensors(vec![a, b]).is_err());
    }
}
