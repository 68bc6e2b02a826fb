use ndarray::{s, Array2, Array3, Array4, ArrayView2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg;

/// A two-site operator split into left and right halves of its
/// operator-Schmidt decomposition, acting on chain positions `left < right`
/// with identity pass-through in between.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanGate {
    pub left: usize,
    pub right: usize,
    /// `(rank, out, in)`
    pub wl: Array3<C64>,
    pub wr: Array3<C64>,
}

impl SpanGate {
    /// `g` acts on `(s_a, s_b)` with `s_a` the major index; `pos_a` and
    /// `pos_b` are chain positions in either order.
    pub fn from_two_site(pos_a: usize, pos_b: usize, g: ArrayView2<C64>) -> Result<Self> {
        let dd = g.nrows();
        let d = (dd as f64).sqrt().round() as usize;
        if d * d != dd || g.ncols() != dd {
            return Err(Error::DimensionMismatch(format!("two-site gate of shape {:?}", g.dim())));
        }
        if pos_a == pos_b {
            return Err(Error::InvalidArgument("two-site gate on a single position".into()));
        }
        let (left, right, swap) = if pos_a < pos_b { (pos_a, pos_b, false) } else { (pos_b, pos_a, true) };
        // m[(ol, il), (or, ir)] = g[(ol, or), (il, ir)] with the left site major
        let mut m = Array2::<C64>::zeros((dd, dd));
        for ol in 0..d {
            for or in 0..d {
                for il in 0..d {
                    for ir in 0..d {
                        let v = if swap { g[[or * d + ol, ir * d + il]] } else { g[[ol * d + or, il * d + ir]] };
                        m[[ol * d + il, or * d + ir]] = v;
                    }
                }
            }
        }
        let (u, sv, vt, _) = linalg::truncated_svd(m.view(), usize::MAX, linalg::SV_FLOOR)?;
        let k = sv.len();
        let mut wl = Array3::zeros((k, d, d));
        let mut wr = Array3::zeros((k, d, d));
        for kk in 0..k {
            for o in 0..d {
                for i in 0..d {
                    wl[[kk, o, i]] = u[[o * d + i, kk]] * sv[kk];
                    wr[[kk, o, i]] = vt[[kk, o * d + i]];
                }
            }
        }
        Ok(SpanGate { left, right, wl, wr })
    }

    pub fn rank(&self) -> usize {
        self.wl.dim().0
    }

    pub fn dim(&self) -> usize {
        self.wl.dim().1
    }
}

/// Full-chain operator train with site tensors `(left, out, in, right)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledLayer {
    tensors: Vec<Array4<C64>>,
    phys_dim: usize,
}

fn eye4(d: usize, k: usize) -> Array4<C64> {
    let mut t = Array4::zeros((k, d, d, k));
    for kk in 0..k {
        for s in 0..d {
            t[[kk, s, s, kk]] = C64::new(1.0, 0.0);
        }
    }
    t
}

impl CompiledLayer {
    pub fn identity(n: usize, d: usize) -> Self {
        CompiledLayer { tensors: vec![eye4(d, 1); n], phys_dim: d }
    }

    pub fn from_single_site(ops: &[Array2<C64>]) -> Result<Self> {
        let d = ops.first().map(|m| m.nrows()).unwrap_or(2);
        let mut tensors = Vec::with_capacity(ops.len());
        for m in ops {
            if m.dim() != (d, d) {
                return Err(Error::DimensionMismatch("single-site operator shapes differ".into()));
            }
            tensors.push(m.clone().into_shape_with_order((1, d, d, 1))?);
        }
        Ok(CompiledLayer { tensors, phys_dim: d })
    }

    /// Builds a layer from span gates with pairwise disjoint spans.
    pub fn from_span_gates(n: usize, d: usize, gates: &[SpanGate]) -> Result<Self> {
        let mut sorted: Vec<&SpanGate> = gates.iter().collect();
        sorted.sort_by_key(|g| g.left);
        for w in sorted.windows(2) {
            if w[1].left <= w[0].right {
                return Err(Error::OverlappingSpans((w[0].left, w[0].right), (w[1].left, w[1].right)));
            }
        }
        let mut tensors = vec![eye4(d, 1); n];
        for g in sorted {
            if g.right >= n || g.dim() != d {
                return Err(Error::DimensionMismatch(format!("gate {}-{} does not fit", g.left, g.right)));
            }
            let k = g.rank();
            let mut tl = Array4::zeros((1, d, d, k));
            let mut tr = Array4::zeros((k, d, d, 1));
            for kk in 0..k {
                tl.slice_mut(s![0, .., .., kk]).assign(&g.wl.slice(s![kk, .., ..]));
                tr.slice_mut(s![kk, .., .., 0]).assign(&g.wr.slice(s![kk, .., ..]));
            }
            tensors[g.left] = tl;
            tensors[g.right] = tr;
            for t in &mut tensors[g.left + 1..g.right] {
                *t = eye4(d, k);
            }
        }
        Ok(CompiledLayer { tensors, phys_dim: d })
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

    pub fn tensors(&self) -> &[Array4<C64>] {
        &self.tensors
    }

    pub fn max_bond(&self) -> usize {
        self.tensors.iter().map(|t| t.dim().3).max().unwrap_or(1)
    }

    /// Dense matrix, site 0 most significant. Small chains only.
    pub fn to_dense(&self) -> Array2<C64> {
        let d = self.phys_dim;
        // acc[(out, in), bond]
        let mut acc: Array3<C64> = Array3::from_elem((1, 1, 1), C64::new(1.0, 0.0));
        for t in &self.tensors {
            let (o, i, _) = acc.dim();
            let (_, _, _, wr) = t.dim();
            let mut next = Array3::zeros((o * d, i * d, wr));
            for a in 0..o {
                for b in 0..i {
                    for so in 0..d {
                        for si in 0..d {
                            let v = acc.slice(s![a, b, ..]).dot(&t.slice(s![.., so, si, ..]));
                            next.slice_mut(s![a * d + so, b * d + si, ..]).assign(&v);
                        }
                    }
                }
            }
            acc = next;
        }
        acc.index_axis_move(ndarray::Axis(2), 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::testutil::*;
    use crate::tt::TensorTrain;

    fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
        let (m, n) = a.dim();
        let (p, q) = b.dim();
        Array2::from_shape_fn((m * p, n * q), |(i, j)| a[[i / p, j / q]] * b[[i % p, j % q]])
    }

    fn random_gate(d: usize, seed: u64) -> Array2<C64> {
        let t = random_tt(2, d * d, 1, seed);
        let v = t.to_dense();
        Array2::from_shape_fn((d * d, d * d), |(i, j)| v[i * d * d + j])
    }

    #[test]
    fn span_gate_reconstructs_both_orders() {
        let g = random_gate(2, 3);
        let id = Array2::<C64>::eye(2);
        let sg = SpanGate::from_two_site(0, 2, g.view()).unwrap();
        assert!(sg.rank() <= 4);
        let layer = CompiledLayer::from_span_gates(3, 2, &[sg]).unwrap();
        let dense = layer.to_dense();
        // g acts on sites (0, 2); build via permutation of (g ⊗ I) on (0, 2, 1)
        let gi = kron(&g, &id);
        let perm = |x: usize| ((x >> 2) & 1) << 2 | (x & 1) << 1 | ((x >> 1) & 1);
        for r in 0..8 {
            for c in 0..8 {
                assert!((dense[[r, c]] - gi[[perm(r), perm(c)]]).norm() < 1e-12);
            }
        }
        let sw = SpanGate::from_two_site(1, 0, g.view()).unwrap();
        let d2 = CompiledLayer::from_span_gates(2, 2, &[sw]).unwrap().to_dense();
        let swap = |x: usize| ((x & 1) << 1) | (x >> 1);
        for r in 0..4 {
            for c in 0..4 {
                assert!((d2[[r, c]] - g[[swap(r), swap(c)]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn overlapping_spans_rejected() {
        let g = random_gate(2, 1);
        let a = SpanGate::from_two_site(0, 2, g.view()).unwrap();
        let b = SpanGate::from_two_site(2, 3, g.view()).unwrap();
        assert!(matches!(CompiledLayer::from_span_gates(4, 2, &[a, b]), Err(Error::OverlappingSpans(_, _))));
    }

    #[test]
    fn apply_layer_and_span_gate_match_dense() {
        for d in [2usize, 4] {
            let n = if d == 2 { 6 } else { 4 };
            let tt = random_tt(n, d, 4, 7 + d as u64);
            let g1 = SpanGate::from_two_site(0, 3, random_gate(d, 21).view()).unwrap();
            let g2 = SpanGate::from_two_site(n - 1, 4.min(n - 2), random_gate(d, 22).view()).unwrap();
            let gates = if g2.left > g1.right { vec![g1.clone(), g2] } else { vec![g1.clone()] };
            let layer = CompiledLayer::from_span_gates(n, d, &gates).unwrap();
            let want = layer.to_dense().dot(&tt.to_dense());
            let mut a = tt.clone();
            a.apply_layer(&layer).unwrap();
            assert!(dense_close(&want, &a.to_dense(), 1e-10));
            let mut b = tt.clone();
            for g in &gates {
                b.apply_span_gate(g).unwrap();
            }
            assert!(dense_close(&want, &b.to_dense(), 1e-10));
            assert!(b.max_bond() <= tt.max_bond() * g1.rank().max(1));
        }
    }

    #[test]
    fn identity_layer_is_noop() {
        let tt = random_tt(5, 2, 3, 2);
        let mut a = tt.clone();
        a.apply_layer(&CompiledLayer::identity(5, 2)).unwrap();
        assert!(dense_close(&tt.to_dense(), &a.to_dense(), 1e-15));
        assert_eq!(a.bond_dims(), tt.bond_dims());
        let mut b = TensorTrain::basis_product(3, 2, 0);
        assert!(b.apply_layer(&CompiledLayer::identity(3, 4)).is_err());
    }
}
