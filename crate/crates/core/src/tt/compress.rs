use ndarray::{Array2, Array3};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{as_mat, overlap, transfer_left, transfer_right, TensorTrain};
use crate::error::{Error, Result};
use crate::linalg::{self, Truncation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompressionOpts {
    pub chi_max: usize,
    pub min_sweeps: usize,
    pub max_sweeps: usize,
    /// Relative overlap change below which sweeping stops.
    pub tol: f64,
    /// Singular values below `floor` times the norm are dropped.
    pub floor: f64,
    /// Run variational sweeps inside gate windows wider than two sites.
    pub window_sweeps: bool,
}

impl Default for CompressionOpts {
    fn default() -> Self {
        CompressionOpts {
            chi_max: 64,
            min_sweeps: 2,
            max_sweeps: 10,
            tol: 1e-12,
            floor: linalg::SV_FLOOR,
            window_sweeps: false,
        }
    }
}

impl CompressionOpts {
    pub fn with_chi(chi_max: usize) -> Self {
        CompressionOpts { chi_max, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi_max < 1 {
            return Err(Error::InvalidArgument("chi_max must be at least 1".into()));
        }
        if self.max_sweeps < self.min_sweeps {
            return Err(Error::InvalidArgument("max_sweeps below min_sweeps".into()));
        }
        Ok(())
    }
}

/// Outcome of one compression. `overlap` is between unit-normalized
/// compressed and target vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionEvent {
    pub epsilon: f64,
    pub f: f64,
    pub overlap: C64,
    pub chi: usize,
    pub split_degenerate: bool,
    pub sweeps: usize,
    /// Squared norm of the compressed vector relative to the target.
    pub retained: f64,
}

impl CompressionEvent {
    pub fn exact(chi: usize) -> Self {
        CompressionEvent {
            epsilon: 0.0,
            f: 1.0,
            overlap: C64::new(1.0, 0.0),
            chi,
            split_degenerate: false,
            sweeps: 0,
            retained: 1.0,
        }
    }

    fn from_overlap(ov: C64, norm_c: f64, norm_t: f64, chi: usize, split: bool, sweeps: usize) -> Self {
        let ovn = if norm_c > 0.0 && norm_t > 0.0 { ov / (norm_c * norm_t) } else { C64::new(0.0, 0.0) };
        CompressionEvent {
            epsilon: (2.0 * (1.0 - ovn.re)).max(0.0).sqrt(),
            f: ovn.norm_sqr().min(1.0),
            overlap: ovn,
            chi,
            split_degenerate: split,
            sweeps,
            retained: if norm_t > 0.0 { (norm_c / norm_t).powi(2) } else { 0.0 },
        }
    }
}

fn segment_overlap(c: &[Array3<C64>], t: &[Array3<C64>]) -> C64 {
    let l = c[0].dim().0;
    let mut e = Array2::<C64>::eye(l);
    for (a, b) in c.iter().zip(t) {
        e = transfer_left(&e, a, b);
    }
    e.diag().sum()
}

fn two_site_theta(le: &Array2<C64>, t1: &Array3<C64>, t2: &Array3<C64>, re: &Array2<C64>) -> Array2<C64> {
    let (tl, d, tm) = t1.dim();
    let (_, _, tr) = t2.dim();
    let cl = le.nrows();
    let cr = re.nrows();
    let x = le.dot(&as_mat(t1, tl, d * tm)).into_shape_with_order((cl * d, tm)).unwrap();
    let x = x.dot(&as_mat(t2, tm, d * tr)).into_shape_with_order((cl * d * d, tr)).unwrap();
    x.dot(&re.t()).into_shape_with_order((cl * d, d * cr)).unwrap()
}

/// Two-site variational fit of `c` to `t` on a segment whose outer bond
/// spaces are shared (identity boundary environments). `c` must be left
/// canonical with its center on the last tensor; it ends in the same form.
/// Returns `<c|t>` and the number of sweeps.
fn fit_segment(
    c: &mut [Array3<C64>],
    t: &[Array3<C64>],
    opts: &CompressionOpts,
    trunc_log: &mut Vec<Truncation>,
) -> Result<(C64, usize)> {
    let n = c.len();
    let d = c[0].dim().1;
    let mut lenv: Vec<Array2<C64>> = Vec::with_capacity(n);
    lenv.push(Array2::eye(c[0].dim().0));
    for i in 0..n - 1 {
        let next = transfer_left(&lenv[i], &c[i], &t[i]);
        lenv.push(next);
    }
    let mut renv: Vec<Array2<C64>> = vec![Array2::zeros((0, 0)); n + 1];
    renv[n] = Array2::eye(c[n - 1].dim().2);
    let mut prev: Option<C64> = None;
    let mut ov = C64::new(0.0, 0.0);
    let mut sweeps = 0;
    for sweep in 0..opts.max_sweeps.max(1) {
        sweeps = sweep + 1;
        for i in (0..n - 1).rev() {
            let th = two_site_theta(&lenv[i], &t[i], &t[i + 1], &renv[i + 2]);
            let (u, s, vt, tr) = linalg::truncated_svd(th.view(), opts.chi_max, opts.floor)?;
            let k = s.len();
            let cl = lenv[i].nrows();
            let cr = renv[i + 2].nrows();
            let us = &u * &s.mapv(C64::from);
            c[i] = us.into_shape_with_order((cl, d, k))?;
            c[i + 1] = vt.into_shape_with_order((k, d, cr))?;
            renv[i + 1] = transfer_right(&renv[i + 2], &c[i + 1], &t[i + 1]);
            trunc_log.push(tr);
        }
        for i in 0..n - 1 {
            let th = two_site_theta(&lenv[i], &t[i], &t[i + 1], &renv[i + 2]);
            let (u, s, vt, tr) = linalg::truncated_svd(th.view(), opts.chi_max, opts.floor)?;
            let k = s.len();
            let cl = lenv[i].nrows();
            let cr = renv[i + 2].nrows();
            c[i] = u.into_shape_with_order((cl, d, k))?;
            let sv = &vt * &s.mapv(C64::from).insert_axis(ndarray::Axis(1));
            c[i + 1] = sv.into_shape_with_order((k, d, cr))?;
            lenv[i + 1] = transfer_left(&lenv[i], &c[i], &t[i]);
            if i == n - 2 {
                ov = C64::new(s.iter().map(|x| x * x).sum(), 0.0);
            }
            trunc_log.push(tr);
        }
        if let Some(p) = prev {
            if sweeps >= opts.min_sweeps && (ov - p).norm() <= opts.tol * ov.norm().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        prev = Some(ov);
    }
    Ok((ov, sweeps))
}

impl TensorTrain {
    /// Compresses the bonds inside positions `l..=r` after a gate has been
    /// applied there. Requires the canonical center to lie inside the window
    /// so the environments outside are isometric; the center ends at `r`.
    ///
    /// Reports exact values (`epsilon = 0`, `f = 1`) when only values below
    /// the floor were dropped.
    pub fn compress_window(&mut self, l: usize, r: usize, opts: &CompressionOpts) -> Result<CompressionEvent> {
        opts.validate()?;
        let c = self
            .center
            .filter(|&c| c >= l && c <= r)
            .ok_or_else(|| Error::InvalidArgument(format!("center {:?} outside window {l}..={r}", self.center)))?;
        let _ = c;
        if l == r {
            return Ok(CompressionEvent::exact(self.max_bond()));
        }
        let target: Vec<Array3<C64>> = self.tensors[l..=r].to_vec();
        for i in (l + 1..=r).rev() {
            self.right_orthonormalize_site(i)?;
        }
        let mut log = Vec::new();
        let d = self.phys_dim;
        for i in l..r {
            let (al, _, ar) = self.tensors[i].dim();
            let (u, s, vt, tr) = linalg::truncated_svd(as_mat(&self.tensors[i], al * d, ar), opts.chi_max, opts.floor)?;
            let k = s.len();
            self.tensors[i] = u.into_shape_with_order((al, d, k))?;
            let sv = &vt * &s.mapv(C64::from).insert_axis(ndarray::Axis(1));
            let (_, d2, r2) = self.tensors[i + 1].dim();
            self.tensors[i + 1] =
                sv.dot(&as_mat(&self.tensors[i + 1], ar, d2 * r2)).into_shape_with_order((k, d2, r2))?;
            log.push(tr);
        }
        self.center = Some(r);
        let chi = self.max_bond();
        if !log.iter().any(|t| t.capped) {
            return Ok(CompressionEvent::exact(chi));
        }
        let mut sweeps = 0;
        if opts.window_sweeps && r - l >= 2 {
            let (_, sw) = fit_segment(&mut self.tensors[l..=r], &target, opts, &mut log)?;
            sweeps = sw;
        }
        let ov = segment_overlap(&self.tensors[l..=r], &target);
        let norm_t = segment_overlap(&target, &target).re.max(0.0).sqrt();
        let norm_c = self.tensors[r].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let split = log.iter().any(|t| t.split_degenerate);
        if split {
            log::debug!("degenerate multiplet split while compressing window {l}..={r}");
        }
        let mut ev = CompressionEvent::from_overlap(ov, norm_c, norm_t, self.max_bond(), split, sweeps);
        if sweeps == 0 {
            // Plain SVD cuts: <c|t> = |c|^2, so F is the product of kept
            // weights, free of the rounding in the overlap.
            ev.f = log.iter().map(|t| 1.0 - t.discarded_weight).product();
            ev.epsilon = (2.0 * (1.0 - ev.f.sqrt())).max(0.0).sqrt();
        }
        Ok(ev)
    }
}

/// Two-site variational compression of `reference` to bond dimension
/// `opts.chi_max`, starting from `init` (SVD-truncated first if needed).
///
/// Returns the compressed train (same `log_norm` scale as the reference,
/// not renormalized), epsilon and f.
pub fn compress_two_site(
    init: &TensorTrain,
    reference: &TensorTrain,
    opts: &CompressionOpts,
) -> Result<(TensorTrain, CompressionEvent)> {
    opts.validate()?;
    if init.len() != reference.len() || init.phys_dim != reference.phys_dim {
        return Err(Error::DimensionMismatch("init and reference trains differ in shape".into()));
    }
    let n = init.len();
    let d = init.phys_dim;
    let mut c = init.clone();
    c.canonicalize(0)?;
    let mut log = Vec::new();
    for i in 0..n.saturating_sub(1) {
        let (al, _, ar) = c.tensors[i].dim();
        let (u, s, vt, tr) = linalg::truncated_svd(as_mat(&c.tensors[i], al * d, ar), opts.chi_max, opts.floor)?;
        let k = s.len();
        c.tensors[i] = u.into_shape_with_order((al, d, k))?;
        let sv = &vt * &s.mapv(C64::from).insert_axis(ndarray::Axis(1));
        let (_, d2, r2) = c.tensors[i + 1].dim();
        c.tensors[i + 1] = sv.dot(&as_mat(&c.tensors[i + 1], ar, d2 * r2)).into_shape_with_order((k, d2, r2))?;
        log.push(tr);
    }
    c.center = Some(n - 1);
    let same_start = init == reference;
    if same_start && !log.iter().any(|t| t.capped) {
        let chi = c.max_bond();
        return Ok((c, CompressionEvent::exact(chi)));
    }
    // The fit runs on raw tensors; rescale so both sides share log_norm.
    let scale = (init.log_norm - reference.log_norm).exp();
    let last = n - 1;
    c.tensors[last].mapv_inplace(|z| z * scale);
    c.log_norm = reference.log_norm;
    let mut sweeps = 0;
    if n >= 2 {
        let (_, sw) = fit_segment(&mut c.tensors, &reference.tensors, opts, &mut log)?;
        sweeps = sw;
    }
    let ov = overlap(&c, reference)?;
    let split = log.iter().any(|t| t.split_degenerate);
    let ev = CompressionEvent::from_overlap(ov, c.norm(), reference.norm(), c.max_bond(), split, sweeps);
    Ok((c, ev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::testutil::*;
    use crate::tt::SpanGate;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;

    fn dense_cut_fidelity(v: &Array1<C64>, left_dim: usize, chi: usize) -> f64 {
        let m = v.view().into_shape_with_order((left_dim, v.len() / left_dim)).unwrap();
        let (_, s, _) = linalg::svd(m).unwrap();
        let tot: f64 = s.iter().map(|x| x * x).sum();
        s.iter().take(chi).map(|x| x * x).sum::<f64>() / tot
    }

    #[test]
    fn already_small_is_exact() {
        let t = random_tt(6, 2, 4, 3);
        let (c, ev) = compress_two_site(&t, &t, &CompressionOpts::with_chi(4)).unwrap();
        assert_eq!(ev.epsilon, 0.0);
        assert_eq!(ev.f, 1.0);
        assert!(dense_close(&t.to_dense(), &c.to_dense(), 1e-12));
    }

    #[test]
    fn matches_optimal_single_cut_truncation() {
        // 8 sites, d=2: only the middle bond (rank 16) exceeds chi=8
        let t = random_tt(8, 2, 16, 5);
        assert_eq!(t.max_bond(), 16);
        let (c, ev) = compress_two_site(&t, &t, &CompressionOpts::with_chi(8)).unwrap();
        assert!(c.max_bond() <= 8);
        let want = dense_cut_fidelity(&t.to_dense(), 16, 8);
        assert!((ev.f - want).abs() < 1e-6, "f={} want={}", ev.f, want);
        assert!(ev.sweeps >= 2);
    }

    #[test]
    fn rejects_zero_chi() {
        let t = random_tt(4, 2, 2, 1);
        assert!(compress_two_site(&t, &t, &CompressionOpts::with_chi(0)).is_err());
    }

    #[test]
    fn window_compression_after_long_gate() {
        let t = random_tt(7, 2, 4, 8);
        let g = Array2::from_shape_fn((4, 4), |(i, j)| {
            C64::new(((i * 3 + j) % 5) as f64 - 2.0, ((i + j) % 3) as f64 - 1.0)
        });
        let gate = SpanGate::from_two_site(1, 5, g.view()).unwrap();
        let mut exact = t.clone();
        exact.apply_span_gate(&gate).unwrap();
        let dense_target = exact.to_dense();

        // no cap: vector preserved exactly
        let mut a = t.clone();
        a.canonicalize(1).unwrap();
        a.apply_span_gate(&gate).unwrap();
        let ev = a.compress_window(1, 5, &CompressionOpts::with_chi(64)).unwrap();
        assert_eq!((ev.epsilon, ev.f), (0.0, 1.0));
        assert!(dense_close(&dense_target, &a.to_dense(), 1e-10));

        // capped: reported fidelity equals the dense overlap
        let mut b = t.clone();
        b.canonicalize(3).unwrap();
        b.apply_span_gate(&gate).unwrap();
        let ev = b.compress_window(1, 5, &CompressionOpts::with_chi(3)).unwrap();
        assert!(b.max_bond() <= 4);
        assert!(b.bond_dims()[1..5].iter().all(|&x| x <= 3));
        let db = b.to_dense();
        let num: C64 = db.iter().zip(&dense_target).map(|(x, y)| x.conj() * y).sum();
        let nb = db.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let nt = dense_target.iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!((ev.f - num.norm_sqr() / (nb * nt)).abs() < 1e-10);
        assert!(ev.f < 1.0 && ev.epsilon > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn epsilon_f_identities(seed in 0u64..1000, chi in 1usize..6) {
            let t = random_tt(6, 2, 8, seed);
            let (c, ev) = compress_two_site(&t, &t, &CompressionOpts::with_chi(chi)).unwrap();
            let ov = overlap(&c, &t).unwrap() / (c.norm() * t.norm());
            prop_assert!((ev.epsilon.powi(2) - 2.0 * (1.0 - ov.re)).abs() < 1e-10);
            prop_assert!((ev.f - ov.norm_sqr()).abs() < 1e-10);
            prop_assert!(ev.f <= 1.0 + 1e-12);
            prop_assert!(c.max_bond() <= chi);
            prop_assert_eq!(ev.epsilon == 0.0, ev.f == 1.0);
        }
    }
}
