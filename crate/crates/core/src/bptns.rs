//! Tensor-network states on the lattice graph itself, evolved with simple
//! updates and measured with belief-propagation environments.
//!
//! Storage is Vidal form: a site tensor `Gamma` with axes
//! `[phys, leg_0, leg_1, ...]` (one leg per neighbor, in
//! [`Lattice::neighbors`] order) and a weight vector `Lambda` per edge. The
//! message-passing network uses `psi = Gamma` with `sqrt(Lambda)` absorbed on
//! every leg.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::{Array1, Array2, ArrayD, Axis, IxDyn};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{build_program, rx, rzz, CircuitProgram, CircuitSpec, Step};
use crate::clifford::{stabilizer, Pauli, PauliString};
use crate::error::{Error, Result};
use crate::heisenberg::{evolve_operator, HeisenbergOpts};
use crate::lattice::{norm_edge, snake_order, Edge, Lattice, SnakeOrder};
use crate::linalg::{self, Truncation};

/// Largest site tensor, in complex entries, a gate may produce.
pub const MAX_TENSOR_ELEMS: usize = 1 << 27;
/// Environment eigenvalues below this fraction of the largest are dropped
/// when regauging.
const MSG_EIG_FLOOR: f64 = 1e-13;

const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone)]
pub struct GraphTNS {
    site_count: usize,
    edges: Vec<Edge>,
    edge_index: HashMap<Edge, usize>,
    /// Per site, `(edge index, neighbor)` for each virtual leg in axis order.
    legs: Vec<Vec<(usize, usize)>>,
    gammas: Vec<ArrayD<C64>>,
    lambdas: Vec<Array1<f64>>,
    pub chi_max: usize,
    pub floor: f64,
    /// Largest discarded weight of any single truncation.
    pub max_discarded: f64,
    pub truncations: usize,
    pub degenerate_splits: usize,
}

/// Views `t` as `(left, dim, right)` around `axis`.
fn split3(t: &ArrayD<C64>, axis: usize) -> ndarray::ArrayView3<'_, C64> {
    let sh = t.shape();
    let left = sh[..axis].iter().product();
    let right = sh[axis + 1..].iter().product();
    t.view().into_shape_with_order((left, sh[axis], right)).expect("site tensors are kept in standard layout")
}

/// `out[.., k, ..] = sum_i t[.., i, ..] m[i, k]` on `axis`, as one GEMM per
/// leading index so no axis permutation is needed.
fn apply_on_leg(t: &ArrayD<C64>, axis: usize, m: &Array2<C64>) -> ArrayD<C64> {
    let t3 = split3(t, axis);
    let (left, _, right) = t3.dim();
    let mut shape = t.shape().to_vec();
    shape[axis] = m.ncols();
    let out = if right == 1 {
        t3.into_shape_with_order((left, m.nrows())).unwrap().dot(m).into_shape_with_order(IxDyn(&shape)).unwrap()
    } else {
        let mut out = ndarray::Array3::<C64>::zeros((left, m.ncols(), right));
        let mt = m.t();
        for (src, mut dst) in t3.outer_iter().zip(out.outer_iter_mut()) {
            ndarray::linalg::general_mat_mul(ONE, &mt, &src, ZERO, &mut dst);
        }
        out.into_shape_with_order(IxDyn(&shape)).unwrap()
    };
    out
}

/// `M[k, k'] = sum x[.., k, ..] y[.., k', ..]` over every other axis.
fn leg_gram(x: &ArrayD<C64>, y: &ArrayD<C64>, axis: usize) -> Array2<C64> {
    let (x3, y3) = (split3(x, axis), split3(y, axis));
    let (left, k, right) = x3.dim();
    if right == 1 {
        let xm = x3.into_shape_with_order((left, k)).unwrap();
        let ym = y3.into_shape_with_order((left, y3.dim().1)).unwrap();
        return xm.t().dot(&ym);
    }
    let mut m = Array2::<C64>::zeros((k, y3.dim().1));
    for (a, b) in x3.outer_iter().zip(y3.outer_iter()) {
        ndarray::linalg::general_mat_mul(ONE, &a, &b.t(), ONE, &mut m);
    }
    m
}

fn scale_leg(t: &mut ArrayD<C64>, axis: usize, v: &Array1<f64>) {
    for mut lane in t.lanes_mut(Axis(axis)) {
        for (z, &x) in lane.iter_mut().zip(v) {
            *z *= x;
        }
    }
}

fn inverse_weights(v: &Array1<f64>) -> Array1<f64> {
    v.mapv(|x| if x > 0.0 { 1.0 / x } else { 0.0 })
}

fn transpose(m: &Array2<C64>) -> Array2<C64> {
    m.t().as_standard_layout().into_owned()
}

fn frob(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian square root and pseudo-inverse square root of a PSD matrix.
fn psd_sqrt(m: &Array2<C64>) -> Result<(Array2<C64>, Array2<C64>)> {
    let h = (m + &linalg::dagger(m.view())) * C64::new(0.5, 0.0);
    let (w, v) = linalg::eigh(h.view())?;
    let top = w.iter().cloned().fold(0.0f64, f64::max);
    let keep = |x: f64| x > MSG_EIG_FLOOR * top;
    let sq: Vec<f64> = w.iter().map(|&x| if keep(x) { x.sqrt() } else { 0.0 }).collect();
    let isq: Vec<f64> = w.iter().map(|&x| if keep(x) { 1.0 / x.sqrt() } else { 0.0 }).collect();
    let vd = linalg::dagger(v.view());
    let build = |d: &[f64]| {
        let mut vs = v.clone();
        for (mut col, &x) in vs.columns_mut().into_iter().zip(d) {
            col.mapv_inplace(|z| z * x);
        }
        vs.dot(&vd)
    };
    Ok((build(&sq), build(&isq)))
}

impl GraphTNS {
    /// Product state with one local vector per site.
    pub fn product(lat: &Lattice, locals: &[Array1<C64>], chi_max: usize) -> Result<Self> {
        let n = lat.site_count;
        if locals.len() != n || locals.iter().any(|v| v.len() != 2) {
            return Err(Error::DimensionMismatch("one local qubit vector per site expected".into()));
        }
        let edges = lat.edges.clone();
        let edge_index: HashMap<Edge, usize> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let legs: Vec<Vec<(usize, usize)>> =
            (0..n).map(|s| lat.neighbors(s).iter().map(|&b| (edge_index[&norm_edge(s, b)], b)).collect()).collect();
        let gammas = (0..n)
            .map(|s| {
                let mut shape = vec![2usize];
                shape.extend(std::iter::repeat_n(1, legs[s].len()));
                locals[s].clone().into_shape_with_order(IxDyn(&shape)).unwrap()
            })
            .collect();
        Ok(GraphTNS {
            site_count: n,
            lambdas: vec![Array1::ones(1); edges.len()],
            edges,
            edge_index,
            legs,
            gammas,
            chi_max: chi_max.max(1),
            floor: linalg::SV_FLOOR,
            max_discarded: 0.0,
            truncations: 0,
            degenerate_splits: 0,
        })
    }

    /// `|up...up>`
    pub fn up(lat: &Lattice, chi_max: usize) -> Result<Self> {
        Self::product(lat, &vec![Array1::from(vec![ONE, ZERO]); lat.site_count], chi_max)
    }

    /// `|+...+>`
    pub fn right(lat: &Lattice, chi_max: usize) -> Result<Self> {
        let h = C64::new(0.5f64.sqrt(), 0.0);
        Self::product(lat, &vec![Array1::from(vec![h, h]); lat.site_count], chi_max)
    }

    pub fn site_count(&self) -> usize {
        self.site_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    fn edge_id(&self, a: usize, b: usize) -> Result<usize> {
        self.edge_index
            .get(&norm_edge(a, b))
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("({a},{b}) is not an edge")))
    }

    /// Axis of `site`'s tensor carrying the leg toward `nbr`.
    fn axis_to(&self, site: usize, nbr: usize) -> usize {
        1 + self.legs[site].iter().position(|&(_, b)| b == nbr).expect("neighbor leg")
    }

    pub fn lambda(&self, a: usize, b: usize) -> Result<&Array1<f64>> {
        Ok(&self.lambdas[self.edge_id(a, b)?])
    }

    pub fn gamma(&self, site: usize) -> &ArrayD<C64> {
        &self.gammas[site]
    }

    pub fn max_bond(&self) -> usize {
        self.lambdas.iter().map(|l| l.len()).max().unwrap_or(1)
    }

    /// `Gamma_site` with the weights of every leg except `skip` absorbed,
    /// each raised to `power`.
    fn absorbed(&self, site: usize, skip: Option<usize>, power: f64) -> ArrayD<C64> {
        let mut t = self.gammas[site].clone();
        for (k, &(e, b)) in self.legs[site].iter().enumerate() {
            if Some(b) != skip {
                scale_leg(&mut t, k + 1, &self.lambdas[e].mapv(|x| x.powf(power)));
            }
        }
        t
    }

    /// `psi` tensors for message passing.
    fn psi(&self) -> Vec<ArrayD<C64>> {
        (0..self.site_count).map(|s| self.absorbed(s, None, 0.5)).collect()
    }

    /// Applies a one-site operator.
    pub fn apply_single(&mut self, site: usize, g: &Array2<C64>) -> Result<()> {
        if g.dim() != (2, 2) {
            return Err(Error::DimensionMismatch("single-site gate must be 2x2".into()));
        }
        let t = &self.gammas[site];
        let shape = t.shape().to_vec();
        let m = t.view().into_shape_with_order((2, t.len() / 2)).unwrap().to_owned();
        self.gammas[site] = g.dot(&m).into_shape_with_order(IxDyn(&shape)).unwrap();
        Ok(())
    }

    /// Simple update: absorb the environment weights, apply `g` on
    /// `(s_a, s_b)` with `s_a` major, split by a weighted SVD truncated to
    /// `chi_max`, and strip the environment weights again. The new edge
    /// weights are normalized.
    pub fn apply_gate(&mut self, a: usize, b: usize, g: &Array2<C64>) -> Result<Truncation> {
        if g.dim() != (4, 4) {
            return Err(Error::DimensionMismatch("two-site gate must be 4x4".into()));
        }
        let e = self.edge_id(a, b)?;
        let (ax_a, ax_b) = (self.axis_to(a, b), self.axis_to(b, a));
        let chi_e = self.lambdas[e].len();

        // (rest, phys * chi_e) with the bond index fastest
        let split = |t: ArrayD<C64>, ax: usize| -> (Array2<C64>, Vec<usize>) {
            let nd = t.ndim();
            let mut perm: Vec<usize> = (1..nd).filter(|&k| k != ax).collect();
            perm.push(0);
            perm.push(ax);
            let p = t.permuted_axes(IxDyn(&perm));
            let shape = p.shape().to_vec();
            let rest: usize = shape[..nd - 2].iter().product();
            let m = p.as_standard_layout().into_owned().into_shape_with_order((rest, 2 * chi_e)).unwrap();
            (m, perm)
        };
        let (ma, perm_a) = split(self.absorbed(a, Some(b), 1.0), ax_a);
        let (mb, perm_b) = split(self.absorbed(b, Some(a), 1.0), ax_b);
        let (qa, ra) = linalg::qr(ma.view())?;
        let (qb, rb) = linalg::qr(mb.view())?;
        let (ka, kb) = (ra.nrows(), rb.nrows());

        // theta[(ka, sa), (kb, sb)] = sum_e ra[ka, sa, e] lambda_e rb[kb, sb, e]
        let lam = &self.lambdas[e];
        let mut ra2 = ra.into_shape_with_order((ka * 2, chi_e))?;
        for mut row in ra2.rows_mut() {
            for (z, &x) in row.iter_mut().zip(lam) {
                *z *= x;
            }
        }
        let rb2 = rb.into_shape_with_order((kb * 2, chi_e))?;
        let theta = ra2.dot(&rb2.t());
        let mut gt = Array2::<C64>::zeros((ka * 2, kb * 2));
        for i in 0..ka {
            for j in 0..kb {
                for so in 0..4 {
                    let mut acc = ZERO;
                    for si in 0..4 {
                        acc += g[[so, si]] * theta[[i * 2 + si / 2, j * 2 + si % 2]];
                    }
                    gt[[i * 2 + so / 2, j * 2 + so % 2]] = acc;
                }
            }
        }
        let (u, s, vt, tr) = linalg::truncated_svd(gt.view(), self.chi_max, self.floor)?;
        let k = s.len();
        let rest_a: usize = qa.nrows();
        let rest_b: usize = qb.nrows();
        if rest_a * 2 * k > MAX_TENSOR_ELEMS || rest_b * 2 * k > MAX_TENSOR_ELEMS {
            return Err(Error::InvalidArgument(format!(
                "bond dimension {k} on ({a},{b}) overflows the site tensor limit"
            )));
        }
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Linalg("gate annihilated the state".into()));
        }
        self.lambdas[e] = s.mapv(|x| x / norm);
        self.note(&tr);

        let rebuild = |q: &Array2<C64>, half: Array2<C64>, perm: &[usize], old: &ArrayD<C64>| -> Result<ArrayD<C64>> {
            // half: (k_q * 2, k) -> (k_q, 2 * k)
            let kq = half.nrows() / 2;
            let m = q.dot(&half.into_shape_with_order((kq, 2 * k))?);
            let mut shape: Vec<usize> = perm.iter().map(|&p| old.shape()[p]).collect();
            let nd = shape.len();
            shape[nd - 1] = k;
            let t = m.into_shape_with_order(IxDyn(&shape))?;
            let mut inv = vec![0usize; nd];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            Ok(t.permuted_axes(IxDyn(&inv)).as_standard_layout().into_owned())
        };
        let new_a = rebuild(&qa, u, &perm_a, &self.gammas[a])?;
        let new_b = rebuild(&qb, transpose(&vt), &perm_b, &self.gammas[b])?;
        self.gammas[a] = new_a;
        self.gammas[b] = new_b;
        for (site, skip) in [(a, b), (b, a)] {
            for k in 0..self.legs[site].len() {
                let (e2, nb) = self.legs[site][k];
                if nb != skip {
                    let inv = inverse_weights(&self.lambdas[e2]);
                    scale_leg(&mut self.gammas[site], k + 1, &inv);
                }
            }
        }
        Ok(tr)
    }

    fn note(&mut self, t: &Truncation) {
        if t.capped {
            self.truncations += 1;
            self.max_discarded = self.max_discarded.max(t.discarded_weight);
        }
        if t.split_degenerate {
            self.degenerate_splits += 1;
        }
    }

    fn apply_step(&mut self, step: &Step, sign: f64) -> Result<()> {
        match step {
            Step::Zz { layer, angles } => {
                for (&(a, b), &t) in layer.bonds.iter().zip(angles) {
                    if t != 0.0 {
                        self.apply_gate(a, b, &rzz(sign * t))?;
                    }
                }
            }
            Step::Rx { angles } => {
                for (s, &t) in angles.iter().enumerate() {
                    if t != 0.0 {
                        self.apply_single(s, &rx(sign * t))?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies the operator product `steps` (last step first).
    pub fn apply_product(&mut self, steps: &[Step]) -> Result<()> {
        for st in steps.iter().rev() {
            self.apply_step(st, 1.0)?;
        }
        Ok(())
    }

    /// Applies the adjoint of the operator product `steps`.
    pub fn apply_product_dagger(&mut self, steps: &[Step]) -> Result<()> {
        for st in steps {
            self.apply_step(st, -1.0)?;
        }
        Ok(())
    }

    /// Replaces the weights on `(a, b)` by ones and inserts `g`, `g^-1` on
    /// the edge. The state is unchanged; only its gauge moves.
    pub fn insert_gauge(&mut self, a: usize, b: usize, g: &Array2<C64>, g_inv: &Array2<C64>) -> Result<()> {
        let e = self.edge_id(a, b)?;
        let (ax_a, ax_b) = (self.axis_to(a, b), self.axis_to(b, a));
        let chi = self.lambdas[e].len();
        if g.dim() != (chi, chi) || g_inv.dim() != (chi, chi) {
            return Err(Error::DimensionMismatch(format!("gauge must be {chi}x{chi}")));
        }
        let lam = self.lambdas[e].clone();
        scale_leg(&mut self.gammas[a], ax_a, &lam);
        self.gammas[a] = apply_on_leg(&self.gammas[a], ax_a, g);
        self.gammas[b] = apply_on_leg(&self.gammas[b], ax_b, &transpose(g_inv));
        self.lambdas[e] = Array1::ones(chi);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpOpts {
    pub iters: usize,
    /// Stop once the largest message change falls below this.
    pub tol: f64,
    /// Weight of the old message in each update.
    pub damping: f64,
}

impl Default for BpOpts {
    fn default() -> Self {
        BpOpts { iters: 15, tol: 1e-12, damping: 0.0 }
    }
}

/// Environment matrices on directed edges, `[ket, bra]` on the edge leg.
#[derive(Debug, Clone)]
pub struct MessageSet {
    /// Index `2 e` runs from `edges[e].0` to `edges[e].1`, `2 e + 1` back.
    msgs: Vec<Array2<C64>>,
    edge_index: HashMap<Edge, usize>,
    edges: Vec<Edge>,
    /// Largest Frobenius change per iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl MessageSet {
    fn slot(&self, from: usize, to: usize) -> Result<usize> {
        let e = *self
            .edge_index
            .get(&norm_edge(from, to))
            .ok_or_else(|| Error::InvalidArgument(format!("({from},{to}) is not an edge")))?;
        Ok(2 * e + usize::from(self.edges[e].0 != from))
    }

    /// Message sent from `from` into `to`.
    pub fn get(&self, from: usize, to: usize) -> Result<&Array2<C64>> {
        Ok(&self.msgs[self.slot(from, to)?])
    }

    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// `psi` with every leg except the one toward `skip` contracted against the
/// incoming messages on its ket index.
fn with_env(tns: &GraphTNS, psi: &ArrayD<C64>, site: usize, skip: Option<usize>, msgs: &MessageSet) -> ArrayD<C64> {
    let mut x: Option<ArrayD<C64>> = None;
    for (k, &(_, c)) in tns.legs[site].iter().enumerate() {
        if Some(c) != skip {
            x = Some(apply_on_leg(x.as_ref().unwrap_or(psi), k + 1, msgs.get(c, site).unwrap()));
        }
    }
    x.unwrap_or_else(|| psi.clone())
}

/// `psi_conj` holds the conjugated site tensors.
fn update_message(
    tns: &GraphTNS,
    psi: &[ArrayD<C64>],
    psi_conj: &[ArrayD<C64>],
    msgs: &MessageSet,
    from: usize,
    to: usize,
) -> Array2<C64> {
    let ax = tns.axis_to(from, to);
    let x = with_env(tns, &psi[from], from, Some(to), msgs);
    let m = leg_gram(&x, &psi_conj[from], ax);
    let m = (&m + &linalg::dagger(m.view())) * C64::new(0.5, 0.0);
    let tr: f64 = m.diag().iter().map(|z| z.re).sum();
    if tr > 0.0 {
        m / C64::new(tr, 0.0)
    } else {
        m
    }
}

/// The identity message of the weight-stripped frame, `diag(Lambda)`
/// trace-normalized, expressed on the `psi` legs.
fn vidal_identity(l: &Array1<f64>) -> Array2<C64> {
    let tr: f64 = l.sum();
    Array2::from_diag(&l.mapv(|v| C64::new(v / tr, 0.0)))
}

/// Iterates synchronous message updates until the largest change drops
/// below `opts.tol` or `opts.iters` is reached. Messages start at the
/// identity of the weight-stripped frame, where the Vidal gauge makes every
/// message the identity; on the stored `psi` legs that is `diag(Lambda)`.
pub fn bp_messages(tns: &GraphTNS, opts: &BpOpts) -> MessageSet {
    let psi = tns.psi();
    let psi_conj: Vec<ArrayD<C64>> = psi.iter().map(|t| t.mapv(|z| z.conj())).collect();
    let mut set = MessageSet {
        msgs: tns.lambdas.iter().flat_map(|l| [vidal_identity(l), vidal_identity(l)]).collect(),
        edge_index: tns.edge_index.clone(),
        edges: tns.edges.clone(),
        residuals: Vec::new(),
        converged: false,
    };
    let directed: Vec<(usize, usize)> = tns.edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    for _ in 0..opts.iters.max(1) {
        let fresh: Vec<Array2<C64>> =
            directed.par_iter().map(|&(from, to)| update_message(tns, &psi, &psi_conj, &set, from, to)).collect();
        let mut res = 0.0f64;
        for (slot, new) in fresh.into_iter().enumerate() {
            let new = if opts.damping > 0.0 {
                new * C64::new(1.0 - opts.damping, 0.0) + &set.msgs[slot] * C64::new(opts.damping, 0.0)
            } else {
                new
            };
            res = res.max(frob(&(&new - &set.msgs[slot])));
            set.msgs[slot] = new;
        }
        set.residuals.push(res);
        if res < opts.tol {
            set.converged = true;
            break;
        }
    }
    set
}

/// Runs message passing, then moves every edge into the gauge where the
/// messages are diagonal and the edge weights are the singular values of
/// the environment square roots. Returns the regauged state and its
/// messages.
pub fn bp_regauge(tns: &GraphTNS, opts: &BpOpts) -> Result<(GraphTNS, MessageSet)> {
    let msgs = bp_messages(tns, opts);
    let mut psi = tns.psi();
    let mut out = tns.clone();
    for (e, &(a, b)) in tns.edges.iter().enumerate() {
        let (sa, sa_inv) = psd_sqrt(&msgs.msgs[2 * e])?;
        let (sb, sb_inv) = psd_sqrt(&msgs.msgs[2 * e + 1])?;
        let m = transpose(&sa).dot(&sb);
        let (u, s, vt, _) = linalg::truncated_svd(m.view(), usize::MAX, tns.floor)?;
        let x = sa_inv.mapv(|z| z.conj()).dot(&u);
        let y = sb_inv.mapv(|z| z.conj()).dot(&transpose(&vt));
        let (ax_a, ax_b) = (tns.axis_to(a, b), tns.axis_to(b, a));
        psi[a] = apply_on_leg(&psi[a], ax_a, &x);
        psi[b] = apply_on_leg(&psi[b], ax_b, &y);
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.lambdas[e] = s.mapv(|v| v / norm);
    }
    out.gammas = psi;
    let mut fixed = msgs.clone();
    for (e, l) in out.lambdas.iter().enumerate() {
        fixed.msgs[2 * e] = vidal_identity(l);
        fixed.msgs[2 * e + 1] = vidal_identity(l);
    }
    Ok((out, fixed))
}

/// `<P>` for a Pauli string supported on one site or one edge, with the
/// messages standing in for the rest of the network.
pub fn local_expectation(tns: &GraphTNS, msgs: &MessageSet, p: &PauliString) -> Result<f64> {
    if p.len() != tns.site_count {
        return Err(Error::DimensionMismatch("Pauli string length differs from the state".into()));
    }
    let support = p.support();
    let coeff = p.coefficient();
    let mat = |s: usize| Array2::from_shape_fn((2, 2), |(i, j)| p.letter(s).matrix()[i][j]);
    let value = match support.as_slice() {
        [] => ONE,
        [s] => {
            let psi = tns.absorbed(*s, None, 0.5);
            let x = with_env(tns, &psi, *s, None, msgs);
            let n = psi.len() / 2;
            let xm = x.into_shape_with_order((2, n))?;
            let pm = psi.into_shape_with_order((2, n))?.mapv(|z| z.conj());
            let num: C64 = (&mat(*s).dot(&xm) * &pm).sum();
            let den: C64 = (&xm * &pm).sum();
            num / den
        }
        [a, b] => {
            if !tns.edge_index.contains_key(&norm_edge(*a, *b)) {
                return Err(Error::InvalidArgument(format!("support {a},{b} is not an edge")));
            }
            let rho = |s: usize, t: usize| -> Array2<C64> {
                // rho[(s, e), (s', e')] with the ket leg toward t left open
                let psi = tns.absorbed(s, None, 0.5);
                let ax = tns.axis_to(s, t);
                let x = with_env(tns, &psi, s, Some(t), msgs);
                let to_mat = |t: &ArrayD<C64>| {
                    // (rest, phys * chi) with phys major
                    let nd = t.ndim();
                    let mut perm: Vec<usize> = (1..nd).filter(|&k| k != ax).collect();
                    perm.push(0);
                    perm.push(ax);
                    let q = t.view().permuted_axes(IxDyn(&perm));
                    let cols = 2 * t.shape()[ax];
                    q.as_standard_layout().into_owned().into_shape_with_order((t.len() / cols, cols)).unwrap()
                };
                to_mat(&x).t().dot(&to_mat(&psi).mapv(|z| z.conj()))
            };
            let ra = rho(*a, *b);
            let rb = rho(*b, *a);
            let chi = ra.nrows() / 2;
            let (pa, pb) = (mat(*a), mat(*b));
            let mut num = ZERO;
            let mut den = ZERO;
            for s in 0..2 {
                for s2 in 0..2 {
                    for t in 0..2 {
                        for t2 in 0..2 {
                            let w = pa[[s2, s]] * pb[[t2, t]];
                            let id = if s == s2 && t == t2 { ONE } else { ZERO };
                            if w == ZERO && id == ZERO {
                                continue;
                            }
                            let mut acc = ZERO;
                            for e in 0..chi {
                                for e2 in 0..chi {
                                    acc += ra[[s * chi + e, s2 * chi + e2]] * rb[[t * chi + e, t2 * chi + e2]];
                                }
                            }
                            num += w * acc;
                            den += id * acc;
                        }
                    }
                }
            }
            num / den
        }
        _ => {
            return Err(Error::InvalidArgument(format!("support of size {} is too large", support.len())));
        }
    };
    let v = coeff * value;
    if v.im.abs() > 1e-8 * v.norm().max(1.0) {
        return Err(Error::InvalidArgument(format!("non-Hermitian observable gave {v}")));
    }
    Ok(v.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EchoMode {
    /// Truncate to `chi` on the forward and the backward leg.
    #[default]
    TruncateBoth,
    /// Truncate only going forward; the backward leg keeps every singular
    /// value above the floor.
    TruncateForward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpRunOpts {
    pub chi: usize,
    pub bp: BpOpts,
    /// Regauge with message passing after every round.
    pub regauge_each_round: bool,
}

impl Default for BpRunOpts {
    fn default() -> Self {
        BpRunOpts { chi: 128, bp: BpOpts::default(), regauge_each_round: true }
    }
}

impl BpRunOpts {
    pub fn with_chi(chi: usize) -> Self {
        BpRunOpts { chi, ..Default::default() }
    }
}

fn order_for(lat: &Lattice) -> SnakeOrder {
    snake_order(lat).unwrap_or_else(|_| SnakeOrder::identity(lat.site_count))
}

/// Regauges after a round when configured and returns the messages.
fn end_round(tns: &mut GraphTNS, opts: &BpRunOpts) -> Result<Option<MessageSet>> {
    if !opts.regauge_each_round {
        return Ok(None);
    }
    let (g, m) = bp_regauge(tns, &opts.bp)?;
    *tns = g;
    Ok(Some(m))
}

fn run_forward(tns: &mut GraphTNS, prog: &CircuitProgram, opts: &BpRunOpts) -> Result<()> {
    for _ in 0..prog.depth {
        tns.apply_product(&prog.round.steps)?;
        end_round(tns, opts)?;
    }
    if !prog.tail.is_empty() {
        tns.apply_product(&prog.tail)?;
        end_round(tns, opts)?;
    }
    Ok(())
}

fn run_backward(tns: &mut GraphTNS, prog: &CircuitProgram, opts: &BpRunOpts) -> Result<()> {
    if !prog.tail.is_empty() {
        tns.apply_product_dagger(&prog.tail)?;
        end_round(tns, opts)?;
    }
    for _ in 0..prog.depth {
        tns.apply_product_dagger(&prog.round.steps)?;
        end_round(tns, opts)?;
    }
    Ok(())
}

/// `U^D |up...up>` as a graph state.
pub fn evolve_tns(lat: &Lattice, spec: &CircuitSpec, opts: &BpRunOpts) -> Result<GraphTNS> {
    let prog = build_program(spec, lat, &order_for(lat))?;
    let mut tns = GraphTNS::up(lat, opts.chi)?;
    run_forward(&mut tns, &prog, opts)?;
    Ok(tns)
}

/// `<Z_site>` on `U^dag(pi/2)^D U(theta)^D |up...up>` at `theta_J = -pi/2`.
pub fn echo_tns(lat: &Lattice, theta: f64, depth: usize, site: usize, opts: &BpRunOpts, mode: EchoMode) -> Result<f64> {
    let order = order_for(lat);
    let fwd = build_program(&CircuitSpec::new(-FRAC_PI_2, theta, depth), lat, &order)?;
    let mut tns = GraphTNS::up(lat, opts.chi)?;
    run_forward(&mut tns, &fwd, opts)?;
    echo_back(tns, lat, depth, site, opts, mode)
}

/// Echo values for `D = 1..=d_max`, sharing one forward evolution.
pub fn echo_profile(
    lat: &Lattice,
    theta: f64,
    d_max: usize,
    site: usize,
    opts: &BpRunOpts,
    mode: EchoMode,
) -> Result<Vec<f64>> {
    let order = order_for(lat);
    let fwd = build_program(&CircuitSpec::new(-FRAC_PI_2, theta, 1), lat, &order)?;
    let mut tns = GraphTNS::up(lat, opts.chi)?;
    let mut out = Vec::with_capacity(d_max);
    for depth in 1..=d_max {
        run_forward(&mut tns, &fwd, opts)?;
        out.push(echo_back(tns.clone(), lat, depth, site, opts, mode)?);
    }
    Ok(out)
}

fn echo_back(
    mut tns: GraphTNS,
    lat: &Lattice,
    depth: usize,
    site: usize,
    opts: &BpRunOpts,
    mode: EchoMode,
) -> Result<f64> {
    let bwd = build_program(&CircuitSpec::new(-FRAC_PI_2, FRAC_PI_2, depth), lat, &order_for(lat))?;
    if mode == EchoMode::TruncateForward {
        tns.chi_max = usize::MAX;
    }
    run_backward(&mut tns, &bwd, opts)?;
    let (tns, msgs) = bp_regauge(&tns, &opts.bp)?;
    local_expectation(&tns, &msgs, &PauliString::single(lat.site_count, site, Pauli::Z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoRow {
    pub theta: f64,
    pub depth: usize,
    pub bptns: f64,
    pub exact: f64,
    /// Operator-side value, when requested.
    pub heisenberg: Option<f64>,
}

/// Echo values on a `theta` grid for `D = 1..=d_max`, from the graph state,
/// the dense oracle, and optionally the operator engine at `heisenberg_chi`.
pub fn stabilizer_echo_experiment(
    lat: &Lattice,
    site: usize,
    thetas: &[f64],
    d_max: usize,
    opts: &BpRunOpts,
    mode: EchoMode,
    heisenberg_chi: Option<usize>,
) -> Result<Vec<EchoRow>> {
    let mut rows = Vec::new();
    for &theta in thetas {
        let profile = echo_profile(lat, theta, d_max, site, opts, mode)?;
        for (depth, bptns) in (1..=d_max).zip(profile) {
            let exact = crate::exact::forward_backward_z(lat, theta, FRAC_PI_2, depth, site)?;
            let heisenberg = match heisenberg_chi {
                Some(chi) => {
                    let op = stabilizer(lat, site, depth)?;
                    let ho = HeisenbergOpts { oee: false, ..HeisenbergOpts::with_chi(chi) };
                    let run = evolve_operator(lat, &op, &CircuitSpec::new(-FRAC_PI_2, theta, depth), &ho)?;
                    Some(run.expect_up(depth)?)
                }
                None => None,
            };
            log::info!("echo theta={theta:.4} D={depth}: bptns {bptns:.6} exact {exact:.6}");
            rows.push(EchoRow { theta, depth, bptns, exact, heisenberg });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlitTable {
    pub flux: bool,
    pub source: usize,
    /// `<X_site>` indexed `[depth][site]`, `depth = 0..=d_max`.
    pub exact: Vec<Vec<f64>>,
    pub bptns: Vec<Vec<f64>>,
}

impl SlitTable {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["flux", "depth", "site", "exact", "bptns"]).map_err(|e| Error::Io(e.into()))?;
        let flux = if self.flux { "pi" } else { "0" };
        for (d, (ex, bp)) in self.exact.iter().zip(&self.bptns).enumerate() {
            for (s, (x, y)) in ex.iter().zip(bp).enumerate() {
                w.write_record([
                    flux.to_string(),
                    d.to_string(),
                    s.to_string(),
                    format!("{x:.12}"),
                    format!("{y:.12}"),
                ])
                .map_err(|e| Error::Io(e.into()))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `V = U(-pi/4, pi/2)` with the lattice's flux bond negated when `flux`.
pub fn double_slit_spec(lat: &Lattice, flux: bool) -> Result<CircuitSpec> {
    let bond = if flux {
        Some(lat.flux_bond.ok_or_else(|| Error::InvalidArgument(format!("{} has no flux bond", lat.name)))?)
    } else {
        None
    };
    Ok(CircuitSpec::new(-PI / 4.0, FRAC_PI_2, 1).with_flux(bond))
}

/// `<X_j>` after `V^D Z_source |+...+>` for `D = 0..=d_max`, from the graph
/// state and the dense oracle.
pub fn double_slit_experiment(lat: &Lattice, flux: bool, d_max: usize, opts: &BpRunOpts) -> Result<SlitTable> {
    let source =
        lat.label("source").ok_or_else(|| Error::UnsupportedGeometry(format!("{} has no source label", lat.name)))?;
    let n = lat.site_count;
    let prog = build_program(&double_slit_spec(lat, flux)?, lat, &order_for(lat))?;
    let mut tns = GraphTNS::right(lat, opts.chi)?;
    tns.apply_single(source, &Array2::from_shape_fn((2, 2), |(i, j)| Pauli::Z.matrix()[i][j]))?;
    let profile = |t: &GraphTNS, m: Option<MessageSet>| -> Result<Vec<f64>> {
        let (g, m) = match m {
            Some(m) => (t.clone(), m),
            None => bp_regauge(t, &opts.bp)?,
        };
        (0..n).map(|s| local_expectation(&g, &m, &PauliString::single(n, s, Pauli::X))).collect()
    };
    let mut bptns = vec![profile(&tns, None)?];
    for d in 1..=d_max {
        let t0 = std::time::Instant::now();
        tns.apply_product(&prog.round.steps)?;
        let m = end_round(&mut tns, opts)?;
        bptns.push(profile(&tns, m)?);
        log::debug!("double slit D={d}: max bond {} in {:.1}s", tns.max_bond(), t0.elapsed().as_secs_f64());
    }
    let exact = crate::exact::double_slit_table(lat, source, d_max, flux)?;
    Ok(SlitTable { flux, source, exact, bptns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::StateVector;
    use crate::lattice::{build_single_hexagon_12, build_two_hexagon_21};
    use ndarray_linalg::Inverse;

    fn dense_z(lat: &Lattice, spec: &CircuitSpec) -> Vec<f64> {
        let psi = crate::exact::evolve(&StateVector::up(lat.site_count).unwrap(), lat, spec).unwrap();
        psi.z_profile()
    }

    fn tns_z(tns: &GraphTNS) -> Vec<f64> {
        let (g, m) = bp_regauge(tns, &BpOpts { iters: 50, ..Default::default() }).unwrap();
        let n = tns.site_count();
        (0..n).map(|s| local_expectation(&g, &m, &PauliString::single(n, s, Pauli::Z)).unwrap()).collect()
    }

    #[test]
    fn product_state_basics() {
        let lat = build_single_hexagon_12();
        let tns = GraphTNS::up(&lat, 4).unwrap();
        let (g, m) = bp_regauge(&tns, &BpOpts::default()).unwrap();
        assert_eq!(m.iterations(), 1);
        assert!(m.converged);
        assert_eq!(g.max_bond(), 1);
        assert!((local_expectation(&g, &m, &PauliString::single(12, 3, Pauli::Z)).unwrap() - 1.0).abs() < 1e-14);
        assert!((local_expectation(&g, &m, &PauliString::identity(12)).unwrap() - 1.0).abs() < 1e-14);
        let far = PauliString::from_sparse(12, 0, &[(0, Pauli::Z), (5, Pauli::Z)]);
        assert!(local_expectation(&g, &m, &far).is_err());
    }

    #[test]
    fn zz_on_product_gives_rank_two() {
        let lat = build_single_hexagon_12();
        let mut tns = GraphTNS::right(&lat, 8).unwrap();
        let (a, b) = lat.edges[0];
        tns.apply_gate(a, b, &rzz(-FRAC_PI_2)).unwrap();
        let l = tns.lambda(a, b).unwrap();
        assert_eq!(l.len(), 2);
        assert!((l[0] - l[1]).abs() < 1e-12);
        assert!((l.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_gate_keeps_weights() {
        let lat = build_two_hexagon_21();
        let mut tns = evolve_tns(&lat, &CircuitSpec::new(-FRAC_PI_2, 0.7, 2), &BpRunOpts::with_chi(16)).unwrap();
        let before: Vec<Array1<f64>> = tns.lambdas.clone();
        let z0 = tns_z(&tns);
        for &(a, b) in lat.edges.clone().iter() {
            tns.apply_gate(a, b, &Array2::eye(4)).unwrap();
        }
        for (x, y) in before.iter().zip(&tns.lambdas) {
            assert_eq!(x.len(), y.len());
            assert!((x - y).iter().all(|d| d.abs() < 1e-12));
        }
        let z1 = tns_z(&tns);
        assert!(z0.iter().zip(&z1).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn clifford_round_doubles_flat_rank() {
        let lat = build_two_hexagon_21();
        let opts = BpRunOpts { regauge_each_round: false, ..BpRunOpts::with_chi(64) };
        for depth in 1..=2 {
            let tns = evolve_tns(&lat, &CircuitSpec::new(-FRAC_PI_2, FRAC_PI_2, depth), &opts).unwrap();
            for l in &tns.lambdas {
                assert_eq!(l.len(), 1 << depth, "depth {depth}");
                assert!(l.iter().all(|&x| (x - l[0]).abs() < 1e-10));
            }
        }
    }

    #[test]
    fn exact_on_a_tree() {
        let hex = build_single_hexagon_12();
        let tree = hex.without_edges(&[hex.edges[0]]).unwrap();
        for theta in [0.3, 0.7] {
            let spec = CircuitSpec::new(-FRAC_PI_2, theta, 3);
            let want = dense_z(&tree, &spec);
            let tns = evolve_tns(&tree, &spec, &BpRunOpts::with_chi(64)).unwrap();
            let got = tns_z(&tns);
            for (s, (w, g)) in want.iter().zip(&got).enumerate() {
                assert!((w - g).abs() < 1e-8, "theta {theta} site {s}: {w} vs {g}");
            }
            let (g, m) = bp_regauge(&tns, &BpOpts::default()).unwrap();
            let (a, b) = tree.edges[3];
            let zz = PauliString::from_sparse(12, 0, &[(a, Pauli::Z), (b, Pauli::Z)]);
            let mut psi = StateVector::up(12).unwrap();
            psi.run_program(&build_program(&spec, &tree, &order_for(&tree)).unwrap());
            let want = psi.expect_pauli(&zz).unwrap();
            assert!((local_expectation(&g, &m, &zz).unwrap() - want).abs() < 1e-8);
        }
    }

    #[test]
    fn residuals_settle() {
        let lat = build_two_hexagon_21();
        let tns = evolve_tns(&lat, &CircuitSpec::new(-FRAC_PI_2, 0.7, 3), &BpRunOpts::with_chi(8)).unwrap();
        let m = bp_messages(&tns, &BpOpts { iters: 30, tol: 0.0, damping: 0.0 });
        let r = &m.residuals;
        assert!(r.windows(2).skip(2).all(|w| w[1] <= w[0] * (1.0 + 1e-6) + 1e-12), "{r:?}");
    }

    #[test]
    fn gauge_insertion_is_invisible() {
        let lat = build_two_hexagon_21();
        let mut tns = evolve_tns(&lat, &CircuitSpec::new(-FRAC_PI_2, 0.9, 2), &BpRunOpts::with_chi(8)).unwrap();
        let z0 = tns_z(&tns);
        let (a, b) = lat.edges[5];
        let chi = tns.lambda(a, b).unwrap().len();
        let g = Array2::from_shape_fn((chi, chi), |(i, j)| {
            C64::new(if i == j { 1.5 } else { 0.0 } + 0.1 * ((i * 3 + j) % 5) as f64, 0.05 * (i as f64 - j as f64))
        });
        let gi = g.inv().unwrap();
        tns.insert_gauge(a, b, &g, &gi).unwrap();
        let z1 = tns_z(&tns);
        assert!(z0.iter().zip(&z1).all(|(x, y)| (x - y).abs() < 1e-8), "{z0:?} {z1:?}");
    }

    #[test]
    fn matches_dense_below_loop_length() {
        let lat = build_two_hexagon_21();
        for depth in 1..=3 {
            let spec = CircuitSpec::new(-FRAC_PI_2, 0.7, depth);
            let want = dense_z(&lat, &spec);
            let got = tns_z(&evolve_tns(&lat, &spec, &BpRunOpts::with_chi(1 << depth)).unwrap());
            for (w, g) in want.iter().zip(&got) {
                assert!((w - g).abs() < 1e-8, "D={depth}: {w} vs {g}");
            }
        }
    }

    #[test]
    fn echo_at_clifford_point_is_one() {
        let lat = build_two_hexagon_21();
        let site = lat.label("detector").unwrap();
        for depth in 1..=3 {
            let v = echo_tns(&lat, FRAC_PI_2, depth, site, &BpRunOpts::with_chi(1 << depth), EchoMode::TruncateBoth)
                .unwrap();
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn echo_profile_matches_separate_runs() {
        let lat = build_single_hexagon_12();
        let opts = BpRunOpts::with_chi(4);
        let prof = echo_profile(&lat, 1.1, 3, 2, &opts, EchoMode::TruncateBoth).unwrap();
        for (d, p) in (1..=3).zip(&prof) {
            let v = echo_tns(&lat, 1.1, d, 2, &opts, EchoMode::TruncateBoth).unwrap();
            assert_eq!(v, *p, "D={d}");
        }
    }

    #[test]
    fn echo_matches_dense_short_depth() {
        let lat = build_two_hexagon_21();
        let site = lat.label("detector").unwrap();
        let rows =
            stabilizer_echo_experiment(&lat, site, &[0.7], 3, &BpRunOpts::with_chi(64), EchoMode::TruncateBoth, None)
                .unwrap();
        for r in rows {
            assert!((r.bptns - r.exact).abs() < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn double_slit_is_flux_blind() {
        let lat = build_two_hexagon_21();
        let opts = BpRunOpts::with_chi(16);
        let a = double_slit_experiment(&lat, false, 4, &opts).unwrap();
        let b = double_slit_experiment(&lat, true, 4, &opts).unwrap();
        for (ra, rb) in a.bptns.iter().zip(&b.bptns) {
            assert!(ra.iter().zip(rb).all(|(x, y)| (x - y).abs() < 1e-8));
        }
        let src = a.source;
        assert!((a.bptns[0][src] + 1.0).abs() < 1e-12);
        for d in 0..=4 {
            assert!(a.exact[d].iter().zip(&a.bptns[d]).all(|(x, y)| (x - y).abs() < 1e-6), "D={d}");
        }
    }
}
