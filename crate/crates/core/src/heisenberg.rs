//! Heisenberg-picture evolution of vectorized operators,
//! `O(D) = (U^dag)^D O U^D`, with compression after every two-site gate.
//!
//! Gates that provably act trivially are skipped: a ZZ gate is applied only
//! when one of its sites may carry X or Y content, and an X rotation only on
//! sites where the operator is not the identity. The operator therefore
//! lives on a sub-chain of the sites it can ever reach; every other site is
//! exactly the identity.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array1;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::chain::{angle_key, ChainEvolver};
use crate::circuits::{build_program, conjugation_superop, rx, rzz, CircuitProgram, CircuitSpec, Step, Variant};
use crate::clifford::{conjugate_by_steps, stabilizer, Direction, Pauli, PauliString};
use crate::error::{Error, Result};
use crate::fidelity::FidelityLog;
use crate::lattice::{snake_order, Edge, Lattice, SnakeOrder};
use crate::tt::{contract_product, max_oee, save_checkpoint, CompressionOpts, TensorTrain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeisenbergOpts {
    pub compression: CompressionOpts,
    pub oee: bool,
    pub otoc: bool,
    /// Depths whose operator trains are kept in memory.
    pub keep_depths: Vec<usize>,
    /// Directory receiving a checkpoint file per depth.
    pub spill_dir: Option<PathBuf>,
}

impl Default for HeisenbergOpts {
    fn default() -> Self {
        HeisenbergOpts {
            compression: CompressionOpts::default(),
            oee: true,
            otoc: false,
            keep_depths: Vec::new(),
            spill_dir: None,
        }
    }
}

impl HeisenbergOpts {
    pub fn with_chi(chi: usize) -> Self {
        HeisenbergOpts { compression: CompressionOpts::with_chi(chi), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRecord {
    pub depth: usize,
    pub expectation: f64,
    pub expectation_imag: f64,
    pub max_oee: Option<f64>,
    pub chi: usize,
    pub f_cumulative: f64,
    /// Sites where the operator may differ from the identity.
    pub support: usize,
    pub wall_seconds: f64,
    /// `C(D, x)` for every lattice site.
    pub otoc: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct HeisenbergRun {
    pub observable: PauliString,
    pub spec: CircuitSpec,
    pub chi_max: usize,
    /// Lattice sites of the operator chain, in chain order.
    pub chain: Vec<usize>,
    pub site_count: usize,
    pub operator: TensorTrain,
    pub log: FidelityLog,
    pub records: Vec<DepthRecord>,
    pub checkpoints: BTreeMap<usize, TensorTrain>,
    pub spilled: BTreeMap<usize, PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Content {
    Identity,
    Diagonal,
    General,
}

#[derive(Debug, Default)]
struct StepPlan {
    zz: Vec<(Edge, f64)>,
    rx: Vec<(usize, f64)>,
}

fn plan_step(step: &Step, content: &mut [Content]) -> StepPlan {
    let mut plan = StepPlan::default();
    match step {
        Step::Zz { layer, angles } => {
            for (&(a, b), &t) in layer.bonds.iter().zip(angles) {
                if t != 0.0 && (content[a] == Content::General || content[b] == Content::General) {
                    plan.zz.push(((a, b), t));
                    content[a] = content[a].max(Content::Diagonal);
                    content[b] = content[b].max(Content::Diagonal);
                }
            }
        }
        Step::Rx { angles } => {
            for (s, &t) in angles.iter().enumerate() {
                if t != 0.0 && content[s] != Content::Identity {
                    plan.rx.push((s, t));
                    content[s] = Content::General;
                }
            }
        }
    }
    plan
}

fn initial_content(p: &PauliString) -> Vec<Content> {
    p.letters()
        .iter()
        .map(|l| match l {
            Pauli::I => Content::Identity,
            Pauli::Z => Content::Diagonal,
            _ => Content::General,
        })
        .collect()
}

/// Steps in Heisenberg processing order, grouped by round (index 0 holds
/// the tail).
fn heisenberg_steps(prog: &CircuitProgram) -> Vec<Vec<&Step>> {
    let mut out = vec![prog.tail.iter().collect::<Vec<_>>()];
    for _ in 0..prog.depth {
        out.push(prog.round.steps.iter().collect());
    }
    out
}

fn order_for(lat: &Lattice) -> SnakeOrder {
    snake_order(lat).unwrap_or_else(|_| SnakeOrder::identity(lat.site_count))
}

fn up_boundary(n: usize) -> Vec<Array1<C64>> {
    let v = Array1::from(vec![C64::new(2f64.sqrt(), 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
    vec![v; n]
}

/// `<up...up| O |up...up>` for a vectorized operator train.
pub fn expect_up_train(tt: &TensorTrain) -> Result<C64> {
    contract_product(tt, &up_boundary(tt.len()))
}

/// `Tr(Z_x O^dag Z_x O) / Tr(O^dag O)` at every chain position.
pub fn otoc_profile(tt: &TensorTrain) -> Result<Vec<f64>> {
    let mut t = tt.clone();
    t.canonicalize(0)?;
    let signs = [1.0, -1.0, -1.0, 1.0];
    let mut out = Vec::with_capacity(t.len());
    for p in 0..t.len() {
        t.canonicalize(p)?;
        let a = t.tensor(p);
        let mut num = 0.0;
        let mut den = 0.0;
        for ((_, mu, _), z) in a.indexed_iter() {
            let w = z.norm_sqr();
            num += signs[mu] * w;
            den += w;
        }
        out.push(if den > 0.0 { num / den } else { 1.0 });
    }
    Ok(out)
}

/// Reads a bond-dimension-one train back as a Pauli string on `n` sites.
/// Returns `None` if any site is not a multiple of a single Pauli or the
/// overall coefficient is not a unit phase within `tol`.
pub fn train_as_pauli(tt: &TensorTrain, chain: &[usize], n: usize, tol: f64) -> Option<PauliString> {
    if tt.max_bond() != 1 {
        return None;
    }
    let h = 1.0 / 2f64.sqrt();
    let mut terms = Vec::new();
    let mut coef = C64::new(tt.log_norm.exp(), 0.0);
    for (p, &site) in chain.iter().enumerate() {
        let v: Vec<C64> = tt.tensor(p).iter().copied().collect();
        let mut best = None;
        for q in [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z] {
            let m = q.matrix();
            let basis = [m[0][0] * h, m[0][1] * h, m[1][0] * h, m[1][1] * h];
            let c: C64 = basis.iter().zip(&v).map(|(b, x)| b.conj() * x).sum();
            let resid: f64 = basis.iter().zip(&v).map(|(b, x)| (x - c * b).norm_sqr()).sum();
            if resid.sqrt() <= tol {
                best = Some((q, c));
            }
        }
        let (q, c) = best?;
        coef *= c;
        if q != Pauli::I {
            terms.push((site, q));
        }
    }
    let k = (0..4u8).find(|&k| (crate::clifford::i_pow(k) - coef).norm() <= tol)?;
    Some(PauliString::from_sparse(n, k, &terms))
}

/// Evolves `observable` through `spec` (`spec.depth` rounds after the
/// tail), recording diagnostics after the tail and after every round.
pub fn evolve_operator(
    lat: &Lattice,
    observable: &PauliString,
    spec: &CircuitSpec,
    opts: &HeisenbergOpts,
) -> Result<HeisenbergRun> {
    if observable.len() != lat.site_count {
        return Err(Error::DimensionMismatch("observable size differs from lattice".into()));
    }
    let order = order_for(lat);
    let prog = build_program(spec, lat, &order)?;
    let rounds = heisenberg_steps(&prog);

    let mut content = initial_content(observable);
    let mut plans: Vec<Vec<StepPlan>> = Vec::with_capacity(rounds.len());
    for steps in &rounds {
        plans.push(steps.iter().map(|s| plan_step(s, &mut content)).collect());
    }
    let mut chain_sites: Vec<usize> = (0..lat.site_count).filter(|&s| content[s] != Content::Identity).collect();
    if chain_sites.is_empty() {
        chain_sites.push(order.site(0));
    }
    let chain_sites = ChainEvolver::arrange(chain_sites, &order);
    let init = TensorTrain::product(&observable.vectorized_locals(&chain_sites))?;
    let mut ev = ChainEvolver::new(chain_sites.clone(), &order, init, opts.compression)?;

    let mut support_now = initial_content(observable);
    let mut records = Vec::with_capacity(rounds.len());
    let mut checkpoints = BTreeMap::new();
    let mut spilled = BTreeMap::new();
    if let Some(dir) = &opts.spill_dir {
        std::fs::create_dir_all(dir)?;
    }
    let superop_zz = |k: u64| conjugation_superop(&rzz(f64::from_bits(k)));
    for (r, (steps, plan)) in rounds.iter().zip(&plans).enumerate() {
        let t0 = Instant::now();
        for (step, sp) in steps.iter().zip(plan) {
            if !sp.zz.is_empty() {
                let bonds: Vec<(Edge, u64)> = sp.zz.iter().map(|&(e, t)| (e, angle_key(t))).collect();
                ev.apply_bonds(&bonds, &superop_zz)?;
            }
            for &(s, t) in &sp.rx {
                ev.apply_site(s, &conjugation_superop(&rx(t)))?;
            }
            plan_step(step, &mut support_now);
        }
        if r > 0 {
            ev.log.mark_round();
        }
        let wall = t0.elapsed().as_secs_f64();
        let depth = r;
        let e = expect_up_train(&ev.tt)?;
        let oee = if opts.oee { Some(max_oee(&ev.tt)?) } else { None };
        let otoc = if opts.otoc {
            let prof = otoc_profile(&ev.tt)?;
            let mut full = vec![1.0; lat.site_count];
            for (p, &s) in ev.sites().iter().enumerate() {
                full[s] = prof[p];
            }
            Some(full)
        } else {
            None
        };
        records.push(DepthRecord {
            depth,
            expectation: e.re,
            expectation_imag: e.im,
            max_oee: oee,
            chi: ev.tt.max_bond(),
            f_cumulative: ev.log.f_cumulative(),
            support: support_now.iter().filter(|&&c| c != Content::Identity).count(),
            wall_seconds: wall,
            otoc,
        });
        if opts.keep_depths.contains(&depth) {
            checkpoints.insert(depth, ev.tt.clone());
        }
        if let Some(dir) = &opts.spill_dir {
            let path = dir.join(format!("operator_d{depth:03}.hxtt"));
            save_checkpoint(&ev.tt, &path)?;
            spilled.insert(depth, path);
        }
        log::debug!(
            "heisenberg depth {depth}: <O> = {:.12}, chi = {}, F = {:.6}, {:.2}s",
            e.re,
            ev.tt.max_bond(),
            ev.log.f_cumulative(),
            wall
        );
    }
    Ok(HeisenbergRun {
        observable: observable.clone(),
        spec: spec.clone(),
        chi_max: opts.compression.chi_max,
        chain: ev.sites().to_vec(),
        site_count: lat.site_count,
        operator: ev.tt,
        log: ev.log,
        records,
        checkpoints,
        spilled,
    })
}

impl HeisenbergRun {
    pub fn depth(&self) -> usize {
        self.spec.depth
    }

    pub fn record(&self, depth: usize) -> Result<&DepthRecord> {
        self.records.get(depth).ok_or_else(|| Error::InvalidArgument(format!("no record at depth {depth}")))
    }

    /// `<up...up| O(depth) |up...up>`.
    pub fn expect_up(&self, depth: usize) -> Result<f64> {
        Ok(self.record(depth)?.expectation)
    }

    /// Operator train at `depth`, from memory or a spilled checkpoint.
    pub fn operator_at(&self, depth: usize) -> Result<TensorTrain> {
        if depth == self.depth() {
            return Ok(self.operator.clone());
        }
        if let Some(t) = self.checkpoints.get(&depth) {
            return Ok(t.clone());
        }
        if let Some(p) = self.spilled.get(&depth) {
            return crate::tt::load_checkpoint(p);
        }
        Err(Error::InvalidArgument(format!("no checkpoint at depth {depth}")))
    }

    /// `C(depth, x)`; sites off the operator chain give exactly 1.
    pub fn otoc(&self, depth: usize, x: usize) -> Result<f64> {
        if x >= self.site_count {
            return Err(Error::InvalidArgument(format!("site {x} out of range")));
        }
        if let Some(prof) = &self.record(depth)?.otoc {
            return Ok(prof[x]);
        }
        match self.chain.iter().position(|&s| s == x) {
            None => Ok(1.0),
            Some(p) => Ok(otoc_profile(&self.operator_at(depth)?)?[p]),
        }
    }

    /// The evolved operator as a Pauli string, when it is one.
    pub fn as_pauli(&self, tol: f64) -> Option<PauliString> {
        train_as_pauli(&self.operator, &self.chain, self.site_count, tol)
    }

    pub fn wall_per_round(&self) -> Vec<f64> {
        self.records.iter().skip(1).map(|r| r.wall_seconds).collect()
    }
}

/// The depth-5 stabilizer grown from `site`, e.g. the weight-10 and
/// weight-17 operators from sites 13 and 58 on Eagle.
pub fn weight_operator(lat: &Lattice, site: usize, depth: usize) -> Result<PauliString> {
    stabilizer(lat, site, depth)
}

/// `R_X(pi/2) S_depth R_X(pi/2)^dag`: evolved through `depth` rounds plus a
/// trailing `R_X(theta_h)` it reproduces the depth+1 stabilizer value.
pub fn modified_operator(lat: &Lattice, site: usize, depth: usize) -> Result<PauliString> {
    let s = stabilizer(lat, site, depth)?;
    conjugate_by_steps(&s, &[Step::Rx { angles: vec![FRAC_PI_2; lat.site_count] }], Direction::Forward)
}

/// Value of the modified operator at `theta_h` (`theta_J = -pi/2`).
pub fn modified_weight(
    lat: &Lattice,
    site: usize,
    depth: usize,
    theta_h: f64,
    opts: &HeisenbergOpts,
) -> Result<HeisenbergRun> {
    let op = modified_operator(lat, site, depth)?;
    let spec = CircuitSpec::new(-FRAC_PI_2, theta_h, depth).with_variant(Variant::ExtraFinalRx);
    evolve_operator(lat, &op, &spec, opts)
}

/// Modified weight-17 observable on Eagle: five rounds plus a final `R_X`.
pub fn modified_weight17(lat: &Lattice, theta_h: f64, opts: &HeisenbergOpts) -> Result<f64> {
    let site = lat
        .label("weight17_source")
        .ok_or_else(|| Error::UnsupportedGeometry(format!("{} has no weight17_source label", lat.name)))?;
    modified_weight(lat, site, 5, theta_h, opts)?.expect_up(5)
}

/// `<Z_site>` on `U^dag(theta)^D U(theta_prime)^D |up...up>` at
/// `theta_J = -pi/2`, evolved as a state.
pub fn echo_observable(
    lat: &Lattice,
    theta: f64,
    theta_prime: f64,
    depth: usize,
    site: usize,
    chi_max: usize,
) -> Result<f64> {
    let opts = crate::schrodinger::MpsOpts::with_chi(chi_max).restricted_to(&[site]);
    crate::schrodinger::echo(lat, theta_prime, theta, depth, &opts)?.expect_z(site)
}
