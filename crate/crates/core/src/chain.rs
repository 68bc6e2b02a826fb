//! Gate-by-gate evolution of a tensor train on a sub-chain of lattice
//! sites, with window compression after every two-site gate.

use std::collections::HashMap;

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fidelity::FidelityLog;
use crate::lattice::{Edge, SnakeOrder};
use crate::tt::{CompressionOpts, SpanGate, TensorTrain};

pub struct ChainEvolver {
    sites: Vec<usize>,
    pos: HashMap<usize, usize>,
    pub tt: TensorTrain,
    pub opts: CompressionOpts,
    pub log: FidelityLog,
    cache: HashMap<u64, SpanGate>,
    rightward: bool,
}

impl ChainEvolver {
    /// `sites` in any order; they are arranged by snake position. `tt`
    /// must already follow that arrangement.
    pub fn new(mut sites: Vec<usize>, order: &SnakeOrder, tt: TensorTrain, opts: CompressionOpts) -> Result<Self> {
        opts.validate()?;
        sites.sort_by_key(|&s| order.position(s));
        sites.dedup();
        if sites.len() != tt.len() {
            return Err(Error::DimensionMismatch(format!("{} sites for a train of {}", sites.len(), tt.len())));
        }
        let pos = sites.iter().enumerate().map(|(p, &s)| (s, p)).collect();
        let mut tt = tt;
        if tt.center().is_none() {
            tt.canonicalize(0)?;
        }
        Ok(ChainEvolver { sites, pos, tt, opts, log: FidelityLog::new(), cache: HashMap::new(), rightward: true })
    }

    /// Sites sorted by snake position.
    pub fn arrange(mut sites: Vec<usize>, order: &SnakeOrder) -> Vec<usize> {
        sites.sort_by_key(|&s| order.position(s));
        sites.dedup();
        sites
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn position(&self, site: usize) -> Option<usize> {
        self.pos.get(&site).copied()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.pos.contains_key(&site)
    }

    fn template(&mut self, key: u64, make: &dyn Fn() -> Array2<C64>) -> Result<SpanGate> {
        if let Some(g) = self.cache.get(&key) {
            return Ok(g.clone());
        }
        let g = SpanGate::from_two_site(0, 1, make().view())?;
        self.cache.insert(key, g.clone());
        Ok(g)
    }

    /// Applies a symmetric two-site gate to each bond, in an order that
    /// alternates sweep direction between calls. `key` identifies the gate
    /// matrix for caching; `make` builds it.
    pub fn apply_bonds(&mut self, bonds: &[(Edge, u64)], make: &dyn Fn(u64) -> Array2<C64>) -> Result<()> {
        let mut items = Vec::with_capacity(bonds.len());
        for &((a, b), key) in bonds {
            let (pa, pb) = match (self.position(a), self.position(b)) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(Error::InvalidArgument(format!("bond ({a},{b}) leaves the active chain"))),
            };
            items.push((pa.min(pb), pa.max(pb), key));
        }
        items.sort_unstable();
        if !self.rightward {
            items.reverse();
        }
        self.rightward = !self.rightward;
        for (l, r, key) in items {
            let mut g = self.template(key, &|| make(key))?;
            g.left = l;
            g.right = r;
            let c = self.tt.center().unwrap_or(l).clamp(l, r);
            self.tt.canonicalize(c)?;
            self.tt.apply_span_gate(&g)?;
            let ev = self.tt.compress_window(l, r, &self.opts)?;
            self.log.push(&ev);
        }
        Ok(())
    }

    /// Applies a unitary single-site matrix.
    pub fn apply_site(&mut self, site: usize, m: &Array2<C64>) -> Result<()> {
        let p = self.position(site).ok_or_else(|| Error::InvalidArgument(format!("site {site} not on the chain")))?;
        self.tt.apply_single(p, m.view(), true)
    }
}

/// Cache key for a rotation angle.
pub fn angle_key(theta: f64) -> u64 {
    theta.to_bits()
}
