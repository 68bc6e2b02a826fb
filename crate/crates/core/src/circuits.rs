//! Kicked-Ising circuits: one round is `U = R_ZZ(theta_J) R_X(theta_h)` with
//! `R_ZZ(t) = exp(-i t ZZ/2)` on every bond and `R_X(t) = exp(-i t X/2)` on
//! every site. `R_X` acts on the state first.
//!
//! Programs list steps in operator-product order: the first step is the
//! leftmost factor, so a state sees the steps back to front and Heisenberg
//! conjugation `O -> U^dag O U` processes them front to back.

use ndarray::{array, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{layer_bonds, norm_edge, Edge, GateLayer, Lattice, SnakeOrder};
use crate::tt::{CompiledLayer, SpanGate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Standard,
    /// A full `R_X` layer after every bond group.
    NonCommuting,
    /// One extra `R_X` layer at the very end of the circuit.
    ExtraFinalRx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub theta_j: f64,
    pub theta_h: f64,
    pub depth: usize,
    #[serde(default)]
    pub variant: Variant,
    /// Bond whose ZZ angle is negated.
    #[serde(default)]
    pub flux_bond: Option<Edge>,
}

impl CircuitSpec {
    pub fn new(theta_j: f64, theta_h: f64, depth: usize) -> Self {
        CircuitSpec { theta_j, theta_h, depth, variant: Variant::Standard, flux_bond: None }
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        self.variant = v;
        self
    }

    pub fn with_flux(mut self, bond: Option<Edge>) -> Self {
        self.flux_bond = bond.map(|(a, b)| norm_edge(a, b));
        self
    }

    pub fn validate(&self, lat: &Lattice) -> Result<()> {
        if !self.theta_j.is_finite() || !self.theta_h.is_finite() {
            return Err(Error::InvalidArgument("angles must be finite".into()));
        }
        if let Some((a, b)) = self.flux_bond {
            if !lat.has_edge(a, b) {
                return Err(Error::InvalidArgument(format!("flux bond ({a},{b}) is not an edge")));
            }
        }
        Ok(())
    }

    fn bond_angle(&self, e: Edge) -> f64 {
        if self.flux_bond == Some(e) {
            -self.theta_j
        } else {
            self.theta_j
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Step {
    Zz {
        layer: GateLayer,
        angles: Vec<f64>,
    },
    /// Per-site angles, indexed by site.
    Rx {
        angles: Vec<f64>,
    },
}

impl Step {
    pub fn dagger(&self) -> Step {
        match self {
            Step::Zz { layer, angles } => {
                Step::Zz { layer: layer.clone(), angles: angles.iter().map(|t| -t).collect() }
            }
            Step::Rx { angles } => Step::Rx { angles: angles.iter().map(|t| -t).collect() },
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Step::Zz { angles, .. } | Step::Rx { angles } => angles.iter().all(|&t| t == 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundProgram {
    pub steps: Vec<Step>,
}

impl RoundProgram {
    pub fn zz_count(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, Step::Zz { .. })).count()
    }

    pub fn rx_count(&self) -> usize {
        self.steps.len() - self.zz_count()
    }
}

/// A full circuit: `tail * round^depth` in operator-product order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitProgram {
    pub round: RoundProgram,
    pub depth: usize,
    pub tail: Vec<Step>,
}

fn rx_step(n: usize, theta_h: f64) -> Step {
    Step::Rx { angles: vec![theta_h; n] }
}

/// One round for the given layers. Standard: every ZZ layer, then `R_X`.
/// Non-commuting: `R_X` after the layers of each bond group.
pub fn build_round(spec: &CircuitSpec, layers: &[GateLayer], site_count: usize) -> RoundProgram {
    let zz =
        |l: &GateLayer| Step::Zz { layer: l.clone(), angles: l.bonds.iter().map(|&e| spec.bond_angle(e)).collect() };
    let mut steps = Vec::new();
    match spec.variant {
        Variant::Standard | Variant::ExtraFinalRx => {
            steps.extend(layers.iter().map(zz));
            steps.push(rx_step(site_count, spec.theta_h));
        }
        Variant::NonCommuting => {
            let mut k = 0;
            while k < layers.len() {
                let g = layers[k].group;
                while k < layers.len() && layers[k].group == g {
                    steps.push(zz(&layers[k]));
                    k += 1;
                }
                steps.push(rx_step(site_count, spec.theta_h));
            }
        }
    }
    RoundProgram { steps }
}

pub fn build_program(spec: &CircuitSpec, lat: &Lattice, order: &SnakeOrder) -> Result<CircuitProgram> {
    spec.validate(lat)?;
    let layers = layer_bonds(lat, order);
    let round = build_round(spec, &layers, lat.site_count);
    let tail = match spec.variant {
        Variant::ExtraFinalRx => vec![rx_step(lat.site_count, spec.theta_h)],
        _ => Vec::new(),
    };
    Ok(CircuitProgram { round, depth: spec.depth, tail })
}

/// `exp(-i t ZZ/2)` as a 4x4 diagonal matrix on `(s_a, s_b)`.
pub fn rzz(theta: f64) -> Array2<C64> {
    let p = C64::from_polar(1.0, -theta / 2.0);
    let m = C64::from_polar(1.0, theta / 2.0);
    Array2::from_diag(&ndarray::arr1(&[p, m, m, p]))
}

/// `exp(-i t X/2)`.
pub fn rx(theta: f64) -> Array2<C64> {
    let c = C64::new((theta / 2.0).cos(), 0.0);
    let s = C64::new(0.0, -(theta / 2.0).sin());
    array![[c, s], [s, c]]
}

/// Superoperator of `O -> G^dag O G` on a vectorized operator whose per-site
/// index is `2 * ket + bra`. `g` acts on `m` sites (dimension `2^m`).
pub fn conjugation_superop(g: &Array2<C64>) -> Array2<C64> {
    let dim = g.nrows();
    let m = dim.trailing_zeros() as usize;
    // fused index of (ket, bra) multi-site pair with per-site interleaving
    let fuse = |k: usize, b: usize| -> usize {
        let mut mu = 0;
        for site in 0..m {
            let sh = m - 1 - site;
            mu = mu * 4 + 2 * ((k >> sh) & 1) + ((b >> sh) & 1);
        }
        mu
    };
    let mut s = Array2::zeros((dim * dim, dim * dim));
    for k in 0..dim {
        for kp in 0..dim {
            let gk = g[[k, kp]].conj();
            if gk == C64::new(0.0, 0.0) {
                continue;
            }
            for b in 0..dim {
                for bp in 0..dim {
                    s[[fuse(kp, bp), fuse(k, b)]] += gk * g[[b, bp]];
                }
            }
        }
    }
    s
}

/// ZZ layer as an operator train on a chain of `chain_len` positions.
/// `doubled` selects the conjugation superoperator on vectorized operators.
pub fn compile_zz_layer(layer: &GateLayer, chain_len: usize, angles: &[f64], doubled: bool) -> Result<CompiledLayer> {
    layer.check_disjoint()?;
    if angles.len() != layer.bonds.len() {
        return Err(Error::DimensionMismatch("one angle per bond required".into()));
    }
    let d = if doubled { 4 } else { 2 };
    let mut gates = Vec::with_capacity(layer.spans.len());
    for (&(l, r), &t) in layer.spans.iter().zip(angles) {
        let g = rzz(t);
        let g = if doubled { conjugation_superop(&g) } else { g };
        gates.push(SpanGate::from_two_site(l, r, g.view())?);
    }
    CompiledLayer::from_span_gates(chain_len, d, &gates)
}

/// Uniform-angle convenience wrapper over [`compile_zz_layer`].
pub fn compile_zz_layer_uniform(
    layer: &GateLayer,
    chain_len: usize,
    theta_j: f64,
    doubled: bool,
) -> Result<CompiledLayer> {
    compile_zz_layer(layer, chain_len, &vec![theta_j; layer.bonds.len()], doubled)
}

/// Single-qubit rotation layer on `n` chain positions. `site_signs` flips
/// the angle per position.
pub fn compile_rx_layer(theta_h: f64, n: usize, doubled: bool, site_signs: Option<&[i8]>) -> Result<CompiledLayer> {
    if let Some(s) = site_signs {
        if s.len() != n {
            return Err(Error::DimensionMismatch("one sign per site required".into()));
        }
    }
    let ops: Vec<Array2<C64>> = (0..n)
        .map(|i| {
            let sign = site_signs.map_or(1.0, |s| s[i] as f64);
            let g = rx(sign * theta_h);
            if doubled {
                conjugation_superop(&g)
            } else {
                g
            }
        })
        .collect();
    CompiledLayer::from_single_site(&ops)
}

/// `(-1)^{deg}` per chain position.
pub fn nn_parity_signs(lat: &Lattice, order: &SnakeOrder) -> Vec<i8> {
    (0..lat.site_count).map(|p| if lat.degree(order.site(p)).is_multiple_of(2) { 1 } else { -1 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_eagle_127, build_single_hexagon_12, build_two_hexagon_21, snake_order};
    use std::f64::consts::PI;

    fn svd_rank(m: &Array2<C64>) -> usize {
        let (_, s, _) = crate::linalg::svd(m.view()).unwrap();
        s.iter().filter(|&&x| x > 1e-12 * s[0]).count()
    }

    fn reshuffle(g: &Array2<C64>, d: usize) -> Array2<C64> {
        Array2::from_shape_fn((d * d, d * d), |(r, c)| {
            let (ol, il) = (r / d, r % d);
            let (or, ir) = (c / d, c % d);
            g[[ol * d + or, il * d + ir]]
        })
    }

    #[test]
    fn gate_schmidt_ranks() {
        let g = rzz(0.7);
        assert_eq!(svd_rank(&reshuffle(&g, 2)), 2);
        assert_eq!(svd_rank(&reshuffle(&conjugation_superop(&g), 4)), 4);
        let lay = GateLayer { bonds: vec![(0, 1)], spans: vec![(0, 1)], group: 0 };
        assert_eq!(compile_zz_layer_uniform(&lay, 3, 0.0, true).unwrap().max_bond(), 1);
        assert_eq!(compile_zz_layer_uniform(&lay, 3, 0.7, false).unwrap().max_bond(), 2);
        assert_eq!(compile_zz_layer_uniform(&lay, 3, 0.7, true).unwrap().max_bond(), 4);
    }

    #[test]
    fn rx_pi_is_minus_i_x() {
        let m = rx(PI);
        assert!((m[[0, 1]] - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert!(m[[0, 0]].norm() < 1e-15);
        let id = compile_rx_layer(0.0, 3, true, None).unwrap().to_dense();
        assert!((id - Array2::<C64>::eye(64)).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn round_structure() {
        let lat = build_eagle_127();
        let order = snake_order(&lat).unwrap();
        let p = build_program(&CircuitSpec::new(-PI / 2.0, 0.0, 3), &lat, &order).unwrap();
        assert_eq!(p.round.zz_count(), 13);
        assert_eq!(p.round.rx_count(), 1);
        assert!(p.round.steps.last().unwrap().is_identity());
        assert!(p.tail.is_empty());
        let nc = build_program(&CircuitSpec::new(-PI / 2.0, 0.3, 3).with_variant(Variant::NonCommuting), &lat, &order)
            .unwrap();
        assert_eq!(nc.round.rx_count(), 3);
        let ex = build_program(&CircuitSpec::new(-PI / 2.0, 0.3, 3).with_variant(Variant::ExtraFinalRx), &lat, &order)
            .unwrap();
        assert_eq!(ex.tail.len(), 1);
    }

    #[test]
    fn flux_negates_one_bond() {
        let lat = build_two_hexagon_21();
        let order = snake_order(&lat).unwrap();
        let spec = CircuitSpec::new(-PI / 4.0, PI / 2.0, 1).with_flux(Some((1, 0)));
        let p = build_program(&spec, &lat, &order).unwrap();
        let mut negated = 0;
        for st in &p.round.steps {
            if let Step::Zz { layer, angles } = st {
                for (e, t) in layer.bonds.iter().zip(angles) {
                    if *t > 0.0 {
                        negated += 1;
                        assert_eq!(*e, (0, 1));
                    }
                }
            }
        }
        assert_eq!(negated, 1);
        assert!(build_program(&CircuitSpec::new(0.1, 0.1, 1).with_flux(Some((0, 5))), &lat, &order).is_err());
    }

    fn dense_apply_rzz(v: &mut [C64], n: usize, a: usize, b: usize, t: f64) {
        for (x, amp) in v.iter_mut().enumerate() {
            let za = 1 - 2 * ((x >> (n - 1 - a)) & 1) as i32;
            let zb = 1 - 2 * ((x >> (n - 1 - b)) & 1) as i32;
            *amp *= C64::from_polar(1.0, -t * (za * zb) as f64 / 2.0);
        }
    }

    fn dense_apply_rx(v: &mut [C64], n: usize, p: usize, t: f64) {
        let m = rx(t);
        let bit = 1 << (n - 1 - p);
        for x in 0..v.len() {
            if x & bit == 0 {
                let (u, w) = (v[x], v[x | bit]);
                v[x] = m[[0, 0]] * u + m[[0, 1]] * w;
                v[x | bit] = m[[1, 0]] * u + m[[1, 1]] * w;
            }
        }
    }

    #[test]
    fn round_matches_dense_and_layers_commute() {
        let lat = build_single_hexagon_12();
        let order = snake_order(&lat).unwrap();
        let n = 12;
        let layers = layer_bonds(&lat, &order);
        let (tj, th) = (0.43, 0.91);
        let psi = crate::tt::testutil::random_tt(n, 2, 3, 17);
        // R_ZZ R_X applied to psi, R_X first
        let mut want = psi.to_dense().to_vec();
        for p in 0..n {
            dense_apply_rx(&mut want, n, p, th);
        }
        for &(a, b) in &lat.edges {
            dense_apply_rzz(&mut want, n, order.position(a), order.position(b), tj);
        }
        let mut got = psi.clone();
        got.apply_layer(&compile_rx_layer(th, n, false, None).unwrap()).unwrap();
        for l in layers.iter().rev() {
            got.apply_layer(&compile_zz_layer_uniform(l, n, tj, false).unwrap()).unwrap();
        }
        let got = got.to_dense();
        assert!(got.iter().zip(&want).all(|(x, y)| (x - y).norm() < 1e-12));
        let l0 = compile_zz_layer_uniform(&layers[0], n, tj, false).unwrap();
        let l1 = compile_zz_layer_uniform(&layers[1], n, 0.8, false).unwrap();
        let mut a = psi.clone();
        a.apply_layer(&l0).unwrap();
        a.apply_layer(&l1).unwrap();
        let mut b = psi.clone();
        b.apply_layer(&l1).unwrap();
        b.apply_layer(&l0).unwrap();
        assert!(a.to_dense().iter().zip(&b.to_dense()).all(|(x, y)| (x - y).norm() < 1e-12));
    }

    #[test]
    fn doubled_layers_are_unital() {
        let lat = build_two_hexagon_21();
        let order = snake_order(&lat).unwrap();
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let v = ndarray::arr1(&[one, zero, zero, one]);
        let id = crate::tt::TensorTrain::product(&vec![v; 21]).unwrap();
        let mut ev = id.clone();
        for l in layer_bonds(&lat, &order) {
            ev.apply_layer(&compile_zz_layer_uniform(&l, 21, 1.1, true).unwrap()).unwrap();
        }
        ev.apply_layer(&compile_rx_layer(0.37, 21, true, None).unwrap()).unwrap();
        let nn = crate::tt::overlap(&id, &id).unwrap();
        let diff = crate::tt::overlap(&ev, &ev).unwrap() - 2.0 * crate::tt::overlap(&id, &ev).unwrap().re + nn;
        assert!(diff.norm() < 1e-9 * nn.norm());
    }

    #[test]
    fn parity_signs_trivial_on_ring() {
        let lat = build_single_hexagon_12();
        let order = snake_order(&lat).unwrap();
        let signs = nn_parity_signs(&lat, &order);
        let a = compile_rx_layer(0.7, 12, true, Some(&signs)).unwrap();
        let b = compile_rx_layer(0.7, 12, true, None).unwrap();
        assert_eq!(a, b);
    }
}
