//! Dense statevector simulation for up to 24 qubits. Bit `s` of a basis
//! index is site `s`; `|0> = |up>`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::circuits::{build_program, CircuitProgram, CircuitSpec, Step};
use crate::clifford::{Pauli, PauliString};
use crate::error::{Error, Result};
use crate::lattice::{snake_order, Lattice, SnakeOrder};

pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

const MIN_PAR: usize = 1 << 12;

impl StateVector {
    fn check(n: usize) -> Result<()> {
        if n > MAX_QUBITS {
            return Err(Error::TooLarge { qubits: n, limit: MAX_QUBITS });
        }
        Ok(())
    }

    pub fn up(n: usize) -> Result<Self> {
        Self::check(n)?;
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[0] = C64::new(1.0, 0.0);
        Ok(StateVector { n, amps })
    }

    /// `|+>^n`, the X eigenstate pointing right.
    pub fn right(n: usize) -> Result<Self> {
        Self::check(n)?;
        let a = C64::new((0.5f64).powf(n as f64 / 2.0), 0.0);
        Ok(StateVector { n, amps: vec![a; 1 << n] })
    }

    pub fn from_amps(amps: Vec<C64>) -> Result<Self> {
        let n = amps.len().trailing_zeros() as usize;
        if amps.len() != 1 << n {
            return Err(Error::DimensionMismatch("amplitude count is not a power of two".into()));
        }
        Self::check(n)?;
        Ok(StateVector { n, amps })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn apply_rzz(&mut self, a: usize, b: usize, theta: f64) {
        let same = C64::from_polar(1.0, -theta / 2.0);
        let diff = C64::from_polar(1.0, theta / 2.0);
        let f = |(x, z): (usize, &mut C64)| {
            *z *= if ((x >> a) ^ (x >> b)) & 1 == 0 { same } else { diff };
        };
        if self.amps.len() >= MIN_PAR {
            self.amps.par_iter_mut().enumerate().for_each(f);
        } else {
            self.amps.iter_mut().enumerate().for_each(f);
        }
    }

    pub fn apply_rx(&mut self, s: usize, theta: f64) {
        let c = C64::new((theta / 2.0).cos(), 0.0);
        let is = C64::new(0.0, -(theta / 2.0).sin());
        let bit = 1usize << s;
        let f = |blk: &mut [C64]| {
            let (lo, hi) = blk.split_at_mut(bit);
            for (u, w) in lo.iter_mut().zip(hi.iter_mut()) {
                let (a, b) = (*u, *w);
                *u = c * a + is * b;
                *w = is * a + c * b;
            }
        };
        if self.amps.len() >= MIN_PAR {
            self.amps.par_chunks_mut(2 * bit).for_each(f);
        } else {
            self.amps.chunks_mut(2 * bit).for_each(f);
        }
    }

    pub fn apply_pauli(&mut self, p: &PauliString) {
        let mut out = vec![C64::new(0.0, 0.0); self.amps.len()];
        for (x, &a) in self.amps.iter().enumerate() {
            if a != C64::new(0.0, 0.0) {
                let (y, c) = p.apply_to_basis(x);
                out[y] += c * a;
            }
        }
        self.amps = out;
    }

    fn apply_step(&mut self, st: &Step) {
        match st {
            Step::Zz { layer, angles } => {
                for (&(a, b), &t) in layer.bonds.iter().zip(angles) {
                    if t != 0.0 {
                        self.apply_rzz(a, b, t);
                    }
                }
            }
            Step::Rx { angles } => {
                for (s, &t) in angles.iter().enumerate() {
                    if t != 0.0 {
                        self.apply_rx(s, t);
                    }
                }
            }
        }
    }

    /// Applies the operator product `steps` (last step first).
    pub fn apply_product(&mut self, steps: &[Step]) {
        for st in steps.iter().rev() {
            self.apply_step(st);
        }
    }

    /// Applies the adjoint of the operator product `steps`.
    pub fn apply_product_dagger(&mut self, steps: &[Step]) {
        for st in steps {
            self.apply_step(&st.dagger());
        }
    }

    /// `tail * round^depth`.
    pub fn run_program(&mut self, prog: &CircuitProgram) {
        for _ in 0..prog.depth {
            self.apply_product(&prog.round.steps);
        }
        self.apply_product(&prog.tail);
    }

    /// Adjoint of [`run_program`](Self::run_program).
    pub fn run_program_dagger(&mut self, prog: &CircuitProgram) {
        self.apply_product_dagger(&prog.tail);
        for _ in 0..prog.depth {
            self.apply_product_dagger(&prog.round.steps);
        }
    }

    pub fn expect_pauli_complex(&self, p: &PauliString) -> C64 {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() > 0.0)
            .map(|(x, &a)| {
                let (y, c) = p.apply_to_basis(x);
                self.amps[y].conj() * c * a
            })
            .sum()
    }

    /// `<psi|P|psi>` for Hermitian `P`.
    pub fn expect_pauli(&self, p: &PauliString) -> Result<f64> {
        if !p.is_hermitian() {
            return Err(Error::InvalidArgument("expectation of a non-Hermitian string".into()));
        }
        Ok(self.expect_pauli_complex(p).re)
    }

    /// `<Z_s>` for every site.
    pub fn z_profile(&self) -> Vec<f64> {
        (0..self.n)
            .map(|s| {
                self.amps
                    .iter()
                    .enumerate()
                    .map(|(x, a)| if (x >> s) & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
                    .sum()
            })
            .collect()
    }

    /// `<X_s>` for every site.
    pub fn x_profile(&self) -> Vec<f64> {
        (0..self.n)
            .map(|s| {
                let bit = 1 << s;
                2.0 * self
                    .amps
                    .iter()
                    .enumerate()
                    .filter(|(x, _)| x & bit == 0)
                    .map(|(x, a)| (a.conj() * self.amps[x | bit]).re)
                    .sum::<f64>()
            })
            .collect()
    }
}

fn order_for(lat: &Lattice) -> SnakeOrder {
    snake_order(lat).unwrap_or_else(|_| SnakeOrder::identity(lat.site_count))
}

/// `U^depth |psi>` for the circuit in `spec`.
pub fn evolve(psi: &StateVector, lat: &Lattice, spec: &CircuitSpec) -> Result<StateVector> {
    if psi.n != lat.site_count {
        return Err(Error::DimensionMismatch("state size differs from lattice".into()));
    }
    let prog = build_program(spec, lat, &order_for(lat))?;
    let mut out = psi.clone();
    out.run_program(&prog);
    Ok(out)
}

/// `<Z_site>` after `spec.depth` rounds from `|up...up>`.
pub fn z_expectation(lat: &Lattice, spec: &CircuitSpec, site: usize) -> Result<f64> {
    let psi = evolve(&StateVector::up(lat.site_count)?, lat, spec)?;
    psi.expect_pauli(&PauliString::single(lat.site_count, site, Pauli::Z))
}

/// `<Z_site>` on `U^dag(theta_back)^D U(theta)^D |up...up>` at
/// `theta_J = -pi/2`.
pub fn forward_backward_z(lat: &Lattice, theta: f64, theta_back: f64, depth: usize, site: usize) -> Result<f64> {
    let order = order_for(lat);
    let jz = -std::f64::consts::FRAC_PI_2;
    let fwd = build_program(&CircuitSpec::new(jz, theta, depth), lat, &order)?;
    let bwd = build_program(&CircuitSpec::new(jz, theta_back, depth), lat, &order)?;
    let mut psi = StateVector::up(lat.site_count)?;
    psi.run_program(&fwd);
    psi.run_program_dagger(&bwd);
    psi.expect_pauli(&PauliString::single(lat.site_count, site, Pauli::Z))
}

fn double_slit_spec(lat: &Lattice, depth: usize, flux: bool) -> Result<CircuitSpec> {
    let bond = if flux {
        Some(lat.flux_bond.ok_or_else(|| Error::InvalidArgument(format!("{} has no flux bond", lat.name)))?)
    } else {
        None
    };
    Ok(CircuitSpec::new(-std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2, depth).with_flux(bond))
}

/// `<X_j>` on every site after `V^D Z_i |+...+>`, for `D = 0..=d_max`, with
/// `V = U(-pi/4, pi/2)`. `flux` negates the lattice's flux bond.
pub fn double_slit_table(lat: &Lattice, source: usize, d_max: usize, flux: bool) -> Result<Vec<Vec<f64>>> {
    let n = lat.site_count;
    let prog = build_program(&double_slit_spec(lat, 1, flux)?, lat, &order_for(lat))?;
    let mut psi = StateVector::right(n)?;
    psi.apply_pauli(&PauliString::single(n, source, Pauli::Z));
    let mut rows = vec![psi.x_profile()];
    for _ in 0..d_max {
        psi.apply_product(&prog.round.steps);
        rows.push(psi.x_profile());
    }
    Ok(rows)
}

/// `C_ij(D) = <+| Z_i V^{dag D} X_j V^D Z_i |+>`.
pub fn double_slit(lat: &Lattice, i: usize, j: usize, depth: usize, flux: bool) -> Result<f64> {
    Ok(double_slit_table(lat, i, depth, flux)?[depth][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::stabilizer;
    use crate::lattice::{build_single_hexagon_12, build_two_hexagon_21};
    use std::f64::consts::PI;

    #[test]
    fn identity_circuit() {
        let lat = build_single_hexagon_12();
        let psi = StateVector::right(12).unwrap();
        let out = evolve(&psi, &lat, &CircuitSpec::new(0.0, 0.0, 3)).unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn simple_expectations() {
        let psi = StateVector::up(5).unwrap();
        assert_eq!(psi.expect_pauli(&PauliString::single(5, 2, Pauli::Z)).unwrap(), 1.0);
        assert_eq!(psi.expect_pauli(&PauliString::single(5, 2, Pauli::X)).unwrap(), 0.0);
        assert!(psi.expect_pauli(&PauliString::identity(5).scaled(1)).is_err());
        assert!(StateVector::up(25).is_err());
    }

    #[test]
    fn clifford_stabilizer_is_one() {
        let lat = build_two_hexagon_21();
        for d in 0..4 {
            let s = stabilizer(&lat, 6, d).unwrap();
            let psi = evolve(&StateVector::up(21).unwrap(), &lat, &CircuitSpec::new(-PI / 2.0, PI / 2.0, d)).unwrap();
            assert!((psi.expect_pauli(&s).unwrap() - 1.0).abs() < 1e-12);
            assert!((psi.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn clifford_closed_form_heisenberg() {
        use crate::clifford::{conjugate_circuit, Direction};
        let lat = build_single_hexagon_12();
        let order = order_for(&lat);
        for th in [0.0, PI / 2.0] {
            let spec = CircuitSpec::new(-PI / 2.0, th, 3);
            let prog = build_program(&spec, &lat, &order).unwrap();
            for site in [0, 5] {
                let z = PauliString::single(12, site, Pauli::Z);
                let h = conjugate_circuit(&z, &prog, Direction::Heisenberg).unwrap();
                let exact = z_expectation(&lat, &spec, site).unwrap();
                assert!((exact - h.expect_up().re).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn echo_cancels() {
        let lat = build_single_hexagon_12();
        assert!((forward_backward_z(&lat, 0.7, 0.7, 3, 4).unwrap() - 1.0).abs() < 1e-12);
        assert!((forward_backward_z(&lat, PI / 2.0, PI / 2.0, 5, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn double_slit_initial_values() {
        let lat = build_two_hexagon_21();
        assert!((double_slit(&lat, 0, 6, 0, false).unwrap() - 1.0).abs() < 1e-12);
        assert!((double_slit(&lat, 0, 0, 0, false).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn snake_order_independent() {
        // same ring, chain starting at site 3
        let lat = build_single_hexagon_12();
        let spec = CircuitSpec::new(-0.4, 0.9, 3);
        let psi = evolve(&StateVector::up(12).unwrap(), &lat, &spec).unwrap();
        let g = r#"{"sites":12,"edges":[[3,4],[4,5],[5,6],[6,7],[7,8],[8,9],[9,10],[10,11],[11,0],[0,1],[1,2],[2,3]],"snake_order":[3,4,5,6,7,8,9,10,11,0,1,2]}"#;
        let lat2 = Lattice::from_json_str(g).unwrap();
        let psi2 = evolve(&StateVector::up(12).unwrap(), &lat2, &spec).unwrap();
        let a = psi.expect_pauli(&PauliString::from_sparse(12, 0, &[(1, Pauli::Z), (2, Pauli::X)])).unwrap();
        let b = psi2.expect_pauli(&PauliString::from_sparse(12, 0, &[(1, Pauli::Z), (2, Pauli::X)])).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn random_pauli_values_bounded() {
        let lat = build_single_hexagon_12();
        let psi = evolve(&StateVector::right(12).unwrap(), &lat, &CircuitSpec::new(0.3, 1.1, 2)).unwrap();
        let p = PauliString::from_sparse(12, 2, &[(0, Pauli::Y), (4, Pauli::X), (7, Pauli::Z)]);
        let v = psi.expect_pauli(&p).unwrap();
        assert!(v.abs() <= 1.0 + 1e-12);
        assert!(psi.expect_pauli_complex(&p).im.abs() < 1e-10);
    }
}
