//! Exact Pauli-string evolution at Clifford angles, with phases tracked as
//! powers of `i`.
//!
//! Conjugation rule for `G` a Pauli string and `U = exp(-i a G)`:
//! `U P U^dag = P` if `P` commutes with `G`, otherwise
//! `P (cos 2a + i sin 2a G)`. With `2a = k pi/2` this is
//! `P, iPG, -P, -iPG` for `k = 0, 1, 2, 3`.
//!
//! Single-site table for `R_X(pi/2)` in the forward direction:
//! `Z -> -Y`, `Y -> Z`, `X -> X`.

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::circuits::{CircuitProgram, Step};
use crate::error::{Error, Result};
use crate::lattice::Lattice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    /// `a * b = i^k c`.
    pub fn product(self, b: Pauli) -> (u8, Pauli) {
        use Pauli::*;
        match (self, b) {
            (I, p) | (p, I) => (0, p),
            (X, X) | (Y, Y) | (Z, Z) => (0, I),
            (X, Y) => (1, Z),
            (Y, Z) => (1, X),
            (Z, X) => (1, Y),
            (Y, X) => (3, Z),
            (Z, Y) => (3, X),
            (X, Z) => (3, Y),
        }
    }

    pub fn anticommutes(self, b: Pauli) -> bool {
        self != Pauli::I && b != Pauli::I && self != b
    }

    /// `(bit flip, phase exponent for bit 0, for bit 1)` of the action on
    /// computational basis states.
    fn basis_action(self) -> (bool, [u8; 2]) {
        match self {
            Pauli::I => (false, [0, 0]),
            Pauli::X => (true, [0, 0]),
            Pauli::Y => (true, [1, 3]),
            Pauli::Z => (false, [0, 2]),
        }
    }

    fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    /// Matrix entries `m[k][b]`.
    pub fn matrix(self) -> [[C64; 2]; 2] {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => [[l, o], [o, l]],
            Pauli::X => [[o, l], [l, o]],
            Pauli::Y => [[o, -i], [i, o]],
            Pauli::Z => [[l, o], [o, -l]],
        }
    }
}

/// `i^phase` times a tensor product of single-site Paulis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    phase: u8,
    letters: Vec<Pauli>,
}

pub fn i_pow(k: u8) -> C64 {
    match k % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        PauliString { phase: 0, letters: vec![Pauli::I; n] }
    }

    pub fn single(n: usize, site: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.letters[site] = p;
        s
    }

    pub fn from_sparse(n: usize, phase: u8, terms: &[(usize, Pauli)]) -> Self {
        let mut s = Self::identity(n);
        s.phase = phase % 4;
        for &(site, p) in terms {
            s.letters[site] = p;
        }
        s
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Exponent `k` of the `i^k` prefactor.
    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn coefficient(&self) -> C64 {
        i_pow(self.phase)
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn letter(&self, site: usize) -> Pauli {
        self.letters[site]
    }

    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&p| p != Pauli::I).count()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.letters[i] != Pauli::I).collect()
    }

    /// Counts of `(X, Y, Z)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |p| self.letters.iter().filter(|&&q| q == p).count();
        (c(Pauli::X), c(Pauli::Y), c(Pauli::Z))
    }

    pub fn is_hermitian(&self) -> bool {
        self.phase.is_multiple_of(2)
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        self.letters.iter().zip(&other.letters).filter(|(a, b)| a.anticommutes(**b)).count() % 2 == 0
    }

    pub fn mul(&self, other: &PauliString) -> Result<PauliString> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch("Pauli strings of different length".into()));
        }
        let mut phase = self.phase + other.phase;
        let letters = self
            .letters
            .iter()
            .zip(&other.letters)
            .map(|(a, b)| {
                let (k, c) = a.product(*b);
                phase += k;
                c
            })
            .collect();
        Ok(PauliString { phase: phase % 4, letters })
    }

    pub fn pow(&self, n: u32) -> PauliString {
        let mut acc = PauliString::identity(self.len());
        for _ in 0..n {
            acc = acc.mul(self).unwrap();
        }
        acc
    }

    pub fn scaled(mut self, k: u8) -> Self {
        self.phase = (self.phase + k) % 4;
        self
    }

    /// Right-multiplies by a sparse Pauli product `i^k prod p_s`.
    fn mul_sparse_right(&mut self, k: u8, terms: &[(usize, Pauli)]) {
        let mut phase = self.phase + k;
        for &(s, p) in terms {
            let (e, c) = self.letters[s].product(p);
            phase += e;
            self.letters[s] = c;
        }
        self.phase = phase % 4;
    }

    fn anticommutes_sparse(&self, terms: &[(usize, Pauli)]) -> bool {
        terms.iter().filter(|&&(s, p)| self.letters[s].anticommutes(p)).count() % 2 == 1
    }

    /// In-place `exp(-i a G) P exp(i a G)` with `2a = k pi/2`, `G` sparse.
    fn rotate(&mut self, k: u8, g: &[(usize, Pauli)]) {
        let k = k % 4;
        if k == 0 || !self.anticommutes_sparse(g) {
            return;
        }
        match k {
            1 => self.mul_sparse_right(1, g),
            2 => self.phase = (self.phase + 2) % 4,
            _ => self.mul_sparse_right(3, g),
        }
    }

    /// `<up...up| P |up...up>`.
    pub fn expect_up(&self) -> C64 {
        if self.letters.iter().all(|&p| p == Pauli::I || p == Pauli::Z) {
            self.coefficient()
        } else {
            C64::new(0.0, 0.0)
        }
    }

    /// Image of the computational basis state `x` (bit `s` is site `s`):
    /// `P|x> = c |y>`.
    pub fn apply_to_basis(&self, x: usize) -> (usize, C64) {
        let mut y = x;
        let mut ph = self.phase as u32;
        for (s, p) in self.letters.iter().enumerate() {
            let (flip, e) = p.basis_action();
            let bit = (x >> s) & 1;
            ph += e[bit] as u32;
            if flip {
                y ^= 1 << s;
            }
        }
        (y, i_pow((ph % 4) as u8))
    }

    /// Normalized vectorization per site, ordered by `sites` (chain order):
    /// entry `2 k + b` is `P[k][b] / sqrt 2`. The phase sits on the first
    /// local vector.
    pub fn vectorized_locals(&self, chain_sites: &[usize]) -> Vec<Array1<C64>> {
        let h = 1.0 / 2f64.sqrt();
        chain_sites
            .iter()
            .enumerate()
            .map(|(pos, &s)| {
                let m = self.letters[s].matrix();
                let mut v = Array1::from(vec![m[0][0] * h, m[0][1] * h, m[1][0] * h, m[1][1] * h]);
                if pos == 0 {
                    v.mapv_inplace(|z| z * self.coefficient());
                }
                v
            })
            .collect()
    }

    pub fn to_compact(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PauliString {
    /// `+1 X3 Y17 Z42`; the identity prints as just the phase.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ph = ["+1", "+i", "-1", "-i"][self.phase as usize];
        write!(f, "{ph}")?;
        for (s, p) in self.letters.iter().enumerate() {
            if *p != Pauli::I {
                write!(f, " {}{}", p.symbol(), s)?;
            }
        }
        Ok(())
    }
}

/// Parses `<n>:<compact>` is not needed; this parses the compact form for a
/// given length via [`PauliString::parse`].
impl PauliString {
    pub fn parse(n: usize, text: &str) -> Result<Self> {
        let mut it = text.split_whitespace();
        let mut s = PauliString::identity(n);
        let first = it.next().ok_or_else(|| Error::InvalidArgument("empty Pauli string".into()))?;
        let mut pending = Some(first);
        if let Some(ph) = ["+1", "+i", "-1", "-i"].iter().position(|&p| p == first) {
            s.phase = ph as u8;
            pending = None;
        }
        for tok in pending.into_iter().chain(it) {
            let (letter, idx) = tok.split_at(1);
            let p = match letter {
                "X" => Pauli::X,
                "Y" => Pauli::Y,
                "Z" => Pauli::Z,
                "I" => Pauli::I,
                _ => return Err(Error::InvalidArgument(format!("bad Pauli token `{tok}`"))),
            };
            let site: usize = idx.parse().map_err(|_| Error::InvalidArgument(format!("bad site in `{tok}`")))?;
            if site >= n {
                return Err(Error::InvalidArgument(format!("site {site} out of range")));
            }
            s.letters[site] = p;
        }
        Ok(s)
    }
}

/// Observable descriptor like `Z:62` or `X:3,Z:5`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observable(pub Vec<(usize, Pauli)>);

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for part in s.split(',') {
            let (l, site) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("observable term `{part}` needs `P:site`")))?;
            let p = match l {
                "X" => Pauli::X,
                "Y" => Pauli::Y,
                "Z" => Pauli::Z,
                _ => return Err(Error::InvalidArgument(format!("unknown Pauli `{l}`"))),
            };
            let site = site.parse().map_err(|_| Error::InvalidArgument(format!("bad site `{site}`")))?;
            terms.push((site, p));
        }
        Ok(Observable(terms))
    }
}

impl Observable {
    pub fn to_string_on(&self, n: usize) -> Result<PauliString> {
        if let Some(&(s, _)) = self.0.iter().find(|(s, _)| *s >= n) {
            return Err(Error::InvalidArgument(format!("observable site {s} outside lattice")));
        }
        Ok(PauliString::from_sparse(n, 0, &self.0))
    }
}

/// Conjugation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `U P U^dag`
    Forward,
    /// `U^dag P U`
    Heisenberg,
}

/// Quarter turns `k` with `theta = k pi/2`, or an error off the Clifford grid.
pub fn quarter_turns(theta: f64) -> Result<u8> {
    let r = theta / std::f64::consts::FRAC_PI_2;
    let k = r.round();
    if (r - k).abs() > 1e-9 {
        return Err(Error::NonClifford(theta));
    }
    Ok((k as i64).rem_euclid(4) as u8)
}

fn conjugate_step(p: &mut PauliString, step: &Step, dir: Direction) -> Result<()> {
    let sign = |k: u8| if dir == Direction::Heisenberg { (4 - k) % 4 } else { k };
    match step {
        Step::Zz { layer, angles } => {
            for (&(a, b), &t) in layer.bonds.iter().zip(angles) {
                p.rotate(sign(quarter_turns(t)?), &[(a, Pauli::Z), (b, Pauli::Z)]);
            }
        }
        Step::Rx { angles } => {
            for (s, &t) in angles.iter().enumerate() {
                p.rotate(sign(quarter_turns(t)?), &[(s, Pauli::X)]);
            }
        }
    }
    Ok(())
}

/// Conjugates by a list of steps read as an operator product.
pub fn conjugate_by_steps(p: &PauliString, steps: &[Step], dir: Direction) -> Result<PauliString> {
    let mut out = p.clone();
    match dir {
        Direction::Heisenberg => {
            for st in steps {
                conjugate_step(&mut out, st, dir)?;
            }
        }
        Direction::Forward => {
            for st in steps.iter().rev() {
                conjugate_step(&mut out, st, dir)?;
            }
        }
    }
    Ok(out)
}

/// One round of conjugation.
pub fn conjugate_by_round(p: &PauliString, prog: &CircuitProgram, dir: Direction) -> Result<PauliString> {
    conjugate_by_steps(p, &prog.round.steps, dir)
}

/// Whole-circuit conjugation including the tail steps.
pub fn conjugate_circuit(p: &PauliString, prog: &CircuitProgram, dir: Direction) -> Result<PauliString> {
    let mut out = p.clone();
    if dir == Direction::Heisenberg {
        out = conjugate_by_steps(&out, &prog.tail, dir)?;
    }
    for _ in 0..prog.depth {
        out = conjugate_by_round(&out, prog, dir)?;
    }
    if dir == Direction::Forward {
        out = conjugate_by_steps(&out, &prog.tail, dir)?;
    }
    Ok(out)
}

fn clifford_program(lat: &Lattice, depth: usize) -> Result<CircuitProgram> {
    let order =
        crate::lattice::snake_order(lat).unwrap_or_else(|_| crate::lattice::SnakeOrder::identity(lat.site_count));
    let spec = crate::circuits::CircuitSpec::new(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, depth);
    crate::circuits::build_program(&spec, lat, &order)
}

/// `U(pi/2)^D Z_site U(pi/2)^{dag D}` at `theta_J = -pi/2`.
pub fn stabilizer(lat: &Lattice, site: usize, depth: usize) -> Result<PauliString> {
    let prog = clifford_program(lat, depth)?;
    conjugate_circuit(&PauliString::single(lat.site_count, site, Pauli::Z), &prog, Direction::Forward)
}

/// Support size of the stabilizer after each round `0..=d_max`.
pub fn support_growth(lat: &Lattice, site: usize, d_max: usize) -> Result<Vec<usize>> {
    let prog = clifford_program(lat, 1)?;
    let mut p = PauliString::single(lat.site_count, site, Pauli::Z);
    let mut out = vec![p.weight()];
    for _ in 0..d_max {
        p = conjugate_by_round(&p, &prog, Direction::Forward)?;
        out.push(p.weight());
    }
    Ok(out)
}

/// `S_a = prod_{b in NN(a)} i Z_a Z_b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SOperator {
    pub site: usize,
    pub neighbors: Vec<usize>,
    pub string: PauliString,
}

pub fn s_operator(lat: &Lattice, a: usize) -> Result<SOperator> {
    if a >= lat.site_count {
        return Err(Error::InvalidArgument(format!("site {a} out of range")));
    }
    let n = lat.site_count;
    let mut s = PauliString::identity(n);
    for &b in lat.neighbors(a) {
        let f = PauliString::from_sparse(n, 1, &[(a, Pauli::Z), (b, Pauli::Z)]);
        s = s.mul(&f)?;
    }
    Ok(SOperator { site: a, neighbors: lat.neighbors(a).to_vec(), string: s })
}

pub const DENSE_COMMUTATION_LIMIT: usize = 12;

/// Max-norm deviation between `R^n exp(-i t X_a/2)` and
/// `exp(-i t M/2) R^n` with `R = prod exp(i pi ZZ/4)`, for a Hermitian
/// involution `M` given as a Pauli string. Evaluated column by column.
pub fn commutation_deviation(lat: &Lattice, a: usize, theta_h: f64, n: u32, m: &PauliString) -> Result<f64> {
    let nq = lat.site_count;
    if nq > DENSE_COMMUTATION_LIMIT {
        return Err(Error::TooLarge { qubits: nq, limit: DENSE_COMMUTATION_LIMIT });
    }
    let dim = 1usize << nq;
    let rphase = |x: usize| -> C64 {
        let s: i64 = lat
            .edges
            .iter()
            .map(|&(u, v)| {
                let zu = 1 - 2 * ((x >> u) & 1) as i64;
                let zv = 1 - 2 * ((x >> v) & 1) as i64;
                zu * zv
            })
            .sum();
        C64::from_polar(1.0, std::f64::consts::FRAC_PI_4 * (n as i64 * s) as f64)
    };
    let (c, sn) = ((theta_h / 2.0).cos(), (theta_h / 2.0).sin());
    let mi = C64::new(0.0, -sn);
    let xa = PauliString::single(nq, a, Pauli::X);
    let mut worst = 0.0f64;
    for col in 0..dim {
        // left: R^n (c - i s X_a) |col>
        let mut lhs: Vec<(usize, C64)> = vec![(col, C64::new(c, 0.0) * rphase(col))];
        let (y, cy) = xa.apply_to_basis(col);
        lhs.push((y, mi * cy * rphase(y)));
        // right: (c - i s M) R^n |col>
        let r0 = rphase(col);
        let (y2, cy2) = m.apply_to_basis(col);
        let mut rhs: Vec<(usize, C64)> = vec![(col, C64::new(c, 0.0) * r0), (y2, mi * cy2 * r0)];
        lhs.sort_by_key(|t| t.0);
        rhs.sort_by_key(|t| t.0);
        let mut acc = std::collections::BTreeMap::<usize, C64>::new();
        for (k, v) in lhs {
            *acc.entry(k).or_default() += v;
        }
        for (k, v) in rhs {
            *acc.entry(k).or_default() -= v;
        }
        for v in acc.values() {
            worst = worst.max(v.norm());
        }
    }
    Ok(worst)
}

/// Checks `R^n X_a R^{-n} = S_a^n X_a` through the exponentiated form and
/// returns the max deviation.
pub fn verify_commutation(lat: &Lattice, a: usize, theta_h: f64, n: u32) -> Result<f64> {
    let s = s_operator(lat, a)?.string.pow(n);
    let m = s.mul(&PauliString::single(lat.site_count, a, Pauli::X))?;
    commutation_deviation(lat, a, theta_h, n, &m)
}
