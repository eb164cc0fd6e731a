//! Dense statevector simulation of small parameterized circuits.
//!
//! Conventions:
//! - qubit 0 is the most significant bit of a basis index, so `|10⟩` is
//!   index 2 on two qubits;
//! - rotations are `R_P(θ) = exp(−iθP/2)` and Ising gates are
//!   `P⊗P(θ) = exp(−iθ(P⊗P)/2)`, which makes the two-term parameter shift
//!   with `±π/2` exact for every parameterized gate.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{config, usage, Result};

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 12;
/// Largest register for which [`circuit_unitary`] builds the dense matrix.
pub const ORACLE_MAX_QUBITS: usize = 4;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Pure state of `num_qubits` qubits as `2^num_qubits` amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `num_qubits` qubits.
    pub fn new(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return config(format!("qubit count {num_qubits} outside 1..={MAX_QUBITS}"));
        }
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[0] = ONE;
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.num_qubits)?;
        self.apply_unchecked(gate);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &Gate) {
        let half = 0.5 * gate.angle;
        let (s, c) = half.sin_cos();
        match gate.kind {
            GateKind::Rx => {
                self.apply_single(gate.qubits[0], [[c.into(), -I * s], [-I * s, c.into()]])
            }
            GateKind::Ry => self.apply_single(
                gate.qubits[0],
                [[c.into(), (-s).into()], [s.into(), c.into()]],
            ),
            GateKind::Rz => {
                let m = self.mask(gate.qubits[0]);
                let lo = Complex64::new(c, -s);
                let hi = Complex64::new(c, s);
                for (i, amp) in self.amplitudes.iter_mut().enumerate() {
                    *amp *= if i & m == 0 { lo } else { hi };
                }
            }
            GateKind::Cnot => {
                let mc = self.mask(gate.qubits[0]);
                let mt = self.mask(gate.qubits[1]);
                for i in 0..self.amplitudes.len() {
                    if i & mc != 0 && i & mt == 0 {
                        self.amplitudes.swap(i, i | mt);
                    }
                }
            }
            GateKind::IsingXX | GateKind::IsingYY => {
                let ma = self.mask(gate.qubits[0]);
                let mb = self.mask(gate.qubits[1]);
                let yy = gate.kind == GateKind::IsingYY;
                for i in 0..self.amplitudes.len() {
                    if i & ma != 0 {
                        continue;
                    }
                    let j = i ^ ma ^ mb;
                    // Y⊗Y picks up −1 when the two bits agree.
                    let sign = if yy && (i & mb == 0) { -1.0 } else { 1.0 };
                    let (x, y) = (self.amplitudes[i], self.amplitudes[j]);
                    let off = -I * (s * sign);
                    self.amplitudes[i] = x * c + y * off;
                    self.amplitudes[j] = y * c + x * off;
                }
            }
            GateKind::IsingZZ => {
                let ma = self.mask(gate.qubits[0]);
                let mb = self.mask(gate.qubits[1]);
                let same = Complex64::new(c, -s);
                let differ = Complex64::new(c, s);
                for (i, amp) in self.amplitudes.iter_mut().enumerate() {
                    let parity = ((i & ma != 0) as u8) ^ ((i & mb != 0) as u8);
                    *amp *= if parity == 0 { same } else { differ };
                }
            }
        }
    }

    fn apply_single(&mut self, qubit: usize, u: [[Complex64; 2]; 2]) {
        let m = self.mask(qubit);
        for i in 0..self.amplitudes.len() {
            if i & m != 0 {
                continue;
            }
            let j = i | m;
            let (x, y) = (self.amplitudes[i], self.amplitudes[j]);
            self.amplitudes[i] = u[0][0] * x + u[0][1] * y;
            self.amplitudes[j] = u[1][0] * x + u[1][1] * y;
        }
    }

    /// `⟨Z_q⟩` without bounds checks beyond the slice access.
    pub fn z_expectation(&self, qubit: usize) -> f64 {
        let m = self.mask(qubit);
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if i & m == 0 {
                    a.norm_sqr()
                } else {
                    -a.norm_sqr()
                }
            })
            .sum()
    }

    /// `⟨Z_a Z_b⟩`.
    pub fn zz_expectation(&self, a: usize, b: usize) -> f64 {
        let (ma, mb) = (self.mask(a), self.mask(b));
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, amp)| {
                let odd = ((i & ma != 0) as u8) ^ ((i & mb != 0) as u8);
                if odd == 0 {
                    amp.norm_sqr()
                } else {
                    -amp.norm_sqr()
                }
            })
            .sum()
    }

    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        obs.validate(self.num_qubits)?;
        Ok(self.expectation_unchecked(obs))
    }

    fn expectation_unchecked(&self, obs: &Observable) -> f64 {
        obs.terms
            .iter()
            .map(|(coef, term)| {
                coef * match *term {
                    ZTerm::Z(q) => self.z_expectation(q),
                    ZTerm::ZZ(a, b) => self.zz_expectation(a, b),
                }
            })
            .sum()
    }
}

pub fn init_state(num_qubits: usize) -> Result<StateVector> {
    StateVector::new(num_qubits)
}

/// Returns `U·state` for the gate's unitary `U`.
pub fn apply_gate(state: &StateVector, gate: &Gate) -> Result<StateVector> {
    let mut out = state.clone();
    out.apply(gate)?;
    Ok(out)
}

pub fn expectation(state: &StateVector, obs: &Observable) -> Result<f64> {
    state.expectation(obs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Cnot,
    IsingXX,
    IsingYY,
    IsingZZ,
}

impl GateKind {
    pub const ALL: [GateKind; 7] = [
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Cnot,
        GateKind::IsingXX,
        GateKind::IsingYY,
        GateKind::IsingZZ,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz => 1,
            _ => 2,
        }
    }

    pub fn is_parametric(self) -> bool {
        self != GateKind::Cnot
    }
}

/// A concrete gate. Single-qubit gates only read `qubits[0]`; CNOT ignores `angle`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: [usize; 2],
    pub angle: f64,
}

impl Gate {
    pub fn single(kind: GateKind, qubit: usize, angle: f64) -> Self {
        debug_assert_eq!(kind.arity(), 1);
        Self {
            kind,
            qubits: [qubit, qubit],
            angle,
        }
    }

    pub fn pair(kind: GateKind, a: usize, b: usize, angle: f64) -> Self {
        debug_assert_eq!(kind.arity(), 2);
        Self {
            kind,
            qubits: [a, b],
            angle,
        }
    }

    pub fn rx(q: usize, angle: f64) -> Self {
        Self::single(GateKind::Rx, q, angle)
    }

    pub fn ry(q: usize, angle: f64) -> Self {
        Self::single(GateKind::Ry, q, angle)
    }

    pub fn rz(q: usize, angle: f64) -> Self {
        Self::single(GateKind::Rz, q, angle)
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::pair(GateKind::Cnot, control, target, 0.0)
    }

    pub fn ising_xx(a: usize, b: usize, angle: f64) -> Self {
        Self::pair(GateKind::IsingXX, a, b, angle)
    }

    pub fn ising_yy(a: usize, b: usize, angle: f64) -> Self {
        Self::pair(GateKind::IsingYY, a, b, angle)
    }

    pub fn ising_zz(a: usize, b: usize, angle: f64) -> Self {
        Self::pair(GateKind::IsingZZ, a, b, angle)
    }

    pub fn targets(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        if let Some(&q) = self.targets().iter().find(|&&q| q >= num_qubits) {
            return usage(format!(
                "{:?} targets qubit {q} on a {num_qubits}-qubit register",
                self.kind
            ));
        }
        if self.kind.arity() == 2 && self.qubits[0] == self.qubits[1] {
            return usage(format!(
                "{:?} needs two distinct qubits, got {} twice",
                self.kind, self.qubits[0]
            ));
        }
        Ok(())
    }
}

/// A product of Pauli-Z operators on one or two qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZTerm {
    Z(usize),
    ZZ(usize, usize),
}

/// Weighted sum of Z and ZZ terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observable {
    pub terms: Vec<(f64, ZTerm)>,
}

impl Observable {
    pub fn z(qubit: usize) -> Self {
        Self {
            terms: vec![(1.0, ZTerm::Z(qubit))],
        }
    }

    pub fn zz(a: usize, b: usize) -> Self {
        Self {
            terms: vec![(1.0, ZTerm::ZZ(a, b))],
        }
    }

    pub fn with_term(mut self, coefficient: f64, term: ZTerm) -> Self {
        self.terms.push((coefficient, term));
        self
    }

    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        for (_, term) in &self.terms {
            let ok = match *term {
                ZTerm::Z(q) => q < num_qubits,
                ZTerm::ZZ(a, b) => a < num_qubits && b < num_qubits && a != b,
            };
            if !ok {
                return usage(format!(
                    "observable term {term:?} invalid on {num_qubits} qubits"
                ));
            }
        }
        Ok(())
    }
}

/// Where a slot's rotation angle comes from when the circuit is bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Role {
    /// Use the gate's stored angle.
    Fixed,
    /// `angle = scale × data[input]`.
    Data { input: usize, scale: f64 },
    /// `angle = params[index]`.
    Param(usize),
}

/// Ordered gate slots, each tagged with how its angle is bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    slots: Vec<(Gate, Role)>,
    param_seen: Vec<bool>,
    num_inputs: usize,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return config(format!("qubit count {num_qubits} outside 1..={MAX_QUBITS}"));
        }
        Ok(Self {
            num_qubits,
            slots: Vec::new(),
            param_seen: Vec::new(),
            num_inputs: 0,
        })
    }

    pub fn push(&mut self, gate: Gate, role: Role) -> Result<&mut Self> {
        gate.validate(self.num_qubits)?;
        if !gate.kind.is_parametric() && role != Role::Fixed {
            return usage("CNOT slots cannot carry a data or parameter angle");
        }
        match role {
            Role::Param(idx) => {
                if idx >= self.param_seen.len() {
                    self.param_seen.resize(idx + 1, false);
                }
                self.param_seen[idx] = true;
            }
            Role::Data { input, .. } => self.num_inputs = self.num_inputs.max(input + 1),
            Role::Fixed => {}
        }
        self.slots.push((gate, role));
        Ok(self)
    }

    pub fn fixed(&mut self, gate: Gate) -> Result<&mut Self> {
        self.push(gate, Role::Fixed)
    }

    /// Appends a gate whose angle is `params[index]`.
    pub fn param(&mut self, kind: GateKind, qubits: &[usize], index: usize) -> Result<&mut Self> {
        self.push(gate_on(kind, qubits)?, Role::Param(index))
    }

    /// Appends a gate whose angle is `scale × data[input]`.
    pub fn data(
        &mut self,
        kind: GateKind,
        qubits: &[usize],
        input: usize,
        scale: f64,
    ) -> Result<&mut Self> {
        self.push(gate_on(kind, qubits)?, Role::Data { input, scale })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn slots(&self) -> &[(Gate, Role)] {
        &self.slots
    }

    pub fn num_params(&self) -> usize {
        self.param_seen.len()
    }

    /// Minimum data length needed to bind the circuit.
    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn count_role(&self, pred: impl Fn(&Role) -> bool) -> usize {
        self.slots.iter().filter(|(_, r)| pred(r)).count()
    }

    fn check_bind(&self, params: &[f64], data: &[f64]) -> Result<()> {
        if let Some(missing) = self.param_seen.iter().position(|s| !s) {
            return usage(format!(
                "parameter index {missing} is never used by the circuit"
            ));
        }
        if params.len() != self.num_params() {
            return usage(format!(
                "circuit expects {} parameters, got {}",
                self.num_params(),
                params.len()
            ));
        }
        if data.len() < self.num_inputs {
            return usage(format!(
                "circuit reads {} data values, got {}",
                self.num_inputs,
                data.len()
            ));
        }
        Ok(())
    }

    fn resolve(&self, slot: usize, params: &[f64], data: &[f64]) -> Gate {
        let (mut gate, role) = self.slots[slot];
        match role {
            Role::Fixed => {}
            Role::Data { input, scale } => gate.angle = scale * data[input],
            Role::Param(idx) => gate.angle = params[idx],
        }
        gate
    }

    /// Resolves every slot angle.
    pub fn bind(&self, params: &[f64], data: &[f64]) -> Result<Vec<Gate>> {
        self.check_bind(params, data)?;
        Ok((0..self.slots.len())
            .map(|s| self.resolve(s, params, data))
            .collect())
    }

    /// Applies the bound circuit to `|0…0⟩`.
    pub fn simulate(&self, params: &[f64], data: &[f64]) -> Result<StateVector> {
        let gates = self.bind(params, data)?;
        let mut state = StateVector::new(self.num_qubits)?;
        for g in &gates {
            state.apply_unchecked(g);
        }
        Ok(state)
    }
}

fn gate_on(kind: GateKind, qubits: &[usize]) -> Result<Gate> {
    match (kind.arity(), qubits) {
        (1, [q]) => Ok(Gate::single(kind, *q, 0.0)),
        (2, [a, b]) => Ok(Gate::pair(kind, *a, *b, 0.0)),
        _ => usage(format!(
            "{kind:?} takes {} qubit(s), got {}",
            kind.arity(),
            qubits.len()
        )),
    }
}

pub fn run_circuit(
    circuit: &Circuit,
    params: &[f64],
    data: &[f64],
    obs: &Observable,
) -> Result<f64> {
    obs.validate(circuit.num_qubits)?;
    Ok(circuit.simulate(params, data)?.expectation_unchecked(obs))
}

/// Expectations of several observables on one simulated state.
pub fn run_circuit_multi(
    circuit: &Circuit,
    params: &[f64],
    data: &[f64],
    observables: &[Observable],
) -> Result<Vec<f64>> {
    for obs in observables {
        obs.validate(circuit.num_qubits)?;
    }
    let state = circuit.simulate(params, data)?;
    Ok(observables
        .iter()
        .map(|o| state.expectation_unchecked(o))
        .collect())
}

/// Values and parameter-shift derivatives of several observables.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftJacobian {
    /// `values[k]` is `⟨O_k⟩`.
    pub values: Vec<f64>,
    /// `params[k][j]` is `∂⟨O_k⟩/∂params[j]`.
    pub params: Vec<Vec<f64>>,
    /// `data[k][i]` is `∂⟨O_k⟩/∂data[i]`, through the `scale` of each data slot.
    pub data: Vec<Vec<f64>>,
}

/// Parameter-shift derivatives with respect to both trainable parameters
/// and data inputs. Slots sharing an index contribute additively.
pub fn shift_jacobian(
    circuit: &Circuit,
    params: &[f64],
    data: &[f64],
    observables: &[Observable],
) -> Result<ShiftJacobian> {
    for obs in observables {
        obs.validate(circuit.num_qubits)?;
    }
    let gates = circuit.bind(params, data)?;
    let k = observables.len();
    let mut jac = ShiftJacobian {
        values: vec![0.0; k],
        params: vec![vec![0.0; circuit.num_params()]; k],
        data: vec![vec![0.0; data.len()]; k],
    };

    let mut prefix = StateVector::new(circuit.num_qubits)?;
    let mut shifted_state = prefix.clone();
    for (s, (_, role)) in circuit.slots.iter().enumerate() {
        let weight = match *role {
            Role::Fixed => None,
            Role::Param(_) => Some(1.0),
            Role::Data { scale, .. } => Some(scale),
        };
        if let Some(weight) = weight {
            let mut diff = vec![0.0; k];
            for (sign, shift) in [(1.0, FRAC_PI_2), (-1.0, -FRAC_PI_2)] {
                shifted_state.amplitudes.copy_from_slice(&prefix.amplitudes);
                let mut g = gates[s];
                g.angle += shift;
                shifted_state.apply_unchecked(&g);
                for g in &gates[s + 1..] {
                    shifted_state.apply_unchecked(g);
                }
                for (d, obs) in diff.iter_mut().zip(observables) {
                    *d += sign * shifted_state.expectation_unchecked(obs);
                }
            }
            for (o, d) in diff.iter().enumerate() {
                let g = 0.5 * d * weight;
                match *role {
                    Role::Param(j) => jac.params[o][j] += g,
                    Role::Data { input, .. } => jac.data[o][input] += g,
                    Role::Fixed => unreachable!(),
                }
            }
        }
        prefix.apply_unchecked(&gates[s]);
    }
    for (v, obs) in jac.values.iter_mut().zip(observables) {
        *v = prefix.expectation_unchecked(obs);
    }
    Ok(jac)
}

/// `∂⟨obs⟩/∂params` by the two-term parameter-shift rule.
pub fn parameter_shift_gradient(
    circuit: &Circuit,
    params: &[f64],
    data: &[f64],
    obs: &Observable,
) -> Result<Vec<f64>> {
    let mut jac = shift_jacobian(circuit, params, data, std::slice::from_ref(obs))?;
    Ok(jac.params.swap_remove(0))
}

/// Dense complex matrix, row-major.
pub type DenseMatrix = Vec<Vec<Complex64>>;

/// Full circuit unitary built from dense gate matrices. Test oracle, so it is
/// refused above [`ORACLE_MAX_QUBITS`] qubits.
pub fn circuit_unitary(circuit: &Circuit, params: &[f64], data: &[f64]) -> Result<DenseMatrix> {
    let n = circuit.num_qubits;
    if n > ORACLE_MAX_QUBITS {
        return config(format!(
            "dense unitary oracle limited to {ORACLE_MAX_QUBITS} qubits, circuit has {n}"
        ));
    }
    let dim = 1 << n;
    let mut u = identity(dim);
    for gate in circuit.bind(params, data)? {
        u = matmul(&embed(&gate, n), &u);
    }
    Ok(u)
}

fn identity(dim: usize) -> DenseMatrix {
    (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { ONE } else { ZERO }).collect())
        .collect()
}

fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = a.len();
    let m = b[0].len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..b.len()).map(|k| a[i][k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (ra, ca, rb, cb) = (a.len(), a[0].len(), b.len(), b[0].len());
    let mut out = vec![vec![ZERO; ca * cb]; ra * rb];
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[i * rb + k][j * cb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn scaled(m: &DenseMatrix, s: Complex64) -> DenseMatrix {
    m.iter()
        .map(|r| r.iter().map(|x| x * s).collect())
        .collect()
}

fn added(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

fn pauli(kind: GateKind) -> DenseMatrix {
    match kind {
        GateKind::Rx | GateKind::IsingXX => vec![vec![ZERO, ONE], vec![ONE, ZERO]],
        GateKind::Ry | GateKind::IsingYY => vec![vec![ZERO, -I], vec![I, ZERO]],
        GateKind::Rz | GateKind::IsingZZ => vec![vec![ONE, ZERO], vec![ZERO, -ONE]],
        GateKind::Cnot => unreachable!("CNOT has no generator"),
    }
}

/// `exp(−iθG/2) = cos(θ/2)·I − i·sin(θ/2)·G` for an involutory generator `G`.
fn rotation(generator: &DenseMatrix, angle: f64) -> DenseMatrix {
    let (s, c) = (0.5 * angle).sin_cos();
    added(
        &scaled(&identity(generator.len()), c.into()),
        &scaled(generator, -I * s),
    )
}

/// Local gate matrix lifted onto the full register.
fn embed(gate: &Gate, n: usize) -> DenseMatrix {
    if gate.kind.arity() == 1 {
        let local = rotation(&pauli(gate.kind), gate.angle);
        let mut full = vec![vec![ONE]];
        for q in 0..n {
            full = if q == gate.qubits[0] {
                kron(&full, &local)
            } else {
                kron(&full, &identity(2))
            };
        }
        return full;
    }
    let local = match gate.kind {
        GateKind::Cnot => {
            let mut m = identity(4);
            m.swap(2, 3);
            m
        }
        k => {
            let p = pauli(k);
            rotation(&kron(&p, &p), gate.angle)
        }
    };
    let dim = 1 << n;
    let bit = |i: usize, q: usize| (i >> (n - 1 - q)) & 1;
    let (a, b) = (gate.qubits[0], gate.qubits[1]);
    let rest = !((1 << (n - 1 - a)) | (1 << (n - 1 - b)));
    let mut full = vec![vec![ZERO; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            if i & rest == j & rest {
                full[i][j] = local[bit(i, a) * 2 + bit(i, b)][bit(j, a) * 2 + bit(j, b)];
            }
        }
    }
    full
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    fn random_circuit(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Circuit {
        let mut c = Circuit::new(n).unwrap();
        for _ in 0..len {
            let kind = GateKind::ALL[rng.gen_range(0..7)];
            if kind.arity() == 2 && n < 2 {
                continue;
            }
            let a = rng.gen_range(0..n);
            let angle = rng.gen_range(-PI..PI);
            let gate = if kind.arity() == 1 {
                Gate::single(kind, a, angle)
            } else {
                let b = (a + rng.gen_range(1..n)) % n;
                Gate::pair(kind, a, b, angle)
            };
            c.fixed(gate).unwrap();
        }
        c
    }

    #[test]
    fn init_state_basis() {
        assert_eq!(init_state(1).unwrap().amplitudes(), &[ONE, ZERO]);
        assert_eq!(
            init_state(2).unwrap().amplitudes(),
            &[ONE, ZERO, ZERO, ZERO]
        );
        assert!(init_state(13).is_err());
        assert!(init_state(0).is_err());
    }

    #[test]
    fn rx_zero_is_identity() {
        let mut s = init_state(2).unwrap();
        s.apply(&Gate::ry(0, 0.7)).unwrap();
        let before = s.clone();
        s.apply(&Gate::rx(1, 0.0)).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn cnot_truth_table() {
        let mut s = init_state(2).unwrap();
        s.apply(&Gate::rx(0, PI)).unwrap(); // -i|10⟩
        let s = apply_gate(&s, &Gate::cnot(0, 1)).unwrap();
        assert!(close(s.amplitudes()[3], -I, 1e-12));
        assert!(s.amplitudes()[2].norm() < 1e-12);
    }

    #[test]
    fn rx_pi_on_zero() {
        let s = apply_gate(&init_state(1).unwrap(), &Gate::rx(0, PI)).unwrap();
        // Dense-matrix oracle: exp(−iπX/2) = −iX.
        let mut c = Circuit::new(1).unwrap();
        c.fixed(Gate::rx(0, PI)).unwrap();
        let u = circuit_unitary(&c, &[], &[]).unwrap();
        assert!(close(s.amplitudes()[0], u[0][0], 1e-12));
        assert!(close(s.amplitudes()[1], u[1][0], 1e-12));
        assert!(close(s.amplitudes()[1], -I, 1e-12));
        assert!(s.amplitudes()[0].norm() < 1e-12);
    }

    #[test]
    fn invalid_gates_rejected() {
        let mut s = init_state(2).unwrap();
        assert!(s.apply(&Gate::rx(2, 0.1)).is_err());
        assert!(s.apply(&Gate::cnot(1, 1)).is_err());
        assert!(s.apply(&Gate::ising_zz(0, 0, 0.3)).is_err());
        let mut c = Circuit::new(2).unwrap();
        assert!(c.param(GateKind::Rx, &[0, 1], 0).is_err());
        assert!(c.push(Gate::cnot(0, 1), Role::Param(0)).is_err());
    }

    #[test]
    fn z_expectations() {
        let s = init_state(1).unwrap();
        assert_eq!(s.expectation(&Observable::z(0)).unwrap(), 1.0);
        let plus = apply_gate(&s, &Gate::ry(0, PI / 2.0)).unwrap();
        assert!(plus.expectation(&Observable::z(0)).unwrap().abs() < 1e-12);
        let mut s11 = init_state(2).unwrap();
        s11.apply(&Gate::rx(0, PI)).unwrap();
        s11.apply(&Gate::rx(1, PI)).unwrap();
        assert!((s11.expectation(&Observable::zz(0, 1)).unwrap() - 1.0).abs() < 1e-12);
        assert!(s11.expectation(&Observable::z(2)).is_err());
    }

    #[test]
    fn run_circuit_examples() {
        let empty = Circuit::new(1).unwrap();
        assert_eq!(
            run_circuit(&empty, &[], &[], &Observable::z(0)).unwrap(),
            1.0
        );

        let mut c = Circuit::new(1).unwrap();
        c.param(GateKind::Rx, &[0], 0).unwrap();
        let v = run_circuit(&c, &[PI / 3.0], &[], &Observable::z(0)).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        assert!(run_circuit(&c, &[], &[], &Observable::z(0)).is_err());

        let mut d = Circuit::new(1).unwrap();
        d.data(GateKind::Rx, &[0], 0, PI).unwrap();
        let v = run_circuit(&d, &[], &[1.0], &Observable::z(0)).unwrap();
        assert!((v + 1.0).abs() < 1e-12);
        assert!(run_circuit(&d, &[], &[], &Observable::z(0)).is_err());
    }

    #[test]
    fn unused_parameter_index_is_rejected() {
        let mut c = Circuit::new(1).unwrap();
        c.param(GateKind::Rx, &[0], 1).unwrap();
        assert!(run_circuit(&c, &[0.0, 0.0], &[], &Observable::z(0)).is_err());
    }

    fn central_difference(c: &Circuit, params: &[f64], obs: &Observable, eps: f64) -> Vec<f64> {
        (0..params.len())
            .map(|j| {
                let mut p = params.to_vec();
                p[j] += eps;
                let up = run_circuit(c, &p, &[], obs).unwrap();
                p[j] -= 2.0 * eps;
                let down = run_circuit(c, &p, &[], obs).unwrap();
                (up - down) / (2.0 * eps)
            })
            .collect()
    }

    #[test]
    fn parameter_shift_examples() {
        let mut c = Circuit::new(1).unwrap();
        c.param(GateKind::Rx, &[0], 0).unwrap();
        let g = parameter_shift_gradient(&c, &[PI / 2.0], &[], &Observable::z(0)).unwrap();
        let fd = central_difference(&c, &[PI / 2.0], &Observable::z(0), 1e-6);
        assert!((g[0] + 1.0).abs() < 1e-12);
        assert!((g[0] - fd[0]).abs() < 1e-6);
        let g0 = parameter_shift_gradient(&c, &[0.0], &[], &Observable::z(0)).unwrap();
        assert!(g0[0].abs() < 1e-12);

        let mut zz = Circuit::new(2).unwrap();
        zz.fixed(Gate::ry(0, PI / 2.0)).unwrap();
        zz.param(GateKind::IsingZZ, &[0, 1], 0).unwrap();
        zz.fixed(Gate::ry(0, -0.4)).unwrap();
        for theta in [0.0, 0.3, 1.1, -2.0] {
            let g = parameter_shift_gradient(&zz, &[theta], &[], &Observable::z(0)).unwrap();
            let fd = central_difference(&zz, &[theta], &Observable::z(0), 1e-6);
            assert!(
                (g[0] - fd[0]).abs() < 1e-6,
                "theta {theta}: {g:?} vs {fd:?}"
            );
        }
    }

    #[test]
    fn shared_parameter_gradients_sum() {
        let mut c = Circuit::new(2).unwrap();
        c.param(GateKind::Ry, &[0], 0).unwrap();
        c.fixed(Gate::cnot(0, 1)).unwrap();
        c.param(GateKind::Rx, &[1], 0).unwrap();
        c.param(GateKind::IsingYY, &[0, 1], 1).unwrap();
        let obs = Observable::z(1).with_term(0.5, ZTerm::ZZ(0, 1));
        let p = [0.8, -0.3];
        let g = parameter_shift_gradient(&c, &p, &[], &obs).unwrap();
        let fd = central_difference(&c, &p, &obs, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn data_derivatives_include_scale() {
        let mut c = Circuit::new(2).unwrap();
        c.data(GateKind::Rx, &[0], 0, PI).unwrap();
        c.data(GateKind::Ry, &[1], 1, 0.7).unwrap();
        c.fixed(Gate::cnot(0, 1)).unwrap();
        c.data(GateKind::Rz, &[1], 0, 2.0).unwrap();
        c.param(GateKind::IsingXX, &[1, 0], 0).unwrap();
        let obs = [Observable::z(0), Observable::z(1)];
        let (p, x) = ([0.4], [0.3, 0.9]);
        let jac = shift_jacobian(&c, &p, &x, &obs).unwrap();
        let eps = 1e-6;
        for i in 0..2 {
            let mut up = x;
            up[i] += eps;
            let mut down = x;
            down[i] -= eps;
            let fu = run_circuit_multi(&c, &p, &up, &obs).unwrap();
            let fdn = run_circuit_multi(&c, &p, &down, &obs).unwrap();
            for o in 0..2 {
                let fd = (fu[o] - fdn[o]) / (2.0 * eps);
                assert!((jac.data[o][i] - fd).abs() < 1e-6);
            }
        }
        let direct = run_circuit_multi(&c, &p, &x, &obs).unwrap();
        assert_eq!(jac.values, direct);
    }

    #[test]
    fn oracle_examples() {
        let c = Circuit::new(1).unwrap();
        assert_eq!(circuit_unitary(&c, &[], &[]).unwrap(), identity(2));
        let mut cx = Circuit::new(2).unwrap();
        cx.fixed(Gate::cnot(0, 1)).unwrap();
        let u = circuit_unitary(&cx, &[], &[]).unwrap();
        let expected = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(u[i][j], Complex64::new(expected[i][j] as f64, 0.0));
            }
        }
        assert!(circuit_unitary(&Circuit::new(5).unwrap(), &[], &[]).is_err());
    }

    #[test]
    fn oracle_is_unitary_and_matches_statevector() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let c = random_circuit(&mut rng, 3, 12);
            let u = circuit_unitary(&c, &[], &[]).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    let dot: Complex64 = (0..8).map(|k| u[k][i].conj() * u[k][j]).sum();
                    let want = if i == j { ONE } else { ZERO };
                    assert!(close(dot, want, 1e-10));
                }
            }
            let s = c.simulate(&[], &[]).unwrap();
            for k in 0..8 {
                assert!(close(s.amplitudes()[k], u[k][0], 1e-10));
            }
        }
    }

    #[test]
    fn deterministic_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_circuit(&mut rng, 4, 30);
        let a = c.simulate(&[], &[]).unwrap();
        let b = c.simulate(&[], &[]).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn norm_is_preserved(seed in any::<u64>(), len in 0usize..40, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_circuit(&mut rng, n, len);
            let s = c.simulate(&[], &[]).unwrap();
            prop_assert!((s.norm_sqr().sqrt() - 1.0).abs() < 1e-10);
            for q in 0..n {
                let z = s.z_expectation(q);
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&z));
            }
        }
    }
}
