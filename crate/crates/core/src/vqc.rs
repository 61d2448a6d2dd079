//! Exact statevector simulation of the 4-qubit classifier circuit.
//!
//! Qubit 0 is the most significant bit of the basis index. The circuit is
//! H on every wire, `Ry(atan x_i)` then `Rz(atan x_i²)` on wire `i`, the CNOT
//! ring `0→1, 1→2, 2→3, 3→0`, and finally `Rz(γ)·Ry(β)·Rz(α)` on each wire.
//! The first two wires are read out as Z expectations.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_QUBITS: usize = 4;
pub const DIM: usize = 1 << N_QUBITS;
pub const N_PARAMS: usize = 3 * N_QUBITS;

/// Wires read out as class scores.
pub const MEASURED: [usize; 2] = [0, 1];

pub type Mat2 = [[Complex64; 2]; 2];
pub type Mat4 = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn check_angle(theta: f64) -> Result<()> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("non-finite rotation angle {theta}")))
    }
}

pub fn hadamard() -> Mat2 {
    let h = re(FRAC_1_SQRT_2);
    [[h, h], [h, -h]]
}

fn ry_unchecked(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [[re(c), re(-s)], [re(s), re(c)]]
}

fn rz_unchecked(theta: f64) -> Mat2 {
    [[Complex64::from_polar(1.0, -theta / 2.0), ZERO], [ZERO, Complex64::from_polar(1.0, theta / 2.0)]]
}

pub fn ry(theta: f64) -> Result<Mat2> {
    check_angle(theta)?;
    Ok(ry_unchecked(theta))
}

pub fn rz(theta: f64) -> Result<Mat2> {
    check_angle(theta)?;
    Ok(rz_unchecked(theta))
}

/// `Rz(γ)·Ry(β)·Rz(α)`; `Rz(α)` acts first.
pub fn rot(alpha: f64, beta: f64, gamma: f64) -> Result<Mat2> {
    check_angle(alpha)?;
    check_angle(beta)?;
    check_angle(gamma)?;
    Ok(matmul2(&rz_unchecked(gamma), &matmul2(&ry_unchecked(beta), &rz_unchecked(alpha))))
}

/// CNOT with the control on the more significant of the two qubits.
pub fn cnot() -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    m[0][0] = ONE;
    m[1][1] = ONE;
    m[2][3] = ONE;
    m[3][2] = ONE;
    m
}

pub fn matmul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn dagger2(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVector([Complex64; DIM]);

impl StateVector {
    /// `|0000⟩`.
    pub fn zero() -> Self {
        let mut a = [ZERO; DIM];
        a[0] = ONE;
        Self(a)
    }

    pub fn basis(index: usize) -> Result<Self> {
        if index >= DIM {
            return Err(Error::Index(format!("basis index {index} ≥ {DIM}")));
        }
        let mut a = [ZERO; DIM];
        a[index] = ONE;
        Ok(Self(a))
    }

    /// Checked constructor: the amplitudes must have unit norm to 1e-10.
    pub fn from_amplitudes(amps: [Complex64; DIM]) -> Result<Self> {
        let s = Self(amps);
        let n = s.norm_sqr();
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::State(format!("squared norm {n} is not 1")));
        }
        Ok(s)
    }

    /// No normalization check; for constructing invalid states in tests.
    pub fn from_amplitudes_unchecked(amps: [Complex64; DIM]) -> Self {
        Self(amps)
    }

    pub fn amplitudes(&self) -> &[Complex64; DIM] {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|a| a.norm_sqr()).sum()
    }

    fn inner(&self, other: &Self) -> Complex64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }
}

fn bit(qubit: usize) -> usize {
    1 << (N_QUBITS - 1 - qubit)
}

fn check_qubit(qubit: usize) -> Result<()> {
    if qubit < N_QUBITS {
        Ok(())
    } else {
        Err(Error::Index(format!("qubit {qubit} out of range 0..{N_QUBITS}")))
    }
}

fn apply_single_in_place(state: &mut StateVector, gate: &Mat2, qubit: usize) {
    let m = bit(qubit);
    for i in 0..DIM {
        if i & m == 0 {
            let (a0, a1) = (state.0[i], state.0[i | m]);
            state.0[i] = gate[0][0] * a0 + gate[0][1] * a1;
            state.0[i | m] = gate[1][0] * a0 + gate[1][1] * a1;
        }
    }
}

fn apply_cnot_in_place(state: &mut StateVector, control: usize, target: usize) {
    let (c, t) = (bit(control), bit(target));
    for i in 0..DIM {
        if i & c != 0 && i & t == 0 {
            state.0.swap(i, i | t);
        }
    }
}

pub fn apply_single(state: &StateVector, gate: &Mat2, qubit: usize) -> Result<StateVector> {
    check_qubit(qubit)?;
    let mut s = *state;
    apply_single_in_place(&mut s, gate, qubit);
    Ok(s)
}

pub fn apply_cnot(state: &StateVector, control: usize, target: usize) -> Result<StateVector> {
    check_qubit(control)?;
    check_qubit(target)?;
    if control == target {
        return Err(Error::input(format!("CNOT control and target are both qubit {control}")));
    }
    let mut s = *state;
    apply_cnot_in_place(&mut s, control, target);
    Ok(s)
}

/// `⟨Z⟩` on one wire, exact.
pub fn measure_z(state: &StateVector, qubit: usize) -> Result<f64> {
    check_qubit(qubit)?;
    let n = state.norm_sqr();
    if (n - 1.0).abs() > 1e-8 {
        return Err(Error::State(format!("squared norm {n} deviates from 1")));
    }
    Ok(z_expectation(state, qubit))
}

fn z_expectation(state: &StateVector, qubit: usize) -> f64 {
    let m = bit(qubit);
    state
        .0
        .iter()
        .enumerate()
        .map(|(i, a)| if i & m == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

/// The twelve trainable angles, stored as `(α_i, β_i, γ_i)` per wire.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqcParams([f64; N_PARAMS]);

impl VqcParams {
    pub fn new(angles: [f64; N_PARAMS]) -> Result<Self> {
        if let Some(a) = angles.iter().find(|a| !a.is_finite()) {
            return Err(Error::input(format!("non-finite circuit parameter {a}")));
        }
        Ok(Self(angles))
    }

    pub fn zeros() -> Self {
        Self([0.0; N_PARAMS])
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        let arr: [f64; N_PARAMS] = s
            .try_into()
            .map_err(|_| Error::dim(format!("expected {N_PARAMS} circuit parameters, got {}", s.len())))?;
        Self::new(arr)
    }

    pub fn as_slice(&self) -> &[f64; N_PARAMS] {
        &self.0
    }

    /// `(α, β, γ)` of one wire.
    pub fn wire(&self, qubit: usize) -> (f64, f64, f64) {
        (self.0[3 * qubit], self.0[3 * qubit + 1], self.0[3 * qubit + 2])
    }
}

/// Four finite encoder inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureInput([f64; N_QUBITS]);

impl FeatureInput {
    pub fn new(x: [f64; N_QUBITS]) -> Result<Self> {
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite circuit input {v}")));
        }
        Ok(Self(x))
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        let arr: [f64; N_QUBITS] = s
            .try_into()
            .map_err(|_| Error::dim(format!("expected {N_QUBITS} circuit inputs, got {}", s.len())))?;
        Self::new(arr)
    }

    pub fn values(&self) -> &[f64; N_QUBITS] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Axis {
    Y,
    Z,
}

/// Where a rotation angle comes from, for routing its gradient.
#[derive(Clone, Copy, Debug)]
enum AngleSource {
    EncodeY(usize),
    EncodeZ(usize),
    Param(usize),
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Fixed { qubit: usize, gate: Mat2 },
    Rot { qubit: usize, axis: Axis, angle: f64, source: AngleSource },
    Cnot { control: usize, target: usize },
}

impl Op {
    fn rotation_matrix(axis: Axis, angle: f64) -> Mat2 {
        match axis {
            Axis::Y => ry_unchecked(angle),
            Axis::Z => rz_unchecked(angle),
        }
    }

    /// `dR/dθ`.
    fn rotation_derivative(axis: Axis, angle: f64) -> Mat2 {
        let (s, c) = (angle / 2.0).sin_cos();
        match axis {
            Axis::Y => [[re(-s / 2.0), re(-c / 2.0)], [re(c / 2.0), re(-s / 2.0)]],
            Axis::Z => {
                let e0 = Complex64::from_polar(0.5, -angle / 2.0) * Complex64::new(0.0, -1.0);
                let e1 = Complex64::from_polar(0.5, angle / 2.0) * Complex64::new(0.0, 1.0);
                [[e0, ZERO], [ZERO, e1]]
            }
        }
    }

    fn apply(&self, state: &mut StateVector) {
        match *self {
            Op::Fixed { qubit, gate } => apply_single_in_place(state, &gate, qubit),
            Op::Rot { qubit, axis, angle, .. } => {
                apply_single_in_place(state, &Self::rotation_matrix(axis, angle), qubit)
            }
            Op::Cnot { control, target } => apply_cnot_in_place(state, control, target),
        }
    }

    fn apply_inverse(&self, state: &mut StateVector) {
        match *self {
            Op::Fixed { qubit, gate } => apply_single_in_place(state, &dagger2(&gate), qubit),
            Op::Rot { qubit, axis, angle, .. } => {
                apply_single_in_place(state, &Self::rotation_matrix(axis, -angle), qubit)
            }
            Op::Cnot { control, target } => apply_cnot_in_place(state, control, target),
        }
    }
}

const RING: [(usize, usize); N_QUBITS] = [(0, 1), (1, 2), (2, 3), (3, 0)];

fn encoding_ops(x: &FeatureInput) -> Vec<Op> {
    let mut ops = Vec::with_capacity(3 * N_QUBITS);
    for q in 0..N_QUBITS {
        ops.push(Op::Fixed { qubit: q, gate: hadamard() });
    }
    for (q, &v) in x.0.iter().enumerate() {
        ops.push(Op::Rot { qubit: q, axis: Axis::Y, angle: v.atan(), source: AngleSource::EncodeY(q) });
        ops.push(Op::Rot { qubit: q, axis: Axis::Z, angle: (v * v).atan(), source: AngleSource::EncodeZ(q) });
    }
    ops
}

fn variational_ops(params: &VqcParams) -> Vec<Op> {
    let mut ops = Vec::with_capacity(N_QUBITS + N_PARAMS);
    for (control, target) in RING {
        ops.push(Op::Cnot { control, target });
    }
    for q in 0..N_QUBITS {
        let (a, b, g) = params.wire(q);
        ops.push(Op::Rot { qubit: q, axis: Axis::Z, angle: a, source: AngleSource::Param(3 * q) });
        ops.push(Op::Rot { qubit: q, axis: Axis::Y, angle: b, source: AngleSource::Param(3 * q + 1) });
        ops.push(Op::Rot { qubit: q, axis: Axis::Z, angle: g, source: AngleSource::Param(3 * q + 2) });
    }
    ops
}

fn run(ops: &[Op], mut state: StateVector) -> StateVector {
    for op in ops {
        op.apply(&mut state);
    }
    state
}

/// Hadamards followed by the arctan-angle encoding rotations, from `|0000⟩`.
pub fn encode(x: &FeatureInput) -> StateVector {
    run(&encoding_ops(x), StateVector::zero())
}

/// CNOT ring followed by one general rotation per wire.
pub fn variational_block(state: &StateVector, params: &VqcParams) -> StateVector {
    run(&variational_ops(params), *state)
}

/// `(⟨Z_0⟩, ⟨Z_1⟩)` after encoding and the variational block.
pub fn vqc_forward(x: &FeatureInput, params: &VqcParams) -> [f64; 2] {
    let s = variational_block(&encode(x), params);
    [z_expectation(&s, MEASURED[0]), z_expectation(&s, MEASURED[1])]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VqcGradient {
    pub params: [f64; N_PARAMS],
    pub x: [f64; N_QUBITS],
}

/// Adjoint-method gradient of `Σ_j upstream_j · ⟨Z_j⟩`.
///
/// One forward pass, then a single reverse sweep that un-applies each gate
/// to both the state and the co-state.
pub fn vqc_backward(x: &FeatureInput, params: &VqcParams, upstream: &[f64; 2]) -> VqcGradient {
    let mut ops = encoding_ops(x);
    ops.extend(variational_ops(params));
    let mut psi = run(&ops, StateVector::zero());

    // λ = O ψ with O = Σ_j g_j Z_{measured_j}, diagonal in the computational basis
    let mut lambda = psi;
    for (i, a) in lambda.0.iter_mut().enumerate() {
        let w: f64 = MEASURED
            .iter()
            .zip(upstream)
            .map(|(&q, &g)| if i & bit(q) == 0 { g } else { -g })
            .sum();
        *a *= w;
    }

    let mut grad = VqcGradient {
        params: [0.0; N_PARAMS],
        x: [0.0; N_QUBITS],
    };
    for op in ops.iter().rev() {
        op.apply_inverse(&mut psi);
        if let Op::Rot { qubit, axis, angle, source } = *op {
            let mut mu = psi;
            apply_single_in_place(&mut mu, &Op::rotation_derivative(axis, angle), qubit);
            let d_angle = 2.0 * lambda.inner(&mu).re;
            match source {
                AngleSource::Param(j) => grad.params[j] += d_angle,
                AngleSource::EncodeY(q) => {
                    let v = x.0[q];
                    grad.x[q] += d_angle / (1.0 + v * v);
                }
                AngleSource::EncodeZ(q) => {
                    let v = x.0[q];
                    grad.x[q] += d_angle * 2.0 * v / (1.0 + v.powi(4));
                }
            }
        }
        op.apply_inverse(&mut lambda);
    }
    grad
}
