//! Brute-force oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls the sweep or adjoint code it is used to check.
#![allow(dead_code)]

use num_complex::Complex64;
use std::path::PathBuf;
use tnvqc::features::ProductState;
use tnvqc::mps::MpsModel;
use tnvqc::tensor::DenseTensor;

/// Contract the whole chain into one tensor, then sum it against the
/// product state over all 2^N physical configurations.
pub fn brute_force_mps(model: &MpsModel, input: &ProductState) -> Vec<f64> {
    let n = model.n_sites();
    let k = model.output_site();
    let d = model.output_dim();
    let as_bond_last = |i: usize| -> DenseTensor {
        let s = model.site(i);
        if i == k {
            // (l, 2, r, d) → (l, 2, d, r)
            s.permute(&[0, 1, 3, 2]).unwrap()
        } else {
            s.clone()
        }
    };
    let mut full = as_bond_last(0);
    for i in 1..n {
        let r = full.rank();
        full = full.contract(&as_bond_last(i), &[(r - 1, 0)]).unwrap();
    }
    // axes: [left boundary 1, s_0, …, (out after s_k), …, s_{n-1}, right boundary 1]
    let mut out = vec![0.0; d];
    for config in 0..(1usize << n) {
        let bits: Vec<usize> = (0..n).map(|i| (config >> (n - 1 - i)) & 1).collect();
        let weight: f64 = bits.iter().enumerate().map(|(i, &b)| input.sites()[i][b]).product();
        for (o, slot) in out.iter_mut().enumerate() {
            let mut idx = vec![0usize];
            for (i, &b) in bits.iter().enumerate() {
                idx.push(b);
                if i == k {
                    idx.push(o);
                }
            }
            idx.push(0);
            *slot += weight * full.get(&idx).unwrap();
        }
    }
    out
}

pub type CMat = Vec<Vec<Complex64>>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn mat2(m: [[Complex64; 2]; 2]) -> CMat {
    m.iter().map(|r| r.to_vec()).collect()
}

pub fn identity(n: usize) -> CMat {
    (0..n).map(|i| (0..n).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect()).collect()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0, 0.0); n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for p in 0..m {
                for q in 0..m {
                    out[i * m + p][j * m + q] = a[i][j] * b[p][q];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let n = a.len();
    let mut out = vec![vec![c(0.0, 0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn matvec(a: &CMat, v: &[Complex64]) -> Vec<Complex64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn add(a: &CMat, b: &CMat) -> CMat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

/// `I ⊗ … ⊗ U ⊗ … ⊗ I` with qubit 0 leftmost (most significant).
pub fn embed_single(u: &CMat, qubit: usize) -> CMat {
    let eye = identity(2);
    let mut out = identity(1);
    for q in 0..4 {
        out = kron(&out, if q == qubit { u } else { &eye });
    }
    out
}

pub fn embed_pair(ops: [(&CMat, usize); 2]) -> CMat {
    let mut out = identity(1);
    for q in 0..4 {
        let f = ops.iter().find(|(_, w)| *w == q).map(|(m, _)| (*m).clone()).unwrap_or_else(|| identity(2));
        out = kron(&out, &f);
    }
    out
}

/// `|0⟩⟨0|_c ⊗ I + |1⟩⟨1|_c ⊗ X_t`.
pub fn cnot_full(control: usize, target: usize) -> CMat {
    let p0 = mat2([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]);
    let p1 = mat2([[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]);
    let x = mat2([[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]);
    add(&embed_single(&p0, control), &embed_pair([(&p1, control), (&x, target)]))
}

pub fn o_h() -> CMat {
    let h = 1.0 / 2f64.sqrt();
    mat2([[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]])
}

pub fn o_ry(t: f64) -> CMat {
    mat2([[c((t / 2.0).cos(), 0.0), c(-(t / 2.0).sin(), 0.0)], [c((t / 2.0).sin(), 0.0), c((t / 2.0).cos(), 0.0)]])
}

pub fn o_rz(t: f64) -> CMat {
    mat2([[c((t / 2.0).cos(), -(t / 2.0).sin()), c(0.0, 0.0)], [c(0.0, 0.0), c((t / 2.0).cos(), (t / 2.0).sin())]])
}

/// Full 16×16 unitary of the whole circuit.
pub fn circuit_unitary(x: &[f64; 4], params: &[f64; 12]) -> CMat {
    let mut gates: Vec<CMat> = vec![];
    for q in 0..4 {
        gates.push(embed_single(&o_h(), q));
    }
    for q in 0..4 {
        gates.push(embed_single(&o_ry(x[q].atan()), q));
        gates.push(embed_single(&o_rz((x[q] * x[q]).atan()), q));
    }
    for (ctl, tgt) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
        gates.push(cnot_full(ctl, tgt));
    }
    for q in 0..4 {
        let (a, b, g) = (params[3 * q], params[3 * q + 1], params[3 * q + 2]);
        gates.push(embed_single(&matmul_small(&o_rz(g), &matmul_small(&o_ry(b), &o_rz(a))), q));
    }
    let mut u = identity(16);
    for g in &gates {
        u = matmul(g, &u);
    }
    u
}

pub fn matmul_small(a: &CMat, b: &CMat) -> CMat {
    matmul(a, b)
}

pub fn z_expect(state: &[Complex64], qubit: usize) -> f64 {
    let z = mat2([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]]);
    let zs = matvec(&embed_single(&z, qubit), state);
    state.iter().zip(&zs).map(|(a, b)| (a.conj() * b).re).sum()
}

pub fn oracle_forward(x: &[f64; 4], params: &[f64; 12]) -> [f64; 2] {
    let u = circuit_unitary(x, params);
    let mut e0 = vec![c(0.0, 0.0); 16];
    e0[0] = c(1.0, 0.0);
    let psi = matvec(&u, &e0);
    [z_expect(&psi, 0), z_expect(&psi, 1)]
}

/// MNIST directory: `$MNIST_DIR`, else `<workspace>/data/mnist`.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn mnist_available() -> bool {
    let d = mnist_dir();
    d.join(tnvqc::data::TRAIN_IMAGES).exists() && d.join(tnvqc::data::TEST_LABELS).exists()
}

/// Small IDX-style stand-in for MNIST: digit 3 lights up the top rows,
/// digit 6 the bottom rows, and every fifth sample is a distractor digit 1.
pub fn synthetic_raw(n: usize, seed: u64) -> (tnvqc::data::RawImages, Vec<u8>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n * 784);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 5 == 4 { 1 } else if rng.random_bool(0.5) { 3 } else { 6 };
        for row in 0..28 {
            for _ in 0..28 {
                let lit = match label {
                    3 => row < 12,
                    6 => row >= 16,
                    _ => row % 2 == 0,
                };
                let v: u8 = if lit && rng.random_bool(0.6) { rng.random_range(128..=255) } else { 0 };
                pixels.push(v);
            }
        }
        labels.push(label);
    }
    (tnvqc::data::RawImages { count: n, pixels }, labels)
}

/// Train/test binary datasets built from [`synthetic_raw`].
pub fn synthetic_split(n_train: usize, n_test: usize, seed: u64) -> (tnvqc::data::LabeledDataset, tnvqc::data::LabeledDataset) {
    use tnvqc::data::{filter_binary, Split};
    let (ri, rl) = synthetic_raw(n_train, seed);
    let (ti, tl) = synthetic_raw(n_test, seed + 1);
    (
        filter_binary(&ri, &rl, 3, 6, Split::Train).unwrap(),
        filter_binary(&ti, &tl, 3, 6, Split::Test).unwrap(),
    )
}
