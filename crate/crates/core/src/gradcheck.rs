//! Independent gradient oracles: central finite differences and the
//! parameter-shift rule. These never touch the adjoint or reverse-sweep
//! code paths; they only call forward evaluations.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::features::{ImageVector, ProductState, IMAGE_PIXELS};
use crate::mps::MpsModel;
use crate::tensor::DenseTensor;
use crate::training::{seeded_rng, HybridModel};
use crate::vqc::{vqc_backward, vqc_forward, FeatureInput, VqcParams, N_PARAMS, N_QUBITS};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Gradient magnitudes below this are compared absolutely rather than
/// relatively; round-off in a central difference with step 1e-6 is ~1e-10.
pub const REL_FLOOR: f64 = 1e-4;

pub const MPS_TOL: f64 = 1e-5;
pub const VQC_FD_TOL: f64 = 1e-5;
pub const PARAM_SHIFT_TOL: f64 = 1e-10;
pub const END_TO_END_TOL: f64 = 1e-4;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Worst disagreement seen by one oracle suite.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
    /// Human-readable location of the worst entry.
    pub worst: String,
    pub samples: usize,
}

impl CheckResult {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            max_error: 0.0,
            tolerance,
            worst: String::new(),
            samples: 0,
        }
    }

    fn record(&mut self, err: f64, at: impl FnOnce() -> String) {
        self.samples += 1;
        if err > self.max_error || err.is_nan() {
            self.max_error = err;
            self.worst = at();
        }
    }

    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }
}

fn central<F: FnMut(f64) -> Result<f64>>(x0: f64, mut f: F) -> Result<f64> {
    Ok((f(x0 + FD_STEP)? - f(x0 - FD_STEP)?) / (2.0 * FD_STEP))
}

/// `Σ_j upstream_j · ⟨Z_j⟩`.
fn weighted_output(x: &FeatureInput, p: &VqcParams, upstream: &[f64; 2]) -> f64 {
    let o = vqc_forward(x, p);
    upstream[0] * o[0] + upstream[1] * o[1]
}

/// Parameter-shift gradient with respect to the twelve circuit angles.
pub fn parameter_shift_grad(x: &FeatureInput, params: &VqcParams, upstream: &[f64; 2]) -> [f64; N_PARAMS] {
    let mut g = [0.0; N_PARAMS];
    for (j, gj) in g.iter_mut().enumerate() {
        let mut plus = *params.as_slice();
        let mut minus = plus;
        plus[j] += FRAC_PI_2;
        minus[j] -= FRAC_PI_2;
        let fp = weighted_output(x, &VqcParams::new(plus).expect("finite"), upstream);
        let fm = weighted_output(x, &VqcParams::new(minus).expect("finite"), upstream);
        *gj = (fp - fm) / 2.0;
    }
    g
}

pub fn random_vqc_case(rng: &mut ChaCha8Rng) -> (FeatureInput, VqcParams, [f64; 2]) {
    let normal = Normal::new(0.0, 1.5).expect("valid normal");
    let x: [f64; N_QUBITS] = std::array::from_fn(|_| normal.sample(rng));
    let p: [f64; N_PARAMS] = std::array::from_fn(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
    let up = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    (FeatureInput::new(x).expect("finite"), VqcParams::new(p).expect("finite"), up)
}

/// Adjoint circuit gradient against the parameter-shift rule (absolute error).
pub fn check_vqc_parameter_shift(trials: usize, seed: u64) -> CheckResult {
    let mut rng = seeded_rng(seed, 10);
    let mut res = CheckResult::new("vqc adjoint vs parameter-shift", PARAM_SHIFT_TOL);
    for t in 0..trials {
        let (x, p, up) = random_vqc_case(&mut rng);
        let adj = vqc_backward(&x, &p, &up);
        let ps = parameter_shift_grad(&x, &p, &up);
        for j in 0..N_PARAMS {
            res.record((adj.params[j] - ps[j]).abs(), || format!("trial {t}, vqc.param[{j}]"));
        }
    }
    res
}

/// Adjoint circuit gradient (angles and inputs) against central differences.
pub fn check_vqc_finite_difference(trials: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = seeded_rng(seed, 11);
    let mut res = CheckResult::new("vqc adjoint vs finite differences", VQC_FD_TOL);
    for t in 0..trials {
        let (x, p, up) = random_vqc_case(&mut rng);
        let adj = vqc_backward(&x, &p, &up);
        for j in 0..N_PARAMS {
            let fd = central(p.as_slice()[j], |v| {
                let mut a = *p.as_slice();
                a[j] = v;
                Ok(weighted_output(&x, &VqcParams::new(a)?, &up))
            })?;
            res.record(relative_error(adj.params[j], fd), || format!("trial {t}, vqc.param[{j}]"));
        }
        for q in 0..N_QUBITS {
            let fd = central(x.values()[q], |v| {
                let mut a = *x.values();
                a[q] = v;
                Ok(weighted_output(&FeatureInput::new(a)?, &p, &up))
            })?;
            res.record(relative_error(adj.x[q], fd), || format!("trial {t}, vqc.x[{q}]"));
        }
    }
    Ok(res)
}

/// Random chain with Gaussian entries and random unit input vectors.
pub fn random_mps_case(rng: &mut ChaCha8Rng, n: usize, chi: usize, d_out: usize) -> (MpsModel, ProductState, Vec<f64>) {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let k = rng.random_range(0..n);
    let sites = (0..n)
        .map(|i| {
            let l = if i == 0 { 1 } else { chi };
            let r = if i + 1 == n { 1 } else { chi };
            let shape = if i == k { vec![l, 2, r, d_out] } else { vec![l, 2, r] };
            let len: usize = shape.iter().product();
            DenseTensor::from_vec(shape, (0..len).map(|_| normal.sample(rng)).collect()).expect("valid shape")
        })
        .collect();
    let model = MpsModel::from_sites(sites, k).expect("valid chain");
    let input = ProductState::from_sites(
        (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                [a.cos(), a.sin()]
            })
            .collect(),
    );
    let upstream = (0..d_out).map(|_| normal.sample(rng)).collect();
    (model, input, upstream)
}

/// Reverse-sweep MPS gradient (sites and inputs) against central differences.
pub fn check_mps_finite_difference(trials: usize, seed: u64, n: usize, chi: usize) -> Result<CheckResult> {
    let mut rng = seeded_rng(seed, 12);
    let mut res = CheckResult::new("mps reverse sweep vs finite differences", MPS_TOL);
    for t in 0..trials {
        let d_out = if t % 2 == 0 { 2 } else { 4 };
        let (model, input, up) = random_mps_case(&mut rng, n, chi, d_out);
        let trace = model.forward(&input)?;
        let back = model.backward(&trace, &up)?;
        let objective = |m: &MpsModel, s: &ProductState| -> Result<f64> {
            let o = m.forward(s)?;
            Ok(o.output().iter().zip(&up).map(|(a, b)| a * b).sum())
        };
        for i in 0..n {
            for e in 0..model.site(i).len() {
                let mut probe = model.clone();
                let x0 = probe.site(i).data()[e];
                let fd = central(x0, |v| {
                    probe.site_data_mut(i)[e] = v;
                    objective(&probe, &input)
                })?;
                res.record(relative_error(back.grad.site(i)[e], fd), || format!("trial {t}, mps.site[{i}][{e}]"));
            }
            for s in 0..2 {
                let x0 = input.sites()[i][s];
                let fd = central(x0, |v| {
                    let mut sites = input.sites().to_vec();
                    sites[i][s] = v;
                    objective(&model, &ProductState::from_sites(sites))
                })?;
                res.record(relative_error(back.input_grad[i][s], fd), || format!("trial {t}, input[{i}][{s}]"));
            }
        }
    }
    Ok(res)
}

/// A full-size MPS→circuit model whose features are O(1) on `image`, with
/// trained-looking (non-identity) circuit angles.
pub fn probe_pipeline(seed: u64, chi: usize) -> Result<(HybridModel, ImageVector, u8)> {
    let mut rng = seeded_rng(seed, 13);
    let pixels: Vec<f64> = (0..IMAGE_PIXELS)
        .map(|_| if rng.random_bool(0.2) { rng.random_range(0.0..1.0) } else { 0.0 })
        .collect();
    let image = ImageVector::new(pixels)?;
    let label = u8::from(rng.random_bool(0.5));

    let mut mps = MpsModel::init_with_noise(IMAGE_PIXELS, chi, 4, IMAGE_PIXELS / 2, rng.random(), 0.05)?;
    // rescale so the largest feature has magnitude ~1.5
    let out = mps.forward(&crate::features::embed_image(&image))?;
    let scale = out.output().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    mps.scale_site(IMAGE_PIXELS / 2, 1.5 / scale);
    let vqc: [f64; N_PARAMS] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
    Ok((
        HybridModel::MpsVqc {
            mps,
            vqc: VqcParams::new(vqc)?,
        },
        image,
        label,
    ))
}

/// Full pipeline (MPS → circuit → loss) against central differences on
/// randomly chosen parameters, mixing MPS entries and circuit angles.
pub fn check_end_to_end(probes: usize, seed: u64) -> Result<CheckResult> {
    let mut res = CheckResult::new("end-to-end MPS+VQC+loss vs finite differences", END_TO_END_TOL);
    let mut rng = seeded_rng(seed, 14);
    let per_model = 20;
    let mut done = 0;
    let mut round = 0u64;
    while done < probes {
        let chi = 1 + (round as usize % 2);
        let (model, image, label) = probe_pipeline(seed.wrapping_add(round), chi)?;
        round += 1;
        let grad = model.sample_grad(&image, label)?.grad;
        let base = model.flat_params();
        let n = base.len();
        let n_mps = n - N_PARAMS;
        let mut probe = model.clone();
        for p in 0..per_model.min(probes - done) {
            // alternate between circuit angles and MPS entries
            let j = if p % 4 == 0 {
                n_mps + rng.random_range(0..N_PARAMS)
            } else {
                rng.random_range(0..n_mps)
            };
            let fd = central(base[j], |v| {
                let mut params = base.clone();
                params[j] = v;
                probe.set_flat_params(&params)?;
                probe.sample_loss(&image, label)
            })?;
            let what = if j >= n_mps {
                format!("chi {chi}: vqc.param[{}]", j - n_mps)
            } else {
                format!("chi {chi}: mps.flat[{j}]")
            };
            res.record(relative_error(grad[j], fd), || what);
            done += 1;
        }
    }
    Ok(res)
}

/// Everything `gradcheck` runs.
pub fn run_all(trials: usize, seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_mps_finite_difference(trials, seed, 8, 2)?,
        check_vqc_parameter_shift(trials, seed),
        check_vqc_finite_difference(trials, seed)?,
        check_end_to_end(trials.max(20), seed)?,
    ])
}
