//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 5–9 train on MNIST 3-vs-6 from `$MNIST_DIR` (default
//! `data/mnist` in the workspace) and take several minutes on one core.
//! Failed training criteria print their full metric curves. The process
//! exits 0 so the rest of `cargo test` still runs; set
//! `TNVQC_ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::{brute_force_mps, mnist_available, mnist_dir, oracle_forward};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnvqc::data::{load_binary_mnist, BinaryMnist};
use tnvqc::features::{embed_image, ImageVector, IMAGE_PIXELS};
use tnvqc::gradcheck::{check_end_to_end, check_vqc_parameter_shift, random_mps_case, random_vqc_case};
use tnvqc::training::{metrics_csv, train, EpochMetrics, Mode, TrainConfig};
use tnvqc::vqc::{apply_cnot, apply_single, cnot, hadamard, rot, ry, rz, vqc_forward, Mat2, StateVector};

/// Mini-batch size for the hybrid runs, chosen by lowest final training loss
/// among 2, 5, 10 (χ=1, seed 0).
const HYBRID_BATCH: usize = 2;

struct Verdict {
    pass: bool,
    detail: String,
    curves: Vec<(String, Vec<EpochMetrics>)>,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
            curves: vec![],
        }
    }
}

fn report(id: usize, name: &str, v: &Verdict) -> bool {
    println!("[{}] {id}. {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    if !v.pass {
        for (label, m) in &v.curves {
            println!("    curve: {label}");
            for line in metrics_csv(m).lines() {
                println!("      {line}");
            }
        }
    }
    v.pass
}

fn tn_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let chi = rng.random_range(1..=4);
        let d_out = if rng.random_bool(0.5) { 2 } else { 4 };
        let (m, state, _) = random_mps_case(&mut rng, n, chi, d_out);
        let got = m.forward(&state).expect("forward");
        for (a, b) in got.output().iter().zip(brute_force_mps(&m, &state)) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        worst < 1e-10 && secs < 10.0,
        format!("max |Δ| {worst:.2e} over 200 chains (N ≤ 8, χ ≤ 4) in {secs:.2} s; need < 1e-10, < 10 s"),
    )
}

fn vqc_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (x, p, _) = random_vqc_case(&mut rng);
        let got = vqc_forward(&x, &p);
        let want = oracle_forward(x.values(), p.as_slice());
        worst = worst.max((got[0] - want[0]).abs()).max((got[1] - want[1]).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        worst < 1e-12 && secs < 10.0,
        format!("max |Δ| {worst:.2e} over 1000 circuits in {secs:.2} s; need < 1e-12, < 10 s"),
    )
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let shift = check_vqc_parameter_shift(200, 1003);
    let e2e = match check_end_to_end(100, 1003) {
        Ok(r) => r,
        Err(e) => return Verdict::new(false, format!("end-to-end probe failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        shift.max_error < 1e-10 && e2e.max_error < 1e-4 && e2e.samples >= 100 && secs < 60.0,
        format!(
            "adjoint vs shift {:.2e} (< 1e-10); end-to-end rel {:.2e} on {} probes (< 1e-4, worst {}); {secs:.1} s (< 60 s)",
            shift.max_error, e2e.max_error, e2e.samples, e2e.worst
        ),
    )
}

fn unitarity_error(g: &[Vec<Complex64>]) -> f64 {
    let n = g.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let s: Complex64 = (0..n).map(|k| g[k][i].conj() * g[k][j]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - Complex64::new(want, 0.0)).norm());
        }
    }
    worst
}

fn rows2(m: &Mat2) -> Vec<Vec<Complex64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

fn normalization() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let mut gate_err = unitarity_error(&rows2(&hadamard()));
    gate_err = gate_err.max(unitarity_error(&cnot().iter().map(|r| r.to_vec()).collect::<Vec<_>>()));
    for _ in 0..1000 {
        let t = rng.random_range(-4.0 * PI..4.0 * PI);
        gate_err = gate_err.max(unitarity_error(&rows2(&ry(t).unwrap())));
        gate_err = gate_err.max(unitarity_error(&rows2(&rz(t).unwrap())));
        let (a, b, c) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        gate_err = gate_err.max(unitarity_error(&rows2(&rot(a, b, c).unwrap())));
    }

    let mut drift = 0.0f64;
    for _ in 0..10_000 {
        let mut psi = StateVector::zero();
        for _ in 0..50 {
            psi = match rng.random_range(0..4) {
                0 => {
                    let c = rng.random_range(0..4);
                    let t = (c + rng.random_range(1..4)) % 4;
                    apply_cnot(&psi, c, t).unwrap()
                }
                1 => apply_single(&psi, &hadamard(), rng.random_range(0..4)).unwrap(),
                _ => {
                    let g = rot(rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI)).unwrap();
                    apply_single(&psi, &g, rng.random_range(0..4)).unwrap()
                }
            };
        }
        drift = drift.max((psi.amplitudes().iter().map(|a| a.norm_sqr()).sum::<f64>() - 1.0).abs());
    }

    let mut site_err = 0.0f64;
    for _ in 0..100 {
        let px: Vec<f64> = (0..IMAGE_PIXELS).map(|_| rng.random_range(0.0..=1.0)).collect();
        for s in embed_image(&ImageVector::new(px).unwrap()).sites() {
            site_err = site_err.max(((s[0] * s[0] + s[1] * s[1]).sqrt() - 1.0).abs());
        }
    }
    Verdict::new(
        gate_err < 1e-12 && drift < 1e-10 && site_err < 1e-12,
        format!(
            "‖U†U − I‖ {gate_err:.2e} (< 1e-12); norm drift {drift:.2e} over 10^4 × 50 gates (< 1e-10); site norm {site_err:.2e} (< 1e-12)"
        ),
    )
}

struct Run {
    label: String,
    metrics: Vec<EpochMetrics>,
    wall: f64,
}

impl Run {
    fn last(&self) -> &EpochMetrics {
        self.metrics.last().expect("at least one epoch")
    }

    fn best_test_acc(&self) -> f64 {
        self.metrics.iter().map(|m| m.test_acc).fold(0.0, f64::max)
    }

    fn min_test_loss(&self) -> f64 {
        self.metrics.iter().map(|m| m.test_loss).fold(f64::INFINITY, f64::min)
    }
}

fn run(data: &BinaryMnist, mode: Mode, chi: Option<usize>, batch: Option<usize>) -> Result<Run, String> {
    let mut c = TrainConfig::defaults(mode);
    if mode.uses_mps() {
        c.chi = chi;
    }
    if let Some(b) = batch {
        c.batch_size = b;
    }
    let label = format!(
        "{mode} χ={} batch={} lr={} {} seed={} epochs={}",
        chi.map_or("-".into(), |v| v.to_string()),
        c.batch_size,
        c.learning_rate,
        c.optimizer,
        c.seed,
        c.epochs
    );
    eprintln!("acceptance: training {label}");
    let out = train(&c, &data.train, &data.test, |_| {}).map_err(|e| format!("{label}: {e}"))?;
    Ok(Run {
        label,
        metrics: out.metrics,
        wall: out.wall_seconds,
    })
}

fn failed_run(e: String) -> Verdict {
    Verdict::new(false, format!("training aborted: {e}"))
}

fn main() {
    let mut results = vec![];
    results.push(report(1, "MPS contraction vs full-network oracle", &tn_oracle()));
    results.push(report(2, "circuit vs 16×16 unitary oracle", &vqc_oracle()));
    results.push(report(3, "gradient suite", &gradients()));
    results.push(report(4, "unitarity and normalization", &normalization()));

    let data = if mnist_available() {
        load_binary_mnist(mnist_dir(), (3, 6)).map_err(|e| e.to_string())
    } else {
        Err(format!("MNIST files not found under {}", mnist_dir().display()))
    };
    match data {
        Err(why) => {
            for (id, name) in [
                (5, "hybrid and PCA baseline accuracy"),
                (6, "MPS classifier plateau and overfitting"),
                (7, "hybrid χ=2 stability"),
                (8, "PCA baseline early saturation"),
                (9, "bitwise reproducibility"),
            ] {
                println!("[FAIL] {id}. {name}: skipped, {why}");
                results.push(false);
            }
        }
        Ok(data) => {
            let hybrid1 = run(&data, Mode::MpsVqc, Some(1), Some(HYBRID_BATCH));
            let pca = run(&data, Mode::PcaVqc, None, None);
            results.push(report(5, "hybrid and PCA baseline accuracy", &match (&hybrid1, &pca) {
                (Ok(h), Ok(p)) => {
                    let (best, loss) = (h.best_test_acc(), h.last().test_loss);
                    let pacc = p.last().test_acc;
                    let mut v = Verdict::new(
                        best >= 0.99 && loss <= 0.34 && (0.85..=0.90).contains(&pacc) && h.wall <= 1800.0 && p.wall <= 1800.0,
                        format!(
                            "MPS-VQC χ=1 best test acc {:.4} (≥ 0.99), final test loss {loss:.4} (≤ 0.34), {:.0} s; PCA-VQC final test acc {pacc:.4} (in [0.85, 0.90]), {:.0} s",
                            best, h.wall, p.wall
                        ),
                    );
                    v.curves = vec![(h.label.clone(), h.metrics.clone()), (p.label.clone(), p.metrics.clone())];
                    v
                }
                (Err(e), _) | (_, Err(e)) => failed_run(e.clone()),
            }));

            let cls1 = run(&data, Mode::MpsClassifier, Some(1), None);
            let cls2 = run(&data, Mode::MpsClassifier, Some(2), None);
            results.push(report(6, "MPS classifier plateau and overfitting", &match (&cls1, &cls2) {
                (Ok(a), Ok(b)) => {
                    let plateau = a.last().test_acc;
                    let train_best = b.metrics.iter().map(|m| m.train_acc).fold(0.0, f64::max);
                    let rise = b.last().test_loss / b.min_test_loss();
                    let mut v = Verdict::new(
                        (0.66..=0.72).contains(&plateau) && train_best >= 0.98 && rise >= 1.05,
                        format!(
                            "χ=1 final test acc {plateau:.4} (in [0.66, 0.72]); χ=2 best train acc {train_best:.4} (≥ 0.98), final/min test loss {rise:.3} (≥ 1.05)"
                        ),
                    );
                    v.curves = vec![(a.label.clone(), a.metrics.clone()), (b.label.clone(), b.metrics.clone())];
                    v
                }
                (Err(e), _) | (_, Err(e)) => failed_run(e.clone()),
            }));

            let hybrid2 = run(&data, Mode::MpsVqc, Some(2), Some(HYBRID_BATCH));
            results.push(report(7, "hybrid χ=2 stability", &match &hybrid2 {
                Ok(h) => {
                    let ratio = h.last().test_loss / h.min_test_loss();
                    let mut v = Verdict::new(
                        h.metrics.len() == 30 && ratio <= 1.10,
                        format!(
                            "{} epochs, final test loss {:.4} vs running min {:.4} (ratio {ratio:.3}, ≤ 1.10)",
                            h.metrics.len(),
                            h.last().test_loss,
                            h.min_test_loss()
                        ),
                    );
                    v.curves = vec![(h.label.clone(), h.metrics.clone())];
                    v
                }
                Err(e) => failed_run(e.clone()),
            }));

            results.push(report(8, "PCA baseline early saturation", &match &pca {
                Ok(p) => {
                    let by5 = p.metrics.iter().take(5).map(|m| m.test_acc).fold(0.0, f64::max);
                    let fin = p.last().test_acc;
                    let mut v = Verdict::new(
                        by5 >= 0.95 * fin,
                        format!("best test acc within 5 epochs {by5:.4} vs final {fin:.4} (ratio {:.3}, ≥ 0.95)", by5 / fin),
                    );
                    v.curves = vec![(p.label.clone(), p.metrics.clone())];
                    v
                }
                Err(e) => failed_run(e.clone()),
            }));

            results.push(report(9, "bitwise reproducibility", &reproducibility(&data)));
        }
    }

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed < results.len() && std::env::var_os("TNVQC_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

/// Two independent short runs per mode, written to disk and compared byte
/// for byte.
fn reproducibility(data: &BinaryMnist) -> Verdict {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Verdict::new(false, format!("no temp dir: {e}")),
    };
    let mut small = data.clone();
    small.train.images.truncate(1000);
    small.train.labels.truncate(1000);
    small.train.source_indices.truncate(1000);
    let mut checked = vec![];
    for mode in [Mode::PcaVqc, Mode::MpsClassifier, Mode::MpsVqc] {
        let mut c = TrainConfig::defaults(mode);
        c.epochs = 2;
        c.batch_size = 20;
        let mut files = vec![];
        for rep in 0..2 {
            let m = match train(&c, &small.train, &small.test, |_| {}) {
                Ok(o) => o.metrics,
                Err(e) => return Verdict::new(false, format!("{mode}: {e}")),
            };
            let path = dir.path().join(format!("{mode}-{rep}.csv"));
            if let Err(e) = tnvqc::training::write_metrics_csv(&path, &m) {
                return Verdict::new(false, format!("{mode}: {e}"));
            }
            files.push(std::fs::read(&path).expect("just written"));
        }
        if files[0] != files[1] {
            return Verdict::new(false, format!("{mode}: metrics.csv differs between identical runs"));
        }
        checked.push(mode.to_string());
    }
    Verdict::new(true, format!("identical metrics.csv bytes for {} (1 worker)", checked.join(", ")))
}
