//! Matrix product state over a chain of 2-dimensional physical sites.
//!
//! Site `i` holds a tensor of shape `(χ_left, 2, χ_right)`; the output site
//! additionally carries a trailing leg of extent `d_out` on which the
//! contraction result emerges. Contracting each site with its input
//! 2-vector leaves a chain of bond matrices, swept from both ends towards
//! the output site.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::ProductState;
use crate::tensor::DenseTensor;

/// Standard deviation of the initialization noise.
pub const INIT_NOISE_STD: f64 = 1e-2;

/// Environment norms outside `[ENV_MIN_NORM, ENV_MAX_NORM]` abort the sweep.
pub const ENV_MAX_NORM: f64 = 1e100;
pub const ENV_MIN_NORM: f64 = 1e-100;

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug)]
pub struct MpsModel {
    sites: Vec<DenseTensor>,
    bond_dim: usize,
    output_dim: usize,
    output_site: usize,
    id: u64,
    generation: u64,
}

impl Clone for MpsModel {
    fn clone(&self) -> Self {
        Self {
            sites: self.sites.clone(),
            bond_dim: self.bond_dim,
            output_dim: self.output_dim,
            output_site: self.output_site,
            id: fresh_id(),
            generation: 0,
        }
    }
}

impl PartialEq for MpsModel {
    fn eq(&self, other: &Self) -> bool {
        self.sites == other.sites && self.output_site == other.output_site && self.bond_dim == other.bond_dim
    }
}

/// Gradient of a scalar with respect to every site tensor, laid out as
/// one flat buffer in site order (the same order as [`MpsModel::flat_params`]).
#[derive(Clone, Debug, PartialEq)]
pub struct MpsGradient {
    shapes: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl MpsGradient {
    fn zeros_like(model: &MpsModel) -> Self {
        let shapes: Vec<Vec<usize>> = model.sites.iter().map(|s| s.shape().to_vec()).collect();
        let mut offsets = Vec::with_capacity(shapes.len() + 1);
        let mut total = 0;
        for s in &model.sites {
            offsets.push(total);
            total += s.len();
        }
        offsets.push(total);
        Self {
            shapes,
            offsets,
            data: vec![0.0; total],
        }
    }

    pub fn n_sites(&self) -> usize {
        self.shapes.len()
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn site_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn site_tensor(&self, i: usize) -> DenseTensor {
        DenseTensor::from_vec(self.shapes[i].clone(), self.site(i).to_vec()).expect("gradient shape is consistent")
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }
}

/// Everything the reverse sweep needs from a forward contraction.
#[derive(Clone, Debug)]
pub struct ContractionTrace {
    model_id: u64,
    generation: u64,
    inputs: Vec<[f64; 2]>,
    /// Site tensors contracted with their input vectors. The output site's
    /// entry keeps the output leg as its fastest index.
    bond_mats: Vec<Vec<f64>>,
    /// `lefts[i]` = product of bond matrices `0..i`, for `i ≤ output_site`.
    lefts: Vec<Vec<f64>>,
    /// `rights[i - output_site - 1]` = product of bond matrices `i..n`, for `i > output_site`.
    rights: Vec<Vec<f64>>,
    output: Vec<f64>,
    /// Bond-matrix products performed by the forward pass.
    pub products: usize,
}

impl ContractionTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Result of [`MpsModel::backward`].
#[derive(Clone, Debug)]
pub struct MpsBackward {
    pub grad: MpsGradient,
    /// Gradient with respect to each input site vector.
    pub input_grad: Vec<[f64; 2]>,
    /// Bond-matrix products performed by the reverse sweep.
    pub products: usize,
}

fn check_env(v: &[f64], site: usize, stage: &str) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm > ENV_MAX_NORM {
        return Err(Error::Numeric(format!(
            "{stage} environment overflow at site {site} (norm {norm:e})"
        )));
    }
    // an exactly-zero environment comes from an annihilating factor, not underflow
    if norm > 0.0 && norm < ENV_MIN_NORM {
        return Err(Error::Numeric(format!(
            "{stage} environment underflow at site {site} (norm {norm:e})"
        )));
    }
    Ok(())
}

impl MpsModel {
    /// Identity-plus-noise initialization.
    ///
    /// Every physical slice of every ordinary site starts as a (possibly
    /// rectangular) identity; the output site starts as pure noise.
    pub fn init(n_sites: usize, chi: usize, d_out: usize, output_site: usize, seed: u64) -> Result<Self> {
        Self::init_with_noise(n_sites, chi, d_out, output_site, seed, INIT_NOISE_STD)
    }

    pub fn init_with_noise(
        n_sites: usize,
        chi: usize,
        d_out: usize,
        output_site: usize,
        seed: u64,
        noise_std: f64,
    ) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::input("MPS needs at least one site"));
        }
        if chi == 0 {
            return Err(Error::input("bond dimension must be at least 1"));
        }
        if d_out == 0 {
            return Err(Error::input("output dimension must be at least 1"));
        }
        if output_site >= n_sites {
            return Err(Error::input(format!("output site {output_site} outside chain of {n_sites}")));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::input(format!("noise scale {noise_std} must be finite and nonnegative")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::input(e.to_string()))?;
        let mut noise = move || if noise_std == 0.0 { 0.0 } else { normal.sample(&mut rng) };

        let mut sites = Vec::with_capacity(n_sites);
        for i in 0..n_sites {
            let l = if i == 0 { 1 } else { chi };
            let r = if i + 1 == n_sites { 1 } else { chi };
            if i == output_site {
                let data = (0..l * 2 * r * d_out).map(|_| noise()).collect();
                sites.push(DenseTensor::from_vec(vec![l, 2, r, d_out], data)?);
            } else {
                let mut data = Vec::with_capacity(l * 2 * r);
                for a in 0..l {
                    for _s in 0..2 {
                        for b in 0..r {
                            data.push(if a == b { 1.0 } else { 0.0 } + noise());
                        }
                    }
                }
                sites.push(DenseTensor::from_vec(vec![l, 2, r], data)?);
            }
        }
        Self::from_sites(sites, output_site)
    }

    /// Assemble a model from explicit site tensors, checking the chain structure.
    pub fn from_sites(sites: Vec<DenseTensor>, output_site: usize) -> Result<Self> {
        let n = sites.len();
        if n == 0 {
            return Err(Error::input("MPS needs at least one site"));
        }
        if output_site >= n {
            return Err(Error::input(format!("output site {output_site} outside chain of {n}")));
        }
        let mut output_dim = 0;
        let mut bond_dim = 1;
        for (i, s) in sites.iter().enumerate() {
            let expected_rank = if i == output_site { 4 } else { 3 };
            if s.rank() != expected_rank {
                return Err(Error::dim(format!(
                    "site {i} has rank {}, expected {expected_rank}",
                    s.rank()
                )));
            }
            let sh = s.shape();
            if sh[1] != 2 {
                return Err(Error::dim(format!("site {i} physical extent {} ≠ 2", sh[1])));
            }
            if i == 0 && sh[0] != 1 {
                return Err(Error::dim("left boundary bond must be 1"));
            }
            if i + 1 == n && sh[2] != 1 {
                return Err(Error::dim("right boundary bond must be 1"));
            }
            if i + 1 < n && sh[2] != sites[i + 1].shape()[0] {
                return Err(Error::dim(format!(
                    "bond between sites {i} and {} mismatched ({} vs {})",
                    i + 1,
                    sh[2],
                    sites[i + 1].shape()[0]
                )));
            }
            bond_dim = bond_dim.max(sh[0]).max(sh[2]);
            if i == output_site {
                output_dim = sh[3];
            }
        }
        Ok(Self {
            sites,
            bond_dim,
            output_dim,
            output_site,
            id: fresh_id(),
            generation: 0,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn output_site(&self) -> usize {
        self.output_site
    }

    pub fn sites(&self) -> &[DenseTensor] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> &DenseTensor {
        &self.sites[i]
    }

    /// Mutable access to a site's entries. Invalidates outstanding traces.
    pub fn site_data_mut(&mut self, i: usize) -> &mut [f64] {
        self.generation += 1;
        self.sites[i].data_mut()
    }

    pub fn n_params(&self) -> usize {
        self.sites.iter().map(|s| s.len()).sum()
    }

    /// All entries, site by site, row-major within each site.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for s in &self.sites {
            out.extend_from_slice(s.data());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Usage(format!(
                "expected {} MPS parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for s in &mut self.sites {
            let n = s.len();
            s.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        self.generation += 1;
        Ok(())
    }

    /// Scale one site tensor in place.
    pub fn scale_site(&mut self, i: usize, factor: f64) {
        self.site_data_mut(i).iter_mut().for_each(|x| *x *= factor);
    }

    /// Contract with a product state. Returns the `d_out` output together
    /// with the cached environments for [`MpsModel::backward`].
    pub fn forward(&self, input: &ProductState) -> Result<ContractionTrace> {
        let n = self.n_sites();
        if input.len() != n {
            return Err(Error::input(format!("product state has {} sites, model has {n}", input.len())));
        }
        let k = self.output_site;
        let d = self.output_dim;
        let phys = input.sites();
        let mut products = 0;

        let bond_mats: Vec<Vec<f64>> = self
            .sites
            .iter()
            .zip(phys)
            .enumerate()
            .map(|(i, (site, phi))| {
                let sh = site.shape();
                let (l, r) = (sh[0], sh[2]);
                let inner = if i == k { r * d } else { r };
                let data = site.data();
                let mut m = vec![0.0; l * inner];
                for a in 0..l {
                    let s0 = &data[(a * 2) * inner..(a * 2 + 1) * inner];
                    let s1 = &data[(a * 2 + 1) * inner..(a * 2 + 2) * inner];
                    for ((o, &x0), &x1) in m[a * inner..(a + 1) * inner].iter_mut().zip(s0).zip(s1) {
                        *o = phi[0] * x0 + phi[1] * x1;
                    }
                }
                m
            })
            .collect();
        products += n;

        let mut lefts = Vec::with_capacity(k + 1);
        lefts.push(vec![1.0]);
        for i in 0..k {
            let r = self.sites[i].shape()[2];
            let next = vec_mat(&lefts[i], &bond_mats[i], r);
            check_env(&next, i, "left")?;
            lefts.push(next);
            products += 1;
        }

        let mut rights_rev = Vec::with_capacity(n - k);
        rights_rev.push(vec![1.0]);
        for i in (k + 1..n).rev() {
            let l = self.sites[i].shape()[0];
            let next = mat_vec(&bond_mats[i], rights_rev.last().unwrap(), l);
            check_env(&next, i, "right")?;
            rights_rev.push(next);
            products += 1;
        }
        rights_rev.reverse();
        // rights[j] now holds the product of bond matrices (k+1+j)..n, with one extra trailing [1.0]
        let rights = rights_rev;

        let sh = self.sites[k].shape();
        let (l, r) = (sh[0], sh[2]);
        let left = &lefts[k];
        let right = &rights[0];
        let mk = &bond_mats[k];
        let mut output = vec![0.0; d];
        for a in 0..l {
            for b in 0..r {
                let w = left[a] * right[b];
                let base = (a * r + b) * d;
                for (o, &x) in output.iter_mut().zip(&mk[base..base + d]) {
                    *o += w * x;
                }
            }
        }
        products += 1;
        if output.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite MPS output".into()));
        }

        Ok(ContractionTrace {
            model_id: self.id,
            generation: self.generation,
            inputs: phys.to_vec(),
            bond_mats,
            lefts,
            rights,
            output,
            products,
        })
    }

    /// Gradient of `⟨upstream, output⟩` with respect to all site tensors and
    /// all input vectors, in one reverse sweep over the cached environments.
    pub fn backward(&self, trace: &ContractionTrace, upstream: &[f64]) -> Result<MpsBackward> {
        if trace.model_id != self.id || trace.generation != self.generation {
            return Err(Error::Usage("contraction trace is stale: model changed since forward".into()));
        }
        let d = self.output_dim;
        if upstream.len() != d {
            return Err(Error::dim(format!("upstream gradient has length {}, expected {d}", upstream.len())));
        }
        let n = self.n_sites();
        let k = self.output_site;
        let mut grad = MpsGradient::zeros_like(self);
        let mut input_grad = vec![[0.0; 2]; n];
        let mut products = 0;

        // The environment guard is about the chain, not about how small the
        // incoming gradient happens to be (a confidently classified sample
        // sends e^{-margin}), so sweep with the upstream scaled by a power of
        // two and undo that exactly at the end.
        let peak = upstream.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !peak.is_finite() {
            return Err(Error::Numeric(format!("non-finite upstream gradient {upstream:?}")));
        }
        if peak == 0.0 {
            return Ok(MpsBackward {
                grad,
                input_grad,
                products,
            });
        }
        let unit = 2f64.powi((peak.log2().floor() as i32).clamp(-1022, 1023));
        let upstream: Vec<f64> = upstream.iter().map(|v| v / unit).collect();

        // bond-matrix gradient → site-tensor and input gradients
        let mut scatter = |i: usize, dm: &[f64], grad: &mut MpsGradient| {
            let site = &self.sites[i];
            let sh = site.shape();
            let (l, inner) = (sh[0], dm.len() / sh[0]);
            let phi = trace.inputs[i];
            let data = site.data();
            let g = &mut grad.data[grad.offsets[i]..grad.offsets[i + 1]];
            let mut dphi = [0.0; 2];
            for a in 0..l {
                let dmr = &dm[a * inner..(a + 1) * inner];
                for s in 0..2 {
                    let base = (a * 2 + s) * inner;
                    for (j, &x) in dmr.iter().enumerate() {
                        g[base + j] = phi[s] * x;
                        dphi[s] += data[base + j] * x;
                    }
                }
            }
            input_grad[i] = dphi;
        };

        let sh = self.sites[k].shape();
        let (lk, rk) = (sh[0], sh[2]);
        let left_k = &trace.lefts[k];
        let right_k = &trace.rights[0];
        let mk = &trace.bond_mats[k];

        let mut dmk = vec![0.0; lk * rk * d];
        // E[a] = Σ_{b,o} g_o M_k[a,b,o] R[b];  F[b] = Σ_{a,o} g_o L[a] M_k[a,b,o]
        let mut e = vec![0.0; lk];
        let mut f = vec![0.0; rk];
        for a in 0..lk {
            for b in 0..rk {
                let base = (a * rk + b) * d;
                let mut gm = 0.0;
                for o in 0..d {
                    dmk[base + o] = upstream[o] * left_k[a] * right_k[b];
                    gm += upstream[o] * mk[base + o];
                }
                e[a] += gm * right_k[b];
                f[b] += gm * left_k[a];
            }
        }
        scatter(k, &dmk, &mut grad);
        products += 2;

        for i in (0..k).rev() {
            check_env(&e, i, "backward-left")?;
            let r = self.sites[i].shape()[2];
            let left = &trace.lefts[i];
            let dm = outer(left, &e);
            scatter(i, &dm, &mut grad);
            e = mat_vec(&trace.bond_mats[i], &e, left.len());
            debug_assert_eq!(dm.len(), left.len() * r);
            products += 2;
        }

        for i in k + 1..n {
            check_env(&f, i, "backward-right")?;
            let right = &trace.rights[i - k];
            let dm = outer(&f, right);
            scatter(i, &dm, &mut grad);
            f = vec_mat(&f, &trace.bond_mats[i], right.len());
            products += 2;
        }

        if unit != 1.0 {
            grad.data.iter_mut().for_each(|g| *g *= unit);
            for v in input_grad.iter_mut().flatten() {
                *v *= unit;
            }
        }
        Ok(MpsBackward {
            grad,
            input_grad,
            products,
        })
    }

    /// Forward pass interpreted as two class scores.
    pub fn classify_logits(&self, input: &ProductState) -> Result<[f64; 2]> {
        if self.output_dim != 2 {
            return Err(Error::Config(format!(
                "classifier needs an output leg of extent 2, model has {}",
                self.output_dim
            )));
        }
        let t = self.forward(input)?;
        Ok([t.output[0], t.output[1]])
    }
}

/// Row vector times row-major matrix with `cols` columns.
fn vec_mat(v: &[f64], m: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (a, &va) in v.iter().enumerate() {
        for (o, &x) in out.iter_mut().zip(&m[a * cols..(a + 1) * cols]) {
            *o += va * x;
        }
    }
    out
}

/// Row-major matrix with `rows` rows times column vector.
fn mat_vec(m: &[f64], v: &[f64], rows: usize) -> Vec<f64> {
    let cols = v.len();
    (0..rows)
        .map(|a| m[a * cols..(a + 1) * cols].iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn outer(u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len() * v.len());
    for &a in u {
        out.extend(v.iter().map(|&b| a * b));
    }
    out
}
