//! Binary model checkpoints.
//!
//! Layout (all integers `u32`, all reals `f64`, little-endian):
//!
//! ```text
//! magic "TNVQCKPT" | version | mode | n_sites | chi | d_out | output_site
//! MPS block   : site tensors in site order, row-major        (MPS modes)
//! VQC block   : 12 angles (α, β, γ per wire)                 (circuit modes)
//! PCA block   : dim | k | mean[dim] | components[k][dim] | variances[k]   (pca-vqc)
//! ```
//!
//! Site shapes are implied by the header: boundary bonds are 1, every
//! interior bond equals `chi`, and the output site carries a trailing leg of
//! extent `d_out`. The MPS header fields are zero when there is no MPS.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::PcaModel;
use crate::mps::MpsModel;
use crate::tensor::DenseTensor;
use crate::training::{HybridModel, Mode};
use crate::vqc::{VqcParams, N_PARAMS};

pub const MAGIC: &[u8; 8] = b"TNVQCKPT";
pub const VERSION: u32 = 1;

fn mode_code(mode: Mode) -> u32 {
    match mode {
        Mode::PcaVqc => 0,
        Mode::MpsClassifier => 1,
        Mode::MpsVqc => 2,
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn site_shape(i: usize, n: usize, chi: usize, d_out: usize, output_site: usize) -> Vec<usize> {
    let l = if i == 0 { 1 } else { chi };
    let r = if i + 1 == n { 1 } else { chi };
    if i == output_site {
        vec![l, 2, r, d_out]
    } else {
        vec![l, 2, r]
    }
}

pub fn encode(model: &HybridModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, mode_code(model.mode()));
    match model.mps() {
        Some(m) => {
            let (n, chi, d, k) = (m.n_sites(), m.bond_dim(), m.output_dim(), m.output_site());
            for (i, s) in m.sites().iter().enumerate() {
                if s.shape() != site_shape(i, n, chi, d, k).as_slice() {
                    return Err(Error::Usage(format!(
                        "site {i} has non-uniform bonds {:?}; checkpoints need every interior bond = {chi}",
                        s.shape()
                    )));
                }
            }
            for v in [n, chi, d, k] {
                put_u32(&mut out, v as u32);
            }
            for s in m.sites() {
                put_f64s(&mut out, s.data());
            }
        }
        None => (0..4).for_each(|_| put_u32(&mut out, 0)),
    }
    if let Some(v) = model.vqc() {
        put_f64s(&mut out, v.as_slice());
    }
    if let HybridModel::PcaVqc { pca, .. } = model {
        put_u32(&mut out, pca.dim() as u32);
        put_u32(&mut out, pca.components.len() as u32);
        put_f64s(&mut out, &pca.mean);
        for c in &pca.components {
            put_f64s(&mut out, c);
        }
        put_f64s(&mut out, &pca.explained_variances);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let s = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::format(self.pos as u64, format!("truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::format(self.pos as u64, format!("{what} too large")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<HybridModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::format(0, "bad checkpoint magic"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(8, format!("unsupported checkpoint version {version}")));
    }
    let mode = match r.u32("mode")? {
        0 => Mode::PcaVqc,
        1 => Mode::MpsClassifier,
        2 => Mode::MpsVqc,
        m => return Err(Error::format(12, format!("unknown mode code {m}"))),
    };
    let header_pos = r.pos as u64;
    let n = r.u32("n_sites")? as usize;
    let chi = r.u32("chi")? as usize;
    let d_out = r.u32("d_out")? as usize;
    let k = r.u32("output_site")? as usize;

    let mps = if mode.uses_mps() {
        let expected_d = if mode == Mode::MpsClassifier { 2 } else { 4 };
        if n == 0 || chi == 0 || d_out != expected_d || k >= n {
            return Err(Error::format(
                header_pos,
                format!("invalid MPS header: n_sites={n}, chi={chi}, d_out={d_out}, output_site={k}"),
            ));
        }
        let mut sites = Vec::with_capacity(n);
        for i in 0..n {
            let shape = site_shape(i, n, chi, d_out, k);
            let len = shape.iter().product();
            let data = r.f64s(len, &format!("site {i}"))?;
            sites.push(DenseTensor::from_vec(shape, data)?);
        }
        Some(MpsModel::from_sites(sites, k)?)
    } else {
        if n != 0 || chi != 0 || d_out != 0 || k != 0 {
            return Err(Error::format(header_pos, "MPS header fields set for a model without MPS"));
        }
        None
    };

    let vqc = if mode.uses_vqc() {
        let pos = r.pos as u64;
        Some(VqcParams::from_slice(&r.f64s(N_PARAMS, "circuit parameters")?).map_err(|e| Error::format(pos, e.to_string()))?)
    } else {
        None
    };

    let model = match mode {
        Mode::PcaVqc => {
            let dim = r.u32("PCA dim")? as usize;
            let kc = r.u32("PCA component count")? as usize;
            let mean = r.f64s(dim, "PCA mean")?;
            let components = (0..kc)
                .map(|c| r.f64s(dim, &format!("PCA component {c}")))
                .collect::<Result<Vec<_>>>()?;
            let explained_variances = r.f64s(kc, "PCA variances")?;
            HybridModel::PcaVqc {
                pca: PcaModel {
                    mean,
                    components,
                    explained_variances,
                },
                vqc: vqc.expect("circuit mode"),
            }
        }
        Mode::MpsClassifier => HybridModel::MpsClassifier {
            mps: mps.expect("mps mode"),
        },
        Mode::MpsVqc => HybridModel::MpsVqc {
            mps: mps.expect("mps mode"),
            vqc: vqc.expect("circuit mode"),
        },
    };
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}

pub fn save(path: impl AsRef<Path>, model: &HybridModel) -> Result<()> {
    std::fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<HybridModel> {
    decode(&std::fs::read(path)?)
}
