//! Pixel normalization, the cos/sin product-state embedding and the PCA
//! baseline extractor.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixels per MNIST image (28×28).
pub const IMAGE_PIXELS: usize = 784;

/// Number of principal directions kept by the baseline extractor.
pub const PCA_COMPONENTS: usize = 4;

/// A flattened image with every pixel in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageVector(Vec<f64>);

impl ImageVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != IMAGE_PIXELS {
            return Err(Error::input(format!(
                "image has {} pixels, expected {IMAGE_PIXELS}",
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::input(format!("pixel {i} = {v} outside [0, 1]")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Scale raw bytes to `[0, 1]` by dividing by 255.
pub fn normalize_pixels(raw: &[u32]) -> Result<ImageVector> {
    if raw.len() != IMAGE_PIXELS {
        return Err(Error::input(format!("image has {} pixels, expected {IMAGE_PIXELS}", raw.len())));
    }
    let mut out = Vec::with_capacity(IMAGE_PIXELS);
    for (i, &b) in raw.iter().enumerate() {
        if b > 255 {
            return Err(Error::input(format!("pixel {i} = {b} is not a byte")));
        }
        out.push(f64::from(b) / 255.0);
    }
    Ok(ImageVector(out))
}

/// Same as [`normalize_pixels`] for data that is already `u8`.
pub fn normalize_bytes(raw: &[u8]) -> Result<ImageVector> {
    if raw.len() != IMAGE_PIXELS {
        return Err(Error::input(format!("image has {} pixels, expected {IMAGE_PIXELS}", raw.len())));
    }
    Ok(ImageVector(raw.iter().map(|&b| f64::from(b) / 255.0).collect()))
}

/// `x ↦ (cos(πx/2), sin(πx/2))`.
pub fn local_feature_map(x: f64) -> Result<[f64; 2]> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::input(format!("feature map input {x} outside [0, 1]")));
    }
    let a = FRAC_PI_2 * x;
    Ok([a.cos(), a.sin()])
}

/// One 2-vector per site. Normally produced by [`embed_image`]; the
/// unchecked constructor exists so tests and gradient checks can feed
/// arbitrary vectors into the MPS.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductState {
    sites: Vec<[f64; 2]>,
}

impl ProductState {
    pub fn from_sites(sites: Vec<[f64; 2]>) -> Self {
        Self { sites }
    }

    pub fn sites(&self) -> &[[f64; 2]] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Embed an arbitrary-length pixel slice (used for toy chains).
    pub fn from_pixels(pixels: &[f64]) -> Result<Self> {
        let sites = pixels.iter().map(|&x| local_feature_map(x)).collect::<Result<_>>()?;
        Ok(Self { sites })
    }
}

pub fn embed_image(img: &ImageVector) -> ProductState {
    // ImageVector guarantees the [0,1] range, so the map cannot fail.
    ProductState::from_pixels(img.values()).expect("ImageVector pixels are in [0, 1]")
}

/// Mean and leading principal directions of a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `PCA_COMPONENTS` rows of length `IMAGE_PIXELS`, orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the sample covariance, nonincreasing.
    pub explained_variances: Vec<f64>,
}

/// Fit on covariance eigenvectors (sample covariance with `n − 1`).
///
/// Each component is oriented so its largest-magnitude entry is positive.
pub fn fit_pca(train_images: &[ImageVector]) -> Result<PcaModel> {
    fit_pca_rows(&train_images.iter().map(|i| i.values()).collect::<Vec<_>>(), PCA_COMPONENTS)
}

pub(crate) fn fit_pca_rows(rows: &[&[f64]], n_components: usize) -> Result<PcaModel> {
    let n = rows.len();
    if n < 5 {
        return Err(Error::input(format!("PCA needs at least 5 samples, got {n}")));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::dim("PCA rows have differing lengths"));
    }
    if n_components > dim {
        return Err(Error::input(format!("{n_components} components requested from dimension {dim}")));
    }

    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |i, j| rows[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Vec::with_capacity(n_components);
    let mut explained_variances = Vec::with_capacity(n_components);
    for &k in order.iter().take(n_components) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        // round-off can push null-space eigenvalues slightly negative
        explained_variances.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variances,
    })
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `components · (x − mean)`.
    pub fn project_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::dim(format!("projecting {} values with a {}-dim PCA", x.len(), self.mean.len())));
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }
}

pub fn pca_project(model: &PcaModel, img: &ImageVector) -> Result<[f64; PCA_COMPONENTS]> {
    if model.components.len() != PCA_COMPONENTS {
        return Err(Error::dim(format!("PCA model has {} components", model.components.len())));
    }
    let v = model.project_values(img.values())?;
    Ok([v[0], v[1], v[2], v[3]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization() {
        assert!(normalize_pixels(&[0; IMAGE_PIXELS]).unwrap().values().iter().all(|&v| v == 0.0));
        let mut raw = [0u32; IMAGE_PIXELS];
        raw[0] = 255;
        raw[1] = 51;
        let img = normalize_pixels(&raw).unwrap();
        assert_eq!(img.values()[0], 1.0);
        assert!((img.values()[1] - 0.2).abs() < 1e-15);
        raw[2] = 256;
        assert!(matches!(normalize_pixels(&raw), Err(Error::Input(_))));
        assert!(matches!(normalize_pixels(&[0; 10]), Err(Error::Input(_))));
    }

    #[test]
    fn feature_map_values() {
        let [c, s] = local_feature_map(0.0).unwrap();
        assert_eq!((c, s), (1.0, 0.0));
        let [c, s] = local_feature_map(1.0).unwrap();
        assert!(c.abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
        let [c, s] = local_feature_map(0.5).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c - h).abs() < 1e-15 && (s - h).abs() < 1e-15);
        assert!(local_feature_map(1.5).is_err());
        assert!(local_feature_map(-0.1).is_err());
        assert!(local_feature_map(f64::NAN).is_err());
    }

    #[test]
    fn embedding() {
        let zero = ImageVector::new(vec![0.0; IMAGE_PIXELS]).unwrap();
        assert!(embed_image(&zero).sites().iter().all(|s| *s == [1.0, 0.0]));
        let one = ImageVector::new(vec![1.0; IMAGE_PIXELS]).unwrap();
        assert!(embed_image(&one).sites().iter().all(|s| s[0].abs() < 1e-15 && s[1] == 1.0));
        let mut v = vec![0.0; IMAGE_PIXELS];
        v[0] = 0.5;
        let ps = embed_image(&ImageVector::new(v).unwrap());
        assert!((ps.sites()[0][0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(ps.sites()[1..].iter().all(|s| *s == [1.0, 0.0]));
    }

    #[test]
    fn image_vector_validation() {
        assert!(ImageVector::new(vec![0.0; 783]).is_err());
        let mut v = vec![0.0; IMAGE_PIXELS];
        v[5] = 1.01;
        assert!(ImageVector::new(v).is_err());
    }

    #[test]
    fn pca_constant_dataset() {
        let v: Vec<f64> = (0..IMAGE_PIXELS).map(|i| (i % 7) as f64 / 7.0).collect();
        let imgs = vec![ImageVector::new(v.clone()).unwrap(); 6];
        let m = fit_pca(&imgs).unwrap();
        for (a, b) in m.mean.iter().zip(&v) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(m.explained_variances.iter().all(|&e| e.abs() < 1e-12));
    }

    #[test]
    fn pca_too_few_samples() {
        let imgs = vec![ImageVector::new(vec![0.0; IMAGE_PIXELS]).unwrap(); 4];
        assert!(matches!(fit_pca(&imgs), Err(Error::Input(_))));
    }

    #[test]
    fn pca_line_dataset() {
        // pixels (0, 1) vary as (t, 2t)/3, everything else is constant
        let imgs: Vec<ImageVector> = (0..10)
            .map(|k| {
                let t = k as f64 / 10.0;
                let mut v = vec![0.25; IMAGE_PIXELS];
                v[0] = t / 3.0;
                v[1] = 2.0 * t / 3.0;
                ImageVector::new(v).unwrap()
            })
            .collect();
        let m = fit_pca(&imgs).unwrap();
        let c = &m.components[0];
        let s5 = 5f64.sqrt();
        assert!((c[0] - 1.0 / s5).abs() < 1e-10);
        assert!((c[1] - 2.0 / s5).abs() < 1e-10);
        assert!(c[2..].iter().all(|x| x.abs() < 1e-10));
        assert!(m.explained_variances[1] < 1e-12);

        assert!(pca_project(&m, &ImageVector::new(m.mean.clone()).unwrap())
            .unwrap()
            .iter()
            .all(|x| x.abs() < 1e-15));
        let shifted: Vec<f64> = m.mean.iter().zip(c).map(|(a, b)| a + b).collect();
        // mean + first component leaves [0, 1], so project the raw values
        let p = m.project_values(&shifted).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p[1..].iter().all(|x| x.abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn feature_map_unit_norm(x in 0.0f64..=1.0) {
            let [c, s] = local_feature_map(x).unwrap();
            prop_assert!((c * c + s * s - 1.0).abs() < 1e-12);
        }
    }
}
