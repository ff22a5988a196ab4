//! Gaussian reference fits and distance scores in hidden or embedding space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Hidden,
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    SelfModel,
    OtherModel,
    GroundTruthTraces,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RidgePolicy {
    /// `max(rel * trace(S) / d, abs)`.
    Relative { rel: f64, abs: f64 },
    Fixed { lambda: f64 },
}

impl Default for RidgePolicy {
    fn default() -> Self {
        RidgePolicy::Relative { rel: 1e-6, abs: 1e-10 }
    }
}

impl RidgePolicy {
    fn lambda(&self, cov: &DMatrix<f64>) -> f64 {
        match *self {
            RidgePolicy::Relative { rel, abs } => (rel * cov.trace() / cov.nrows() as f64).max(abs),
            RidgePolicy::Fixed { lambda } => lambda,
        }
    }
}

/// Mean, ridge-regularized covariance, and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    ridge: f64,
    policy: RidgePolicy,
    chol: Cholesky<f64, Dyn>,
}

impl Gaussian {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>, ridge: f64, policy: RidgePolicy) -> Result<Self, MetricsError> {
        let chol = Cholesky::new(cov.clone()).ok_or(MetricsError::NotPositiveDefinite)?;
        Ok(Self {
            mean,
            cov,
            ridge,
            policy,
            chol,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Covariance including the ridge.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// The policy that chose the ridge; refits reuse it.
    pub fn policy(&self) -> RidgePolicy {
        self.policy
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Squared Mahalanobis distance via a triangular solve.
    pub fn mahalanobis(&self, x: &[f64]) -> Result<f64, MetricsError> {
        if x.len() != self.dim() {
            return Err(MetricsError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let diff = DVector::from_column_slice(x) - &self.mean;
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .ok_or(MetricsError::NotPositiveDefinite)?;
        Ok(y.norm_squared())
    }
}

#[derive(Serialize, Deserialize)]
struct GaussianDoc {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    ridge: f64,
    #[serde(default)]
    policy: RidgePolicy,
}

impl Serialize for Gaussian {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GaussianDoc {
            mean: self.mean.iter().copied().collect(),
            covariance: self.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
            ridge: self.ridge,
            policy: self.policy,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Gaussian {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let doc = GaussianDoc::deserialize(d)?;
        let n = doc.mean.len();
        if doc.covariance.len() != n || doc.covariance.iter().any(|r| r.len() != n) {
            return Err(D::Error::custom("covariance shape does not match mean"));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| doc.covariance[i][j]);
        Gaussian::new(DVector::from_vec(doc.mean), cov, doc.ridge, doc.policy).map_err(D::Error::custom)
    }
}

/// Reference set for one template and one space.
///
/// For [`ReferenceSource::GroundTruthTraces`] only `texts` is populated and
/// there is no Gaussian; distance metrics are then unavailable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub space: Space,
    pub source: ReferenceSource,
    pub vectors: Vec<Vec<f64>>,
    pub texts: Vec<String>,
    pub gaussian: Option<Gaussian>,
    /// Content hash; records scored against this reference store it.
    pub snapshot_id: String,
}

impl ReferenceModel {
    pub fn n(&self) -> usize {
        if self.gaussian.is_some() {
            self.vectors.len()
        } else {
            self.texts.len()
        }
    }

    pub fn mahalanobis(&self, x: &[f64]) -> Result<f64, MetricsError> {
        self.gaussian.as_ref().ok_or(MetricsError::NoGaussian)?.mahalanobis(x)
    }

    pub fn knn_distance(&self, x: &[f64], k: usize) -> Result<f64, MetricsError> {
        knn_distance(x, &self.vectors, k)
    }

    /// Text-only reference built from ground-truth reasoning traces.
    pub fn from_traces(space: Space, texts: Vec<String>) -> Self {
        let mut r = Self {
            space,
            source: ReferenceSource::GroundTruthTraces,
            vectors: Vec::new(),
            texts,
            gaussian: None,
            snapshot_id: String::new(),
        };
        r.snapshot_id = r.content_hash();
        r
    }

    /// Swaps in texts from another source (another model's responses, say)
    /// and rehashes.
    pub fn with_texts(mut self, texts: Vec<String>) -> Self {
        self.texts = texts;
        self.snapshot_id = self.content_hash();
        self
    }

    fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}/{:?}", self.space, self.source));
        for v in &self.vectors {
            for x in v {
                h.update(x.to_le_bytes());
            }
            h.update(b"|");
        }
        for t in &self.texts {
            h.update((t.len() as u64).to_le_bytes());
            h.update(t.as_bytes());
        }
        if let Some(g) = &self.gaussian {
            h.update(g.ridge.to_le_bytes());
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Fits mean and covariance (normalized by N) plus a ridge, and factorizes.
pub fn fit_reference(
    space: Space,
    source: ReferenceSource,
    vectors: Vec<Vec<f64>>,
    texts: Vec<String>,
    ridge: RidgePolicy,
) -> Result<ReferenceModel, MetricsError> {
    let n = vectors.len();
    if n < 2 {
        return Err(MetricsError::TooFewVectors(n));
    }
    let d = vectors[0].len();
    if d == 0 {
        return Err(MetricsError::DimensionMismatch { expected: 1, found: 0 });
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != d) {
        return Err(MetricsError::DimensionMismatch {
            expected: d,
            found: v.len(),
        });
    }
    if !texts.is_empty() && texts.len() != n {
        return Err(MetricsError::TextCountMismatch {
            vectors: n,
            texts: texts.len(),
        });
    }
    let data = DMatrix::from_fn(n, d, |i, j| vectors[i][j]);
    let mean: DVector<f64> = data.row_mean().transpose();
    let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);
    let mut cov = centered.transpose() * &centered / n as f64;
    // Exact symmetry regardless of summation order.
    cov = (&cov + cov.transpose()) * 0.5;
    let lambda = ridge.lambda(&cov);
    for i in 0..d {
        cov[(i, i)] += lambda;
    }
    let gaussian = Gaussian::new(mean, cov, lambda, ridge)?;
    let mut r = ReferenceModel {
        space,
        source,
        vectors,
        texts,
        gaussian: Some(gaussian),
        snapshot_id: String::new(),
    };
    r.snapshot_id = r.content_hash();
    Ok(r)
}

/// Euclidean distance from `x` to its `k`-th nearest reference vector.
pub fn knn_distance(x: &[f64], refs: &[Vec<f64>], k: usize) -> Result<f64, MetricsError> {
    if k == 0 || refs.len() < k {
        return Err(MetricsError::TooFewForKnn { n: refs.len(), k });
    }
    let mut d = Vec::with_capacity(refs.len());
    for r in refs {
        if r.len() != x.len() {
            return Err(MetricsError::DimensionMismatch {
                expected: r.len(),
                found: x.len(),
            });
        }
        d.push(r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
    }
    d.sort_by(f64::total_cmp);
    Ok(d[k - 1])
}
