//! Class profiles in pooled feature space and the Jensen-Shannon pair ranking
//! used to decide which class pairs to ask the expert about.
//!
//! The mixture `½(N_j + N_k)` inside the JSD is not Gaussian; it is replaced by
//! the moment-matched Gaussian so the closed-form Gaussian KL applies to both
//! halves. All divergence math runs in `f64`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::ActivationMap;
use crate::pair::ClassPair;

pub type PooledFeature = Vec<f64>;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    #[default]
    Diagonal,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Diagonal(Vec<f64>),
    Full(DMatrix<f64>),
}

impl Covariance {
    pub fn mode(&self) -> CovarianceMode {
        match self {
            Covariance::Diagonal(_) => CovarianceMode::Diagonal,
            Covariance::Full(_) => CovarianceMode::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    pub class_id: usize,
    pub mean: Vec<f64>,
    pub covariance: Covariance,
    pub epsilon: f64,
}

impl ClassProfile {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub pair: ClassPair,
    pub jsd: f64,
}

/// Global average pooling over the `H·W` cells.
pub fn pool_features(map: &ActivationMap) -> PooledFeature {
    let grid = map.grid();
    let mut out = vec![0.0; grid.d];
    for cell in map.values().chunks_exact(grid.d) {
        for (o, v) in out.iter_mut().zip(cell) {
            *o += v;
        }
    }
    let n = grid.cells() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Maximum-likelihood Gaussian fit (population covariance). Diagonal variances
/// are floored at `epsilon`; a full covariance gets `epsilon·I` added.
pub fn fit_profile(
    features: &[PooledFeature],
    class_id: usize,
    mode: CovarianceMode,
    epsilon: f64,
) -> Result<ClassProfile> {
    let n = features.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let d = features[0].len();
    if let Some(f) = features.iter().find(|f| f.len() != d) {
        return Err(Error::DimMismatch { expected: d, got: f.len() });
    }
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);

    let covariance = match mode {
        CovarianceMode::Diagonal => {
            let mut var = vec![0.0; d];
            for f in features {
                for i in 0..d {
                    let c = f[i] - mean[i];
                    var[i] += c * c;
                }
            }
            Covariance::Diagonal(var.into_iter().map(|v| (v / nf).max(epsilon)).collect())
        }
        CovarianceMode::Full => {
            let mut cov = DMatrix::<f64>::zeros(d, d);
            for f in features {
                let c = DVector::from_iterator(d, f.iter().zip(&mean).map(|(v, m)| v - m));
                cov += &c * c.transpose();
            }
            cov /= nf;
            for i in 0..d {
                cov[(i, i)] += epsilon;
            }
            Covariance::Full(cov)
        }
    };
    Ok(ClassProfile { class_id, mean, covariance, epsilon })
}

fn check_compatible(p: &ClassProfile, q: &ClassProfile) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch { expected: p.dim(), got: q.dim() });
    }
    if p.covariance.mode() != q.covariance.mode() {
        return Err(Error::NumericalFailure("profiles use different covariance modes".into()));
    }
    Ok(())
}

fn cholesky(m: &DMatrix<f64>, epsilon: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let reg = m + DMatrix::<f64>::identity(m.nrows(), m.ncols()) * epsilon;
    reg.cholesky()
        .ok_or_else(|| Error::NumericalFailure("covariance is not positive definite".into()))
}

/// `KL(p || q)` between Gaussians:
/// `½ (tr(Σq⁻¹Σp) − d + ln(|Σq|/|Σp|) + (μp−μq)ᵀ Σq⁻¹ (μp−μq))`.
pub fn kl_divergence(p: &ClassProfile, q: &ClassProfile) -> Result<f64> {
    check_compatible(p, q)?;
    match (&p.covariance, &q.covariance) {
        (Covariance::Diagonal(vp), Covariance::Diagonal(vq)) => {
            let mut acc = 0.0;
            for i in 0..p.dim() {
                let diff = p.mean[i] - q.mean[i];
                acc += vp[i] / vq[i] - 1.0 + (vq[i] / vp[i]).ln() + diff * diff / vq[i];
            }
            Ok(0.5 * acc)
        }
        (Covariance::Full(sp), Covariance::Full(sq)) => {
            let d = p.dim();
            let lq = cholesky(sq, q.epsilon)?;
            let lp = cholesky(sp, p.epsilon)?;
            let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
                2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
            };
            let trace = lq.solve(sp).trace();
            let diff = DVector::from_iterator(d, p.mean.iter().zip(&q.mean).map(|(a, b)| a - b));
            let maha = diff.dot(&lq.solve(&diff));
            let kl = 0.5 * (trace - d as f64 + logdet(&lq) - logdet(&lp) + maha);
            if kl.is_finite() {
                Ok(kl)
            } else {
                Err(Error::NumericalFailure("non-finite KL divergence".into()))
            }
        }
        _ => unreachable!("modes checked"),
    }
}

/// Gaussian with the first two moments of the equal-weight mixture of `p` and `q`.
pub fn moment_match_mixture(p: &ClassProfile, q: &ClassProfile) -> Result<ClassProfile> {
    check_compatible(p, q)?;
    let d = p.dim();
    let mean: Vec<f64> = p.mean.iter().zip(&q.mean).map(|(a, b)| 0.5 * (a + b)).collect();
    // ½(Σp + μpμpᵀ) + ½(Σq + μqμqᵀ) − μmμmᵀ  ==  ½(Σp + Σq) + ¼ΔΔᵀ
    let delta: Vec<f64> = p.mean.iter().zip(&q.mean).map(|(a, b)| a - b).collect();
    let covariance = match (&p.covariance, &q.covariance) {
        (Covariance::Diagonal(vp), Covariance::Diagonal(vq)) => Covariance::Diagonal(
            (0..d).map(|i| 0.5 * (vp[i] + vq[i]) + 0.25 * delta[i] * delta[i]).collect(),
        ),
        (Covariance::Full(sp), Covariance::Full(sq)) => {
            let delta = DVector::from_vec(delta);
            Covariance::Full((sp + sq) * 0.5 + (&delta * delta.transpose()) * 0.25)
        }
        _ => unreachable!("modes checked"),
    };
    Ok(ClassProfile { class_id: p.class_id.min(q.class_id), mean, covariance, epsilon: p.epsilon.max(q.epsilon) })
}

/// Jensen-Shannon divergence through the moment-matched mixture.
pub fn jsd(p: &ClassProfile, q: &ClassProfile) -> Result<f64> {
    let m = moment_match_mixture(p, q)?;
    Ok(0.5 * kl_divergence(p, &m)? + 0.5 * kl_divergence(q, &m)?)
}

/// Symmetric matrix of pairwise JSD values, indexed by position in `profiles`.
pub fn jsd_matrix(profiles: &[ClassProfile]) -> Result<Vec<Vec<f64>>> {
    let n = profiles.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = jsd(&profiles[i], &profiles[j])?;
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

/// All non-excluded pairs ranked by ascending JSD (ties by pair key).
pub fn rank_pairs(profiles: &[ClassProfile], excluded: &BTreeSet<ClassPair>) -> Result<Vec<PairDistance>> {
    let mut all = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        for q in &profiles[i + 1..] {
            let pair = ClassPair::new(p.class_id, q.class_id);
            if excluded.contains(&pair) {
                continue;
            }
            all.push(PairDistance { pair, jsd: jsd(p, q)? });
        }
    }
    all.sort_by(|a, b| a.jsd.total_cmp(&b.jsd).then(a.pair.cmp(&b.pair)));
    Ok(all)
}

/// The `b` most confusable pairs (lowest JSD) that are not excluded.
pub fn select_pairs(
    profiles: &[ClassProfile],
    b: usize,
    excluded: &BTreeSet<ClassPair>,
) -> Result<Vec<PairDistance>> {
    let mut ranked = rank_pairs(profiles, excluded)?;
    if ranked.is_empty() {
        return Err(Error::NoPairsAvailable);
    }
    ranked.truncate(b);
    Ok(ranked)
}
