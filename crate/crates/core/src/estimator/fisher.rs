use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::channel::ArrayGeometry;
use crate::error::{Error, Result};
use crate::trajectory::{ClampBounds, MotionPoly};

use super::adam::FitDiagnostics;
use super::model::mu_terms;
use super::Observation;

const CHUNK: usize = 32;

/// Gauss-Newton Fisher information blocks `(I_α, I_β)` of the window.
///
/// `I_ϑ = (2/σ²) Σ_u |∂μ_u/∂ϑ|² τ_u^{i+j}`; clamped components carry no
/// information.
pub fn observed_fim(
    model: &MotionPoly,
    geom: &ArrayGeometry,
    window: &[Observation],
    noise_var: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let bounds = ClampBounds::for_geometry(geom);
    let na = model.alpha().len();
    let nb = model.beta().len();
    // Hankel moments: entry (i, j) depends on i + j only.
    let partials: Vec<(Vec<f64>, Vec<f64>)> = window
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ma = vec![0.0; 2 * na - 1];
            let mut mb = vec![0.0; 2 * nb - 1];
            for obs in chunk {
                let t = model.local_time(obs.time);
                let (state, flags) = model.eval_flagged(t, &bounds);
                let terms = mu_terms(geom, state, &obs.beam);
                let tau = t / model.time_scale();
                if !flags.theta {
                    add_moments(&mut ma, terms.d_theta.norm_sqr(), tau);
                }
                if !flags.r {
                    add_moments(&mut mb, terms.d_r.norm_sqr(), tau);
                }
            }
            (ma, mb)
        })
        .collect();
    let mut ma = vec![0.0; 2 * na - 1];
    let mut mb = vec![0.0; 2 * nb - 1];
    for (a, b) in partials {
        ma.iter_mut().zip(a).for_each(|(x, y)| *x += y);
        mb.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
    let s = 2.0 / noise_var;
    (
        DMatrix::from_fn(na, na, |i, j| s * ma[i + j]),
        DMatrix::from_fn(nb, nb, |i, j| s * mb[i + j]),
    )
}

fn add_moments(dst: &mut [f64], value: f64, tau: f64) {
    let mut p = value;
    for d in dst {
        *d += p;
        p *= tau;
    }
}

/// Scale-aware ridge added before inversion.
pub fn regularizer(fim: &DMatrix<f64>) -> f64 {
    1e-8 * fim.trace() / fim.nrows().max(1) as f64 + 1e-12
}

/// Gaussian belief over the motion coefficients used for Thompson sampling.
#[derive(Debug, Clone)]
pub struct PosteriorBelief {
    pub mean: MotionPoly,
    pub cov_alpha: DMatrix<f64>,
    pub cov_beta: DMatrix<f64>,
    pub noise_var: f64,
    pub diagnostics: FitDiagnostics,
    factor_alpha: DMatrix<f64>,
    factor_beta: DMatrix<f64>,
}

impl PosteriorBelief {
    /// Builds a belief from explicit covariance blocks, which must be
    /// symmetric positive semidefinite. A zero block pins that part of the
    /// sample to the mean.
    pub fn from_covariances(
        mean: MotionPoly,
        cov_alpha: DMatrix<f64>,
        cov_beta: DMatrix<f64>,
        noise_var: f64,
        diagnostics: FitDiagnostics,
    ) -> Result<Self> {
        if cov_alpha.nrows() != mean.alpha().len() || cov_beta.nrows() != mean.beta().len() {
            return Err(Error::domain("covariance block size does not match the model order"));
        }
        let factor_alpha = sampling_factor(&cov_alpha)?;
        let factor_beta = sampling_factor(&cov_beta)?;
        Ok(PosteriorBelief { mean, cov_alpha, cov_beta, noise_var, diagnostics, factor_alpha, factor_beta })
    }

    /// Mean-only belief with zero covariance.
    pub fn point(mean: MotionPoly, noise_var: f64) -> Self {
        let na = mean.alpha().len();
        let nb = mean.beta().len();
        let za = DMatrix::zeros(na, na);
        let zb = DMatrix::zeros(nb, nb);
        PosteriorBelief {
            mean,
            cov_alpha: za.clone(),
            cov_beta: zb.clone(),
            noise_var,
            diagnostics: FitDiagnostics::default(),
            factor_alpha: za,
            factor_beta: zb,
        }
    }

    /// Lower factors `L` with `L Lᵀ = Σ` for each block.
    pub fn factors(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.factor_alpha, &self.factor_beta)
    }

    /// Re-anchors the mean `delta` seconds later. Covariances are kept.
    pub fn shifted(&self, delta: f64) -> Self {
        PosteriorBelief { mean: self.mean.shift(delta), ..self.clone() }
    }
}

fn sampling_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::domain("covariance must be square"));
    }
    if !cov.iter().all(|x| x.is_finite()) {
        return Err(Error::domain("covariance has non-finite entries"));
    }
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    if (cov - cov.transpose()).amax() > 1e-10 * scale {
        return Err(Error::domain("covariance is not symmetric"));
    }
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    // Singular but PSD: use the symmetric square root.
    let eig = cov.clone().symmetric_eigen();
    if eig.eigenvalues.min() < -1e-12 * scale {
        return Err(Error::domain("covariance is not positive semidefinite"));
    }
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

/// `Σ_ϑ = (I_ϑ + λ_reg I)⁻¹` for both blocks around the fitted mean.
pub fn posterior(
    mean: MotionPoly,
    fim_alpha: &DMatrix<f64>,
    fim_beta: &DMatrix<f64>,
    noise_var: f64,
    diagnostics: FitDiagnostics,
) -> Result<PosteriorBelief> {
    let cov_alpha = regularized_inverse(fim_alpha)?;
    let cov_beta = regularized_inverse(fim_beta)?;
    PosteriorBelief::from_covariances(mean, cov_alpha, cov_beta, noise_var, diagnostics)
}

fn regularized_inverse(fim: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = fim.nrows();
    let sym = (fim + fim.transpose()) * 0.5;
    let a = &sym + DMatrix::identity(n, n) * regularizer(&sym);
    let inv = a
        .cholesky()
        .ok_or_else(|| Error::Runtime("regularized information matrix is not positive definite".into()))?
        .inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}
