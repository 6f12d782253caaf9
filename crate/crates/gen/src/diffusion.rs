//! Label-conditioned DDPM over latent codes.
//!
//! The forward process is the standard variance-preserving chain
//! z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps.  The denoiser
//! for each timestep is a single affine map from (z_t concat onehot(label))
//! to predicted noise, fit in closed form by ridge normal equations, so
//! training needs no iterative optimizer and is exactly reproducible.
//! Ancestral sampling runs the learned maps backwards from pure noise.
//!
//! The chain operates on per-dimension standardized codes: training
//! records the corpus mean and standard deviation of every dimension,
//! the reverse chain runs in that normalized frame, and sampled codes
//! are mapped back afterwards.  The N(0, I) prior the reverse chain
//! starts from then matches the terminal forward marginal regardless
//! of the scale of the raw codes.

use forge_core::motion::MotionClip;
use forge_core::seeding::{rng_for, Stage};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::latent::{decode, encode, LatentCode, LatentSpace};
use crate::GenError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionParams {
    pub n_steps: usize,
    /// First and last value of the linear beta schedule.
    pub beta_min: f64,
    pub beta_max: f64,
    /// Frobenius penalty on the affine map (never on the intercept).
    pub ridge_lambda: f64,
    /// Number of (noise, step) draws per corpus element per timestep.
    pub draws_per_element: usize,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        DiffusionParams {
            n_steps: 50,
            beta_min: 1e-4,
            beta_max: 0.02,
            ridge_lambda: 1e-6,
            draws_per_element: 64,
        }
    }
}

impl DiffusionParams {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.n_steps == 0 {
            return Err(GenError::InvalidArgument("n_steps must be >= 1".into()));
        }
        if !(self.beta_min > 0.0 && self.beta_max < 1.0 && self.beta_min <= self.beta_max) {
            return Err(GenError::InvalidArgument(format!(
                "beta schedule must satisfy 0 < beta_min <= beta_max < 1, got [{}, {}]",
                self.beta_min, self.beta_max
            )));
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return Err(GenError::InvalidArgument(format!(
                "ridge_lambda must be non-negative, got {}",
                self.ridge_lambda
            )));
        }
        if self.draws_per_element == 0 {
            return Err(GenError::InvalidArgument("draws_per_element must be >= 1".into()));
        }
        Ok(())
    }
}

/// Affine denoiser for one timestep: eps_hat = a * (z_t concat onehot) + b.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionModel {
    pub n_steps: usize,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Running products of alphas; strictly decreasing.
    pub alpha_bars: Vec<f64>,
    pub ridge_lambda: f64,
    pub draws_per_element: usize,
    /// Base seed all training and sampling streams derive from.
    pub base_seed: u64,
    /// Sorted distinct labels; fixes the onehot layout.
    pub labels: Vec<String>,
    /// Per-dimension mean of the training codes; empty before training.
    pub feature_shift: Vec<f64>,
    /// Per-dimension standard deviation of the training codes, floored at
    /// one for constant dimensions; empty before training.
    pub feature_scale: Vec<f64>,
    /// One entry per timestep once trained; empty before.
    pub denoisers: Vec<Denoiser>,
    /// Mean squared prediction error per timestep on the training draws.
    pub l_diff: Vec<f64>,
    /// Corpus the current parameters were fit on; fine-tuning mixes against it.
    pub train_codes: Vec<LatentCode>,
}

impl DiffusionModel {
    pub fn new(params: &DiffusionParams, base_seed: u64) -> Result<Self, GenError> {
        params.validate()?;
        let n = params.n_steps;
        let betas: Vec<f64> = (0..n)
            .map(|i| {
                if n == 1 {
                    params.beta_min
                } else {
                    params.beta_min
                        + (params.beta_max - params.beta_min) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        Self::from_schedule(betas, params.ridge_lambda, params.draws_per_element, base_seed)
    }

    /// Builds an untrained model from an explicit beta schedule.
    pub fn from_schedule(
        betas: Vec<f64>,
        ridge_lambda: f64,
        draws_per_element: usize,
        base_seed: u64,
    ) -> Result<Self, GenError> {
        if betas.is_empty() {
            return Err(GenError::InvalidArgument("beta schedule is empty".into()));
        }
        let mut prev = 0.0;
        for (i, &b) in betas.iter().enumerate() {
            if !(b > 0.0 && b < 1.0 && b >= prev) {
                return Err(GenError::InvalidArgument(format!(
                    "beta schedule must be non-decreasing within (0, 1); entry {i} is {b}"
                )));
            }
            prev = b;
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut prod = 1.0;
        for &a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        Ok(DiffusionModel {
            n_steps: betas.len(),
            betas,
            alphas,
            alpha_bars,
            ridge_lambda,
            draws_per_element,
            base_seed,
            labels: Vec::new(),
            feature_shift: Vec::new(),
            feature_scale: Vec::new(),
            denoisers: Vec::new(),
            l_diff: Vec::new(),
            train_codes: Vec::new(),
        })
    }

    pub fn is_trained(&self) -> bool {
        !self.denoisers.is_empty()
    }

    pub fn label_index(&self, label: &str) -> Result<usize, GenError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| GenError::InvalidArgument(format!("unknown label `{label}`")))
    }

    /// Closed-form marginal of the forward chain at step `t` (1-based).
    pub fn forward_noise(&self, z0: &[f64], t: usize, noise: &[f64]) -> Result<Vec<f64>, GenError> {
        if t == 0 || t > self.n_steps {
            return Err(GenError::InvalidArgument(format!(
                "step {t} out of range 1..={}",
                self.n_steps
            )));
        }
        if z0.len() != noise.len() {
            return Err(GenError::ShapeMismatch(format!(
                "z0 has dimension {}, noise has {}",
                z0.len(),
                noise.len()
            )));
        }
        let sa = self.alpha_bars[t - 1].sqrt();
        let sn = (1.0 - self.alpha_bars[t - 1]).sqrt();
        Ok(z0.iter().zip(noise).map(|(z, e)| sa * z + sn * e).collect())
    }

    /// Fits every per-timestep denoiser on the corpus and returns the
    /// trained model.  Draws are keyed by (base_seed, timestep, element
    /// index), so the fit is independent of iteration strategy and the
    /// same corpus always yields the same parameters.
    pub fn train_denoiser(&self, corpus: &[LatentCode]) -> Result<DiffusionModel, GenError> {
        if corpus.is_empty() {
            return Err(GenError::InvalidArgument("training corpus is empty".into()));
        }
        let d = corpus[0].values.len();
        if d == 0 {
            return Err(GenError::InvalidArgument("latent codes are zero-dimensional".into()));
        }
        for (i, code) in corpus.iter().enumerate() {
            if code.values.len() != d {
                return Err(GenError::ShapeMismatch(format!(
                    "code {i} has dimension {}, expected {d}",
                    code.values.len()
                )));
            }
            if code.values.iter().any(|v| !v.is_finite()) {
                return Err(GenError::InvalidArgument(format!("code {i} has non-finite values")));
            }
        }
        let mut labels: Vec<String> = corpus.iter().map(|c| c.label.clone()).collect();
        labels.sort();
        labels.dedup();
        for label in &labels {
            let count = corpus.iter().filter(|c| &c.label == label).count();
            if count < 2 {
                return Err(GenError::InvalidArgument(format!(
                    "label `{label}` appears {count} time(s); every label needs at least 2"
                )));
            }
        }
        let label_of: Vec<usize> = corpus
            .iter()
            .map(|c| labels.iter().position(|l| l == &c.label).unwrap())
            .collect();

        // Per-dimension standardization statistics, accumulated in corpus
        // order.  The chain trains and samples in the standardized frame.
        let n_c = corpus.len() as f64;
        let mut feature_shift = vec![0.0f64; d];
        for code in corpus {
            for (s, v) in feature_shift.iter_mut().zip(&code.values) {
                *s += v;
            }
        }
        for s in &mut feature_shift {
            *s /= n_c;
        }
        let mut feature_scale = vec![0.0f64; d];
        for code in corpus {
            for k in 0..d {
                let r = code.values[k] - feature_shift[k];
                feature_scale[k] += r * r;
            }
        }
        for s in &mut feature_scale {
            *s = (*s / n_c).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        let standardized: Vec<Vec<f64>> = corpus
            .iter()
            .map(|c| {
                (0..d).map(|k| (c.values[k] - feature_shift[k]) / feature_scale[k]).collect()
            })
            .collect();

        let m = d + labels.len();
        let n_s = corpus.len() * self.draws_per_element;
        let mut denoisers = Vec::with_capacity(self.n_steps);
        let mut l_diff = Vec::with_capacity(self.n_steps);
        let mut u_mat = DMatrix::zeros(n_s, m);
        let mut e_mat = DMatrix::zeros(n_s, d);
        for t in 1..=self.n_steps {
            let sa = self.alpha_bars[t - 1].sqrt();
            let sn = (1.0 - self.alpha_bars[t - 1]).sqrt();
            u_mat.fill(0.0);
            let mut row = 0;
            for (i, values) in standardized.iter().enumerate() {
                let mut rng = rng_for(self.base_seed, &[Stage::Train as u64, t as u64, i as u64]);
                for _ in 0..self.draws_per_element {
                    for k in 0..d {
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        e_mat[(row, k)] = eps;
                        u_mat[(row, k)] = sa * values[k] + sn * eps;
                    }
                    u_mat[(row, d + label_of[i])] = 1.0;
                    row += 1;
                }
            }
            let u_mean = u_mat.row_mean();
            let e_mean = e_mat.row_mean();
            let mut u_c = u_mat.clone();
            let mut e_c = e_mat.clone();
            for mut r in u_c.row_iter_mut() {
                r -= &u_mean;
            }
            for mut r in e_c.row_iter_mut() {
                r -= &e_mean;
            }
            let mut g = u_c.transpose() * &u_c;
            for k in 0..m {
                g[(k, k)] += self.ridge_lambda;
            }
            let rhs = u_c.transpose() * &e_c;
            let chol = Cholesky::new(g).ok_or_else(|| {
                GenError::Singular(format!(
                    "normal equations are singular at timestep {t}; corpus is degenerate"
                ))
            })?;
            let a_t = chol.solve(&rhs);
            let a = a_t.transpose();
            let b = e_mean.transpose() - &a * u_mean.transpose();
            // Residuals on the exact training draws; centering cancels b.
            let resid = &e_c - &u_c * &a_t;
            l_diff.push(resid.norm_squared() / n_s as f64);
            denoisers.push(Denoiser { a, b });
        }

        Ok(DiffusionModel {
            labels,
            feature_shift,
            feature_scale,
            denoisers,
            l_diff,
            train_codes: corpus.to_vec(),
            ..self.clone()
        })
    }

    /// Ancestral sampling from pure noise down to a latent code.
    pub fn sample_code(&self, label: &str, seed: u64) -> Result<LatentCode, GenError> {
        if !self.is_trained() {
            return Err(GenError::InvalidArgument("model is untrained; fit it first".into()));
        }
        let li = self.label_index(label)?;
        let d = self.denoisers[0].b.len();
        let m = d + self.labels.len();
        let mut rng = rng_for(seed, &[Stage::Sample as u64]);
        let mut z = DVector::from_fn(d, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let mut u = DVector::zeros(m);
        u[d + li] = 1.0;
        for t in (1..=self.n_steps).rev() {
            let ab = self.alpha_bars[t - 1];
            let al = self.alphas[t - 1];
            u.rows_mut(0, d).copy_from(&z);
            let den = &self.denoisers[t - 1];
            let eps_hat = &den.a * &u + &den.b;
            let mean = (z - eps_hat * ((1.0 - al) / (1.0 - ab).sqrt())) / al.sqrt();
            z = if t > 1 {
                // Posterior variance of the forward chain; zero at t = 1,
                // so the final step is deterministic.
                let ab_prev = self.alpha_bars[t - 2];
                let sigma = (self.betas[t - 1] * (1.0 - ab_prev) / (1.0 - ab)).sqrt();
                let noise = DVector::from_fn(d, |_, _| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    v
                });
                mean + noise * sigma
            } else {
                mean
            };
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(GenError::Singular(
                "ancestral sampling diverged; the trained maps are ill-conditioned".into(),
            ));
        }
        let values = (0..d).map(|k| self.feature_shift[k] + self.feature_scale[k] * z[k]).collect();
        Ok(LatentCode { values, label: label.to_string() })
    }

    /// Samples a code and decodes it to a clip.
    pub fn sample(
        &self,
        space: &LatentSpace,
        label: &str,
        seed: u64,
    ) -> Result<MotionClip, GenError> {
        decode(space, &self.sample_code(label, seed)?)
    }

    /// Retrains on a mixture of the accepted clips and the corpus the model
    /// was last fit on.  `mix_ratio` 0 reproduces the current training
    /// corpus exactly; 1 trains on the accepted clips alone.
    pub fn finetune(
        &self,
        space: &LatentSpace,
        accepted: &[MotionClip],
        mix_ratio: f64,
    ) -> Result<DiffusionModel, GenError> {
        if accepted.is_empty() {
            return Err(GenError::InvalidArgument("accepted corpus is empty".into()));
        }
        if !(mix_ratio.is_finite() && (0.0..=1.0).contains(&mix_ratio)) {
            return Err(GenError::InvalidArgument(format!(
                "mix_ratio must lie in [0, 1], got {mix_ratio}"
            )));
        }
        if !self.is_trained() {
            return Err(GenError::InvalidArgument(
                "model must be trained before fine-tuning".into(),
            ));
        }
        let codes: Vec<LatentCode> =
            accepted.iter().map(|c| encode(space, c)).collect::<Result<_, _>>()?;
        let mixture = mixture_codes(&self.train_codes, &codes, mix_ratio);
        self.train_denoiser(&mixture)
    }
}

/// Mixture corpus for fine-tuning.  The endpoints are exact: 0 returns the
/// originals and 1 the accepted codes, unchanged.  In between, the corpus
/// keeps the original size; round(mix * n) slots cycle through the accepted
/// codes and the rest stride evenly through the originals.
pub fn mixture_codes(
    originals: &[LatentCode],
    accepted: &[LatentCode],
    mix_ratio: f64,
) -> Vec<LatentCode> {
    if mix_ratio <= 0.0 {
        return originals.to_vec();
    }
    if mix_ratio >= 1.0 {
        return accepted.to_vec();
    }
    let n = originals.len();
    let n_acc = ((mix_ratio * n as f64).round() as usize).min(n);
    let n_orig = n - n_acc;
    let mut out = Vec::with_capacity(n);
    for k in 0..n_acc {
        out.push(accepted[k % accepted.len()].clone());
    }
    for k in 0..n_orig {
        out.push(originals[k * n / n_orig].clone());
    }
    out
}
