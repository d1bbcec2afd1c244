use std::f64::consts::PI;

/// Diagonal Gaussian posterior over one phrase latent.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPosterior {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl LatentPosterior {
    /// From a mean and a log-variance head.
    pub fn from_logvar(mu: &[f64], logvar: &[f64]) -> Self {
        Self {
            mu: mu.to_vec(),
            sigma: logvar.iter().map(|lv| (0.5 * lv).exp()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.mu)
            .zip(&self.sigma)
            .map(|((z, m), s)| {
                let u = (z - m) / s;
                -0.5 * (2.0 * PI).ln() - s.ln() - 0.5 * u * u
            })
            .sum()
    }
}

/// `z = mu + sigma * noise`.
pub fn reparameterize(post: &LatentPosterior, noise: &[f64]) -> Vec<f64> {
    assert_eq!(noise.len(), post.dim(), "noise dimension");
    post.mu
        .iter()
        .zip(&post.sigma)
        .zip(noise)
        .map(|((m, s), e)| m + s * e)
        .collect()
}

/// Equal-weight mixture of diagonal Gaussians, one per pseudo-input.
#[derive(Debug, Clone, PartialEq)]
pub struct VampPrior {
    pub components: Vec<LatentPosterior>,
}

/// Gradients of `log p(z)` with respect to `z` and to each component's mean
/// and log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorGrads {
    pub log_p: f64,
    pub dz: Vec<f64>,
    pub dmu: Vec<Vec<f64>>,
    pub dlogvar: Vec<Vec<f64>>,
}

fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl VampPrior {
    pub fn new(components: Vec<LatentPosterior>) -> Self {
        assert!(!components.is_empty(), "a mixture needs at least one component");
        Self { components }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        let terms: Vec<f64> = self.components.iter().map(|c| c.log_density(z)).collect();
        logsumexp(&terms) - (self.components.len() as f64).ln()
    }

    pub fn log_density_with_grads(&self, z: &[f64]) -> PriorGrads {
        let terms: Vec<f64> = self.components.iter().map(|c| c.log_density(z)).collect();
        let lse = logsumexp(&terms);
        let mut dz = vec![0.0; z.len()];
        let mut dmu = Vec::with_capacity(self.components.len());
        let mut dlogvar = Vec::with_capacity(self.components.len());
        for (c, t) in self.components.iter().zip(&terms) {
            let w = (t - lse).exp();
            let mut gm = vec![0.0; z.len()];
            let mut gl = vec![0.0; z.len()];
            for j in 0..z.len() {
                let var = c.sigma[j] * c.sigma[j];
                let diff = z[j] - c.mu[j];
                dz[j] -= w * diff / var;
                gm[j] = w * diff / var;
                gl[j] = w * (0.5 * diff * diff / var - 0.5);
            }
            dmu.push(gm);
            dlogvar.push(gl);
        }
        PriorGrads {
            log_p: lse - (self.components.len() as f64).ln(),
            dz,
            dmu,
            dlogvar,
        }
    }
}

/// Single-sample estimate `log q(z) - log p(z)` of `KL(q || p)`.
pub fn kl_mc_estimate(post: &LatentPosterior, z: &[f64], prior: &VampPrior) -> f64 {
    post.log_density(z) - prior.log_density(z)
}
