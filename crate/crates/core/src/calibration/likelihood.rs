//! Log-likelihoods of the four calibration modes. All inputs are in working
//! units: dimensionless `x`, `θ` multipliers for the surrogate, and outputs
//! in whatever scale the caller chose (standardized for GP-based modes).

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::data::ExperimentalDataset;
use crate::design::SyntheticDataset;
use crate::gp::{chol_jitter, log_marginal_from, DiscrepancyHypers, SurrogateHypers};
use crate::model::{CalibrationParameters, ForwardModel};

/// Relative nugget on the synthetic block of the surrogate covariance.
pub const SYNTHETIC_NUGGET: f64 = 1e-8;

/// `Σ log N(rᵢ | 0, σ²)`.
pub fn loglik_iid(residuals: &[f64], sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = residuals.len() as f64;
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    -0.5 * n * (2.0 * PI * sigma * sigma).ln() - 0.5 * rss / (sigma * sigma)
}

/// Zero-mean multivariate normal log density; `−∞` if `K` cannot be factored.
pub fn loglik_mvn(residuals: &DVector<f64>, k: &DMatrix<f64>) -> f64 {
    match chol_jitter(k) {
        Ok(f) => log_marginal_from(&f, residuals),
        Err(e) => {
            warn!("covariance factorization failed: {e}");
            f64::NEG_INFINITY
        }
    }
}

fn eta_or_warn(
    theta: &CalibrationParameters,
    data: &ExperimentalDataset,
    model: &dyn ForwardModel,
) -> Option<Vec<f64>> {
    match model.eta(theta, &data.x) {
        Ok(eta) => Some(eta),
        Err(e) => {
            warn!("forward solve failed at {theta:?}: {e}");
            None
        }
    }
}

/// Independent Gaussian errors around one forward solve.
pub fn loglik_bi(
    theta: &CalibrationParameters,
    sigma: f64,
    data: &ExperimentalDataset,
    model: &dyn ForwardModel,
) -> f64 {
    let Some(eta) = eta_or_warn(theta, data, model) else {
        return f64::NEG_INFINITY;
    };
    let r: Vec<f64> = data.z.iter().zip(&eta).map(|(z, e)| z - e).collect();
    loglik_iid(&r, sigma)
}

/// `K_δ(X, X) + σ²I`.
pub fn discrepancy_cov(x: &[f64], d: &DiscrepancyHypers, sigma: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    add_discrepancy(&mut k, x, d);
    for i in 0..n {
        k[(i, i)] += sigma * sigma;
    }
    k
}

fn add_discrepancy(k: &mut DMatrix<f64>, x: &[f64], d: &DiscrepancyHypers) {
    let c = 0.5 / (d.beta_d * d.beta_d);
    for j in 0..x.len() {
        for i in 0..x.len() {
            k[(i, j)] += d.lambda_d * (-(x[i] - x[j]).powi(2) * c).exp();
        }
    }
}

/// Model output as mean, SE discrepancy plus noise as covariance.
pub fn loglik_bcd(
    theta: &CalibrationParameters,
    d: &DiscrepancyHypers,
    sigma: f64,
    data: &ExperimentalDataset,
    model: &dyn ForwardModel,
) -> f64 {
    let Some(eta) = eta_or_warn(theta, data, model) else {
        return f64::NEG_INFINITY;
    };
    let r = DVector::from_iterator(data.len(), data.z.iter().zip(&eta).map(|(z, e)| z - e));
    loglik_mvn(&r, &discrepancy_cov(&data.x, d, sigma))
}

/// Squared distances between experimental and synthetic inputs, and the
/// stacked output vector `[z; y]`, computed once per dataset pair.
#[derive(Debug, Clone)]
pub struct SurrogateCache {
    ne: usize,
    ns: usize,
    x_e: Vec<f64>,
    x_s: Vec<f64>,
    dx_ee: Vec<f64>,
    dx_es: Vec<f64>,
    dx_ss: Vec<f64>,
    dt_ss: Vec<f64>,
    theta_s: Vec<Vec<f64>>,
    stacked: DVector<f64>,
}

impl SurrogateCache {
    pub fn new(data: &ExperimentalDataset, synth: &SyntheticDataset) -> Self {
        let (ne, ns) = (data.len(), synth.len());
        let sq = |a: f64, b: f64| (a - b) * (a - b);
        let mut dx_ee = vec![0.0; ne * ne];
        for i in 0..ne {
            for j in 0..ne {
                dx_ee[i * ne + j] = sq(data.x[i], data.x[j]);
            }
        }
        let mut dx_es = vec![0.0; ne * ns];
        for i in 0..ne {
            for j in 0..ns {
                dx_es[i * ns + j] = sq(data.x[i], synth.x[j]);
            }
        }
        let mut dx_ss = vec![0.0; ns * ns];
        let mut dt_ss = vec![0.0; ns * ns];
        for i in 0..ns {
            for j in 0..ns {
                dx_ss[i * ns + j] = sq(synth.x[i], synth.x[j]);
                dt_ss[i * ns + j] = crate::gp::sq_dist(&synth.theta[i], &synth.theta[j]);
            }
        }
        let stacked = DVector::from_iterator(ne + ns, data.z.iter().chain(&synth.y).copied());
        Self {
            ne,
            ns,
            x_e: data.x.clone(),
            x_s: synth.x.clone(),
            dx_ee,
            dx_es,
            dx_ss,
            dt_ss,
            theta_s: synth.theta.clone(),
            stacked,
        }
    }

    /// Joint covariance of `[z; y]` with experimental rows at `(xᵢ, m)`.
    pub fn joint_cov(&self, m: &[f64], s: &SurrogateHypers, d: Option<&DiscrepancyHypers>, sigma: f64) -> DMatrix<f64> {
        let (ne, ns) = (self.ne, self.ns);
        let n = ne + ns;
        let cx = 0.5 / (s.beta_x * s.beta_x);
        let ct = 0.5 / (s.beta_theta * s.beta_theta);
        let mut k = DMatrix::zeros(n, n);
        for j in 0..ne {
            for i in 0..ne {
                k[(i, j)] = s.lambda_x * (-self.dx_ee[i * ne + j] * cx).exp();
            }
        }
        for j in 0..ns {
            let dt = crate::gp::sq_dist(m, &self.theta_s[j]) * ct;
            for i in 0..ne {
                let v = s.lambda_x * (-self.dx_es[i * ns + j] * cx - dt).exp();
                k[(i, ne + j)] = v;
                k[(ne + j, i)] = v;
            }
        }
        for j in 0..ns {
            for i in j..ns {
                let v = s.lambda_x * (-self.dx_ss[i * ns + j] * cx - self.dt_ss[i * ns + j] * ct).exp();
                k[(ne + i, ne + j)] = v;
                k[(ne + j, ne + i)] = v;
            }
            k[(ne + j, ne + j)] += SYNTHETIC_NUGGET * s.lambda_x;
        }
        if let Some(d) = d {
            let mut block = DMatrix::zeros(ne, ne);
            add_discrepancy(&mut block, &self.x_e, d);
            let mut top = k.view_mut((0, 0), (ne, ne));
            top += &block;
        }
        for i in 0..ne {
            k[(i, i)] += sigma * sigma;
        }
        k
    }

    pub fn loglik(&self, m: &[f64], s: &SurrogateHypers, d: Option<&DiscrepancyHypers>, sigma: f64) -> f64 {
        if !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        loglik_mvn(&self.stacked, &self.joint_cov(m, s, d, sigma))
    }
}

impl SurrogateCache {
    /// Surrogate posterior of `η(x, m)` at `x_query`, conditioned on the same
    /// rows and covariance as [`SurrogateCache::loglik`]. Returns mean and
    /// standard deviation in working units.
    pub fn predict(
        &self,
        m: &[f64],
        s: &SurrogateHypers,
        d: Option<&DiscrepancyHypers>,
        sigma: f64,
        x_query: &[f64],
    ) -> crate::error::Result<(Vec<f64>, Vec<f64>)> {
        let f = chol_jitter(&self.joint_cov(m, s, d, sigma))?;
        let alpha = f.solve(&self.stacked);
        let cx = 0.5 / (s.beta_x * s.beta_x);
        let ct = 0.5 / (s.beta_theta * s.beta_theta);
        let n = self.ne + self.ns;
        let mut mean = Vec::with_capacity(x_query.len());
        let mut sd = Vec::with_capacity(x_query.len());
        for &xq in x_query {
            let kstar = DVector::from_fn(n, |i, _| {
                if i < self.ne {
                    s.lambda_x * (-(xq - self.x_e[i]).powi(2) * cx).exp()
                } else {
                    let j = i - self.ne;
                    let dt = crate::gp::sq_dist(m, &self.theta_s[j]);
                    s.lambda_x * (-(xq - self.x_s[j]).powi(2) * cx - dt * ct).exp()
                }
            });
            mean.push(kstar.dot(&alpha));
            let v = f.solve(&kstar);
            sd.push((s.lambda_x - kstar.dot(&v)).max(0.0).sqrt());
        }
        Ok((mean, sd))
    }
}

/// Joint GP density of experimental and synthetic outputs, with the
/// experimental rows placed at the sampled θ. No forward solve.
pub fn loglik_bce(
    theta: &CalibrationParameters,
    s: &SurrogateHypers,
    sigma: f64,
    data: &ExperimentalDataset,
    synth: &SyntheticDataset,
) -> f64 {
    let m = theta.multipliers_of(&synth.reference);
    SurrogateCache::new(data, synth).loglik(&m, s, None, sigma)
}

/// As [`loglik_bce`] with a discrepancy GP added to the experimental block.
pub fn loglik_bced(
    theta: &CalibrationParameters,
    s: &SurrogateHypers,
    d: &DiscrepancyHypers,
    sigma: f64,
    data: &ExperimentalDataset,
    synth: &SyntheticDataset,
) -> f64 {
    let m = theta.multipliers_of(&synth.reference);
    SurrogateCache::new(data, synth).loglik(&m, s, Some(d), sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignBox;
    use crate::error::Result;

    struct Linear;

    impl ForwardModel for Linear {
        fn eta(&self, theta: &CalibrationParameters, x: &[f64]) -> Result<Vec<f64>> {
            let m = theta.multipliers_of(&CalibrationParameters::REFERENCE);
            Ok(x.iter().map(|x| m[0] * x + 0.1 * m[3]).collect())
        }
    }

    fn data3() -> ExperimentalDataset {
        ExperimentalDataset::new(vec![0.1, 0.4, 0.9], vec![0.3, 0.2, 1.1]).unwrap()
    }

    fn dense_mvn(r: &[f64], k: &DMatrix<f64>) -> f64 {
        let n = r.len();
        let rv = DVector::from_column_slice(r);
        let inv = k.clone().try_inverse().unwrap();
        -0.5 * (rv.transpose() * inv * &rv)[(0, 0)] - 0.5 * k.determinant().ln() - 0.5 * n as f64 * (2.0 * PI).ln()
    }

    #[test]
    fn iid_exact_fit_and_sigma_doubling() {
        let m = 7.0;
        let s = 0.3;
        assert!((loglik_iid(&[0.0; 7], s) + m / 2.0 * (2.0 * PI * s * s).ln()).abs() < 1e-12);
        let r = [0.1, -0.2, 0.05, 0.3];
        let rss: f64 = r.iter().map(|v| v * v).sum();
        let diff = loglik_iid(&r, 2.0 * s) - loglik_iid(&r, s);
        assert!((diff - (-4.0 * 2f64.ln() + 0.375 * rss / (s * s))).abs() < 1e-12);
    }

    #[test]
    fn bi_matches_density_product() {
        let theta = CalibrationParameters::REFERENCE.scaled_by(&[1.2, 1.0, 1.0, 2.0]);
        let d = data3();
        let eta = Linear.eta(&theta, &d.x).unwrap();
        let s: f64 = 0.07;
        let direct: f64 =
            d.z.iter()
                .zip(&eta)
                .map(|(z, e)| ((-(z - e) * (z - e) / (2.0 * s * s)).exp() / (2.0 * PI * s * s).sqrt()).ln())
                .sum();
        assert!((loglik_bi(&theta, s, &d, &Linear) - direct).abs() < 1e-12);
    }

    #[test]
    fn bcd_matches_dense_oracle_and_nests() {
        let theta = CalibrationParameters::REFERENCE;
        let d = data3();
        let h = DiscrepancyHypers {
            beta_d: 0.3,
            lambda_d: 0.5,
        };
        let sigma = 0.2;
        let eta = Linear.eta(&theta, &d.x).unwrap();
        let r: Vec<f64> = d.z.iter().zip(&eta).map(|(z, e)| z - e).collect();
        let k = DMatrix::from_fn(3, 3, |i, j| {
            0.5 * (-(d.x[i] - d.x[j]).powi(2) / (2.0 * 0.09)).exp() + if i == j { 0.04 } else { 0.0 }
        });
        assert!((loglik_bcd(&theta, &h, sigma, &d, &Linear) - dense_mvn(&r, &k)).abs() < 1e-10);

        let var = 0.15;
        let tiny = DiscrepancyHypers {
            beta_d: 0.3,
            lambda_d: 1e-12 * var,
        };
        let bi = loglik_bi(&theta, sigma, &d, &Linear);
        assert!((loglik_bcd(&theta, &tiny, sigma, &d, &Linear) - bi).abs() < 1e-6);
    }

    #[test]
    fn bcd_permutation_invariant() {
        let theta = CalibrationParameters::REFERENCE;
        let d = data3();
        let p = d.subset(&[2, 0, 1]);
        let h = DiscrepancyHypers {
            beta_d: 0.25,
            lambda_d: 0.8,
        };
        let a = loglik_bcd(&theta, &h, 0.1, &d, &Linear);
        let b = loglik_bcd(&theta, &h, 0.1, &p, &Linear);
        assert!((a - b).abs() < 1e-10);
    }

    fn synth3() -> SyntheticDataset {
        SyntheticDataset {
            x: vec![0.0, 0.5, 0.8],
            theta: vec![
                vec![1.0, 2.0, 0.5, 3.0],
                vec![0.4, 1.1, 1.9, 2.2],
                vec![5.0, 0.2, 1.0, 1.0],
            ],
            y: vec![0.4, -0.3, 0.9],
            seed: 0,
            design_box: DesignBox::default(),
            reference: CalibrationParameters::REFERENCE,
            pool: 3,
        }
    }

    fn bce_oracle(
        m: &[f64],
        s: &SurrogateHypers,
        d: Option<&DiscrepancyHypers>,
        sigma: f64,
        data: &ExperimentalDataset,
        synth: &SyntheticDataset,
    ) -> f64 {
        let ne = data.len();
        let n = ne + synth.len();
        let inputs: Vec<(f64, Vec<f64>)> = data
            .x
            .iter()
            .map(|x| (*x, m.to_vec()))
            .chain(synth.x.iter().zip(&synth.theta).map(|(x, t)| (*x, t.clone())))
            .collect();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let dx = (inputs[i].0 - inputs[j].0).powi(2);
                let dt: f64 = inputs[i].1.iter().zip(&inputs[j].1).map(|(a, b)| (a - b).powi(2)).sum();
                k[(i, j)] =
                    s.lambda_x * (-dx / (2.0 * s.beta_x.powi(2))).exp() * (-dt / (2.0 * s.beta_theta.powi(2))).exp();
                if i < ne && j < ne {
                    if let Some(d) = d {
                        k[(i, j)] += d.lambda_d * (-dx / (2.0 * d.beta_d.powi(2))).exp();
                    }
                    if i == j {
                        k[(i, j)] += sigma * sigma;
                    }
                } else if i == j {
                    k[(i, j)] += 1e-8 * s.lambda_x;
                }
            }
        }
        let y: Vec<f64> = data.z.iter().chain(&synth.y).copied().collect();
        dense_mvn(&y, &k)
    }

    #[test]
    fn bce_and_bced_match_dense_oracle() {
        let data = ExperimentalDataset::new(vec![0.2, 0.7], vec![0.5, -0.1]).unwrap();
        let synth = synth3();
        let m = [1.5, 1.0, 0.8, 2.5];
        let theta = CalibrationParameters::REFERENCE.scaled_by(&m);
        let s = SurrogateHypers {
            beta_x: 0.4,
            beta_theta: 2.0,
            lambda_x: 0.9,
        };
        let d = DiscrepancyHypers {
            beta_d: 0.3,
            lambda_d: 0.2,
        };
        let sigma = 0.15;
        let a = loglik_bce(&theta, &s, sigma, &data, &synth);
        assert!((a - bce_oracle(&m, &s, None, sigma, &data, &synth)).abs() < 1e-10);
        let b = loglik_bced(&theta, &s, &d, sigma, &data, &synth);
        assert!((b - bce_oracle(&m, &s, Some(&d), sigma, &data, &synth)).abs() < 1e-10);

        let tiny = DiscrepancyHypers {
            beta_d: 0.3,
            lambda_d: 1e-12,
        };
        assert!((loglik_bced(&theta, &s, &tiny, sigma, &data, &synth) - a).abs() < 1e-6);
    }

    #[test]
    fn bce_degenerate_and_permutation() {
        let data = ExperimentalDataset::new(vec![0.2, 0.7], vec![0.5, -0.1]).unwrap();
        let mut empty = synth3();
        empty.x.clear();
        empty.theta.clear();
        empty.y.clear();
        let s = SurrogateHypers {
            beta_x: 0.4,
            beta_theta: 2.0,
            lambda_x: 1e-14,
        };
        let theta = CalibrationParameters::REFERENCE;
        let v = loglik_bce(&theta, &s, 0.3, &data, &empty);
        assert!((v - loglik_iid(&data.z, 0.3)).abs() < 1e-10);

        let synth = synth3();
        let mut perm = synth.clone();
        for (dst, src) in [(0, 2), (1, 0), (2, 1)] {
            perm.x[dst] = synth.x[src];
            perm.theta[dst] = synth.theta[src].clone();
            perm.y[dst] = synth.y[src];
        }
        let s = SurrogateHypers {
            beta_x: 0.4,
            beta_theta: 2.0,
            lambda_x: 0.9,
        };
        let a = loglik_bce(&theta, &s, 0.2, &data, &synth);
        let b = loglik_bce(&theta, &s, 0.2, &data, &perm);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn surrogate_prediction_matches_dense_conditional() {
        let data = ExperimentalDataset::new(vec![0.2, 0.7], vec![0.5, -0.1]).unwrap();
        let synth = synth3();
        let m = [1.5, 1.0, 0.8, 2.5];
        let s = SurrogateHypers {
            beta_x: 0.4,
            beta_theta: 2.0,
            lambda_x: 0.9,
        };
        let cache = SurrogateCache::new(&data, &synth);
        let xq = [0.0, 0.45];
        let (mean, sd) = cache.predict(&m, &s, None, 0.15, &xq).unwrap();
        let k = cache.joint_cov(&m, &s, None, 0.15);
        let inv = k.try_inverse().unwrap();
        let y = DVector::from_vec(vec![0.5, -0.1, 0.4, -0.3, 0.9]);
        let rows: Vec<(f64, Vec<f64>)> = data
            .x
            .iter()
            .map(|x| (*x, m.to_vec()))
            .chain(synth.x.iter().zip(&synth.theta).map(|(x, t)| (*x, t.clone())))
            .collect();
        for (q, xq) in xq.iter().enumerate() {
            let ks = DVector::from_iterator(
                5,
                rows.iter().map(|(x, t)| {
                    let dt: f64 = t.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum();
                    0.9 * (-(xq - x).powi(2) / 0.32 - dt / 8.0).exp()
                }),
            );
            let mu = (ks.transpose() * &inv * &y)[(0, 0)];
            let var = 0.9 - (ks.transpose() * &inv * &ks)[(0, 0)];
            assert!((mean[q] - mu).abs() < 1e-10);
            assert!((sd[q] - var.max(0.0).sqrt()).abs() < 1e-8);
        }
    }
}
