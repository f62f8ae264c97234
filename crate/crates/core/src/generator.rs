//! Seeded toy generator: a one-hidden-layer latent → attribute feature map
//! `a = A·act(W1·w + b1) + c` with an exact vector-Jacobian product.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, LatentCode};
use crate::linalg::{norm, Matrix};

pub const DEFAULT_LATENT_DIM: usize = 32;
pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_ATTRIBUTE_COUNT: usize = 5;

/// Standard deviation of the hidden biases.
pub const HIDDEN_BIAS_SCALE: f64 = 0.5;
/// Standard deviation of the output offsets.
pub const OUTPUT_BIAS_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Linear test mode: the feature map becomes affine in `w`.
    Identity,
}

/// Generator shape and seed. Weights are a pure function of these fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub d: usize,
    pub h: usize,
    pub k: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            d: DEFAULT_LATENT_DIM,
            h: DEFAULT_HIDDEN_DIM,
            k: DEFAULT_ATTRIBUTE_COUNT,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.h == 0 || self.k == 0 {
            return Err(Error::InvalidDims(format!(
                "d, h, k must be >= 1 (got d={}, h={}, k={})",
                self.d, self.h, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    spec: GeneratorSpec,
    activation: Activation,
    w1: Matrix,
    b1: Vec<f64>,
    a: Matrix,
    c: Vec<f64>,
}

/// Raw attribute coordinates, one per feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeVector(pub Vec<f64>);

impl AttributeVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.0.get(i).copied()
    }
}

/// Deterministic weights for `(seed, d, h, k)`. `W1` entries are
/// `N(0, 1/d)`, `A` entries `N(0, 1/h)`.
pub fn init_generator(seed: u64, d: usize, h: usize, k: usize) -> Result<GeneratorParams> {
    GeneratorParams::new(GeneratorSpec { seed, d, h, k })
}

impl GeneratorParams {
    pub fn new(spec: GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let GeneratorSpec { seed, d, h, k } = spec;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
        };
        let w1 = Matrix::from_vec(h, d, draw(h * d, 1.0 / (d as f64).sqrt()));
        let b1 = draw(h, HIDDEN_BIAS_SCALE);
        let a = Matrix::from_vec(k, h, draw(k * h, 1.0 / (h as f64).sqrt()));
        let c = draw(k, OUTPUT_BIAS_SCALE);
        Ok(Self {
            spec,
            activation: Activation::Tanh,
            w1,
            b1,
            a,
            c,
        })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn spec(&self) -> GeneratorSpec {
        self.spec
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.d
    }

    pub fn hidden_dim(&self) -> usize {
        self.spec.h
    }

    pub fn attribute_count(&self) -> usize {
        self.spec.k
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// `‖A‖₂·‖W1‖₂`, a Lipschitz constant of [`features`] (tanh is
    /// 1-Lipschitz).
    pub fn lipschitz_bound(&self) -> f64 {
        self.a.spectral_norm() * self.w1.spectral_norm()
    }

    fn pre_activation(&self, w: &[f64]) -> Vec<f64> {
        let mut z = self.w1.matvec(w);
        for (zi, bi) in z.iter_mut().zip(&self.b1) {
            *zi += bi;
        }
        z
    }

    /// Hidden activations and their derivatives at `w`.
    fn hidden(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z = self.pre_activation(w);
        match self.activation {
            Activation::Tanh => {
                let t: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
                let dt = t.iter().map(|v| 1.0 - v * v).collect();
                (t, dt)
            }
            Activation::Identity => {
                let ones = vec![1.0; z.len()];
                (z, ones)
            }
        }
    }

    pub(crate) fn features_raw(&self, w: &[f64]) -> Vec<f64> {
        let (act, _) = self.hidden(w);
        let mut out = self.a.matvec(&act);
        for (o, ci) in out.iter_mut().zip(&self.c) {
            *o += ci;
        }
        out
    }

    fn backprop(&self, dact: &[f64], cotangent: &[f64]) -> Vec<f64> {
        let mut hidden_ct = self.a.matvec_t(cotangent);
        for (g, s) in hidden_ct.iter_mut().zip(dact) {
            *g *= s;
        }
        self.w1.matvec_t(&hidden_ct)
    }

    pub(crate) fn vjp_raw(&self, w: &[f64], cotangent: &[f64]) -> Vec<f64> {
        let (_, dact) = self.hidden(w);
        self.backprop(&dact, cotangent)
    }
}

pub fn features(params: &GeneratorParams, w: &LatentCode) -> Result<AttributeVector> {
    w.check_dim(params.latent_dim())?;
    Ok(AttributeVector(params.features_raw(w.as_slice())))
}

/// `Jᵀ·cotangent` with `J = ∂a/∂w = A·diag(act'(W1·w + b1))·W1`.
pub fn features_vjp(params: &GeneratorParams, w: &LatentCode, cotangent: &[f64]) -> Result<Vec<f64>> {
    w.check_dim(params.latent_dim())?;
    check_dim(params.attribute_count(), cotangent.len())?;
    Ok(params.vjp_raw(w.as_slice(), cotangent))
}

/// Upper bound on `‖features(w)‖` over all `w` for the tanh generator.
pub fn feature_bound(params: &GeneratorParams) -> f64 {
    params.a.spectral_norm() * (params.hidden_dim() as f64).sqrt() + norm(&params.c)
}

/// I.i.d. standard-normal latents, deterministic in `seed`.
pub fn sample_latents(seed: u64, count: usize, d: usize) -> Vec<LatentCode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            LatentCode::new(v).expect("normal samples are finite")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{add_scaled, dot, sub};

    fn default_params(seed: u64) -> GeneratorParams {
        init_generator(seed, 32, 64, 5).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        assert_eq!(default_params(0), default_params(0));
        assert_ne!(default_params(0).w1(), default_params(1).w1());
        assert!(init_generator(0, 0, 64, 5).is_err());
        assert!(init_generator(0, 32, 0, 5).is_err());
        assert!(init_generator(0, 32, 64, 0).is_err());
    }

    #[test]
    fn w1_spectral_norm_in_band() {
        // A 64×32 Gaussian matrix with entry variance 1/32 has
        // ‖W1‖₂ ≈ 1 + √2 ≈ 2.4.
        let s = default_params(0).w1().spectral_norm();
        assert!(s.is_finite() && s > 0.0);
        assert!((1.8..3.0).contains(&s), "‖W1‖₂ = {s}");
    }

    #[test]
    fn features_at_origin_is_closed_form() {
        let p = default_params(3);
        let a = features(&p, &LatentCode::zeros(32)).unwrap();
        let t: Vec<f64> = p.b1().iter().map(|b| b.tanh()).collect();
        let expected = p.a().matvec(&t);
        for ((got, e), c) in a.0.iter().zip(&expected).zip(p.c()) {
            assert!((got - (e + c)).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_mode_is_affine() {
        let p = default_params(4).with_activation(Activation::Identity);
        let w = sample_latents(9, 1, 32).remove(0);
        let aw1 = p.a().matmul(p.w1());
        let ab1 = p.a().matvec(p.b1());
        let lin = aw1.matvec(w.as_slice());
        let a = features(&p, &w).unwrap();
        for j in 0..5 {
            let expected = lin[j] + ab1[j] + p.c()[j];
            assert!((a.0[j] - expected).abs() < 1e-12);
        }
        let ct = [1.0, -0.5, 0.25, 2.0, 0.0];
        let g = features_vjp(&p, &w, &ct).unwrap();
        let expected = aw1.matvec_t(&ct);
        for (x, y) in g.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn vjp_zero_cotangent_and_dims() {
        let p = default_params(5);
        let w = sample_latents(1, 1, 32).remove(0);
        assert!(features_vjp(&p, &w, &[0.0; 5]).unwrap().iter().all(|v| *v == 0.0));
        assert!(features_vjp(&p, &w, &[0.0; 4]).is_err());
        assert!(features(&p, &LatentCode::zeros(31)).is_err());
    }

    #[test]
    fn directional_derivative_matches_central_difference() {
        let p = default_params(6);
        let w = sample_latents(2, 1, 32).remove(0);
        let v = sample_latents(3, 1, 32).remove(0);
        let step = 1e-5;
        let plus = p.features_raw(&add_scaled(w.as_slice(), step, v.as_slice()));
        let minus = p.features_raw(&add_scaled(w.as_slice(), -step, v.as_slice()));
        for j in 0..5 {
            let mut e = [0.0; 5];
            e[j] = 1.0;
            let analytic = dot(&p.vjp_raw(w.as_slice(), &e), v.as_slice());
            let fd = (plus[j] - minus[j]) / (2.0 * step);
            assert!(
                (analytic - fd).abs() <= 1e-5 * fd.abs().max(1e-3),
                "attr {j}: {analytic} vs {fd}"
            );
        }
    }

    #[test]
    fn features_are_bounded_and_lipschitz() {
        let p = default_params(7);
        let bound = feature_bound(&p);
        let lip = p.lipschitz_bound();
        let ws = sample_latents(8, 50, 32);
        let ds = sample_latents(9, 50, 32);
        for (w, d) in ws.iter().zip(&ds) {
            let far = crate::linalg::scale(w.as_slice(), 100.0);
            assert!(norm(&p.features_raw(&far)) <= bound);
            let a0 = p.features_raw(w.as_slice());
            let a1 = p.features_raw(&add_scaled(w.as_slice(), 0.3, d.as_slice()));
            assert!(norm(&sub(&a1, &a0)) <= lip * 0.3 * norm(d.as_slice()) + 1e-12);
        }
    }

    #[test]
    fn sample_latents_basics() {
        assert!(sample_latents(0, 0, 8).is_empty());
        assert_eq!(sample_latents(5, 3, 8), sample_latents(5, 3, 8));
        assert_ne!(sample_latents(5, 3, 8), sample_latents(6, 3, 8));
    }

    #[test]
    fn sample_latents_moments() {
        let d = 8;
        let xs = sample_latents(42, 10_000, d);
        for j in 0..d {
            let col: Vec<f64> = xs.iter().map(|w| w.as_slice()[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 0.05, "mean {mean}");
            assert!((0.9..=1.1).contains(&var), "var {var}");
        }
    }
}
