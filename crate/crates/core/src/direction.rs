//! Fitting a consistent edit direction Δ* from one example pair.
//!
//! The objective is `L = L_img + λ·L_att` where
//!
//! * `L_img = ‖f(w₀ + Δw) − f(w₀ + Δ)‖₂` compares generator features of the
//!   user's edit `Δw` and the candidate `Δ`;
//! * `L_att = |(w₀ + Δ)·Δ|` puts the edited point on the hyperplane through
//!   the origin with normal Δ, or, when a target distance `d` is supplied,
//!   `L_att = |(w₀ + Δ)·Δ/‖Δ‖ − d|`.
//!
//! Δ starts at zero and is updated with AdamW using the analytic gradient.
//! Subgradients of `|·|` and `‖·‖₂` at zero are taken as zero, which makes a
//! zero user edit an exact fixed point.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::adamw::{AdamW, AdamWConfig};
use crate::error::{Error, Result};
use crate::generator::GeneratorParams;
use crate::geometry::{check_dim, normalize, EditDirection, EditPair, LatentCode, ZERO_DIRECTION_EPS};
use crate::linalg::{add, dot, norm, sub};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectionFitConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Kept for configuration compatibility; the losses are deterministic
    /// full evaluations and nothing is batched.
    pub batch_size: usize,
    /// Desired signed distance of the edited example from the hyperplane.
    pub target_distance: Option<f64>,
}

impl Default for DirectionFitConfig {
    fn default() -> Self {
        Self {
            lambda: 0.02,
            iterations: 1000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            batch_size: 16,
            target_distance: None,
        }
    }
}

impl DirectionFitConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig("lambda must be >= 0".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if !finite_pos(self.learning_rate) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        if !finite_pos(self.epsilon) || !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("epsilon must be > 0, weight decay >= 0".into()));
        }
        if matches!(self.target_distance, Some(d) if !d.is_finite()) {
            return Err(Error::InvalidConfig("target distance must be finite".into()));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub img: f64,
    pub att: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Losses at the iterate entering each update.
    pub trace: Vec<LossTerms>,
    /// Losses at the returned Δ*.
    pub final_losses: LossTerms,
    pub final_delta: Vec<f64>,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

impl FitReport {
    /// `iteration,l_img,l_att,l_total` rows, one per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,l_img,l_att,l_total\n");
        for (i, t) in self.trace.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{},{}", t.img, t.att, t.total);
        }
        out
    }

    /// Identical traces and results; wall time is ignored.
    pub fn same_result(&self, other: &FitReport) -> bool {
        self.trace == other.trace && self.final_losses == other.final_losses && self.final_delta == other.final_delta
    }
}

fn check_inputs(params: &GeneratorParams, w0: &[f64], delta_user: &[f64], delta: &[f64]) -> Result<()> {
    let d = params.latent_dim();
    check_dim(d, w0.len())?;
    check_dim(d, delta_user.len())?;
    check_dim(d, delta.len())
}

/// `‖f(w₀ + Δw) − f(w₀ + Δ)‖₂`
pub fn loss_img(params: &GeneratorParams, w0: &LatentCode, delta_user: &[f64], delta: &[f64]) -> Result<f64> {
    check_inputs(params, w0.as_slice(), delta_user, delta)?;
    let reference = params.features_raw(&add(w0.as_slice(), delta_user));
    let current = params.features_raw(&add(w0.as_slice(), delta));
    Ok(norm(&sub(&reference, &current)))
}

/// Hyperplane loss; see the module docs for both forms.
pub fn loss_att(w0: &LatentCode, delta: &[f64], target_distance: Option<f64>) -> Result<f64> {
    check_dim(w0.dim(), delta.len())?;
    let edited = add(w0.as_slice(), delta);
    match target_distance {
        None => Ok(dot(&edited, delta).abs()),
        Some(d) => {
            let n = norm(delta);
            if n <= ZERO_DIRECTION_EPS {
                return Err(Error::ZeroDirection);
            }
            Ok((dot(&edited, delta) / n - d).abs())
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss terms and the gradient of the total w.r.t. Δ, sharing one forward
/// pass. With a target distance and ‖Δ‖ ≤ 1e-12 the hyperplane term is
/// recorded as `|d|` with zero gradient.
fn evaluate(
    params: &GeneratorParams,
    w0: &[f64],
    reference: &[f64],
    delta: &[f64],
    lambda: f64,
    target_distance: Option<f64>,
) -> (LossTerms, Vec<f64>) {
    let edited = add(w0, delta);
    let current = params.features_raw(&edited);
    let residual = sub(&current, reference);
    let img = norm(&residual);
    let mut grad = if img > 0.0 {
        let unit: Vec<f64> = residual.iter().map(|r| r / img).collect();
        params.vjp_raw(&edited, &unit)
    } else {
        vec![0.0; delta.len()]
    };

    let proj = dot(&edited, delta);
    let att = match target_distance {
        None => {
            let s = sign(proj) * lambda;
            if s != 0.0 {
                for ((g, e), dl) in grad.iter_mut().zip(&edited).zip(delta) {
                    // ∂/∂Δ (w₀+Δ)·Δ = w₀ + 2Δ = edited + Δ
                    *g += s * (e + dl);
                }
            }
            proj.abs()
        }
        Some(d) => {
            let n = norm(delta);
            if n <= ZERO_DIRECTION_EPS {
                d.abs()
            } else {
                let unit: Vec<f64> = delta.iter().map(|v| v / n).collect();
                let w0_n = dot(w0, &unit);
                let x = w0_n + n;
                let s = sign(x - d) * lambda;
                if s != 0.0 {
                    for ((g, w), u) in grad.iter_mut().zip(w0).zip(&unit) {
                        // ∂/∂Δ [w₀·n + ‖Δ‖] = (w₀ − (w₀·n)n)/‖Δ‖ + n
                        *g += s * ((w - w0_n * u) / n + u);
                    }
                }
                (x - d).abs()
            }
        }
    };
    let terms = LossTerms {
        img,
        att,
        total: img + lambda * att,
    };
    (terms, grad)
}

/// `∇_Δ [L_img + λ·L_att]`
pub fn gradient_of_total_loss(
    params: &GeneratorParams,
    w0: &LatentCode,
    delta_user: &[f64],
    delta: &[f64],
    cfg: &DirectionFitConfig,
) -> Result<Vec<f64>> {
    check_inputs(params, w0.as_slice(), delta_user, delta)?;
    let reference = params.features_raw(&add(w0.as_slice(), delta_user));
    let (_, grad) = evaluate(
        params,
        w0.as_slice(),
        &reference,
        delta,
        cfg.lambda,
        cfg.target_distance,
    );
    Ok(grad)
}

/// Total loss `L_img + λ·L_att` at Δ.
pub fn total_loss(
    params: &GeneratorParams,
    w0: &LatentCode,
    delta_user: &[f64],
    delta: &[f64],
    cfg: &DirectionFitConfig,
) -> Result<LossTerms> {
    check_inputs(params, w0.as_slice(), delta_user, delta)?;
    let reference = params.features_raw(&add(w0.as_slice(), delta_user));
    let (terms, _) = evaluate(
        params,
        w0.as_slice(),
        &reference,
        delta,
        cfg.lambda,
        cfg.target_distance,
    );
    Ok(terms)
}

/// Run the optimization and return the full report, including a zero Δ*.
pub fn optimize_direction(params: &GeneratorParams, pair: &EditPair, cfg: &DirectionFitConfig) -> Result<FitReport> {
    cfg.validate()?;
    let d = params.latent_dim();
    pair.start.check_dim(d)?;
    pair.end.check_dim(d)?;

    let started = Instant::now();
    let w0 = pair.start.as_slice();
    let reference = params.features_raw(pair.end.as_slice());
    let mut delta = vec![0.0; d];
    let mut opt = AdamW::new(cfg.adamw(), d);
    let mut trace = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let (terms, grad) = evaluate(params, w0, &reference, &delta, cfg.lambda, cfg.target_distance);
        let finite = terms.total.is_finite() && grad.iter().all(|g| g.is_finite());
        trace.push(terms);
        if !finite {
            return Err(Error::NonFinite {
                stage: "direction fit",
                iteration,
                trace: trace.iter().map(|t| t.total).collect(),
            });
        }
        opt.step(&mut delta, &grad);
    }

    let (final_losses, _) = evaluate(params, w0, &reference, &delta, cfg.lambda, cfg.target_distance);
    if !final_losses.total.is_finite() || delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            stage: "direction fit",
            iteration: cfg.iterations,
            trace: trace.iter().map(|t| t.total).collect(),
        });
    }
    Ok(FitReport {
        trace,
        final_losses,
        final_delta: delta,
        wall_time: started.elapsed(),
    })
}

/// Fit Δ* and normalize it. Fails with `ZeroDirection` when the optimum
/// stays at the origin (e.g. a zero-length user edit).
pub fn fit_direction(
    params: &GeneratorParams,
    pair: &EditPair,
    cfg: &DirectionFitConfig,
) -> Result<(EditDirection, FitReport)> {
    let report = optimize_direction(params, pair, cfg)?;
    let dir = normalize(report.final_delta.clone())?;
    Ok((dir, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{init_generator, sample_latents, Activation};
    use crate::linalg::scale;

    fn lc(v: &[f64]) -> LatentCode {
        LatentCode::new(v.to_vec()).unwrap()
    }

    #[test]
    fn loss_att_examples() {
        let w0 = lc(&[1.0, 0.0]);
        assert_eq!(loss_att(&w0, &[0.0, 0.0], None).unwrap(), 0.0);
        assert_eq!(loss_att(&w0, &[0.0, 2.0], None).unwrap(), 4.0);
        assert_eq!(loss_att(&w0, &[0.0, 2.0], Some(2.0)).unwrap(), 0.0);
        assert!(matches!(
            loss_att(&w0, &[0.0, 0.0], Some(1.0)),
            Err(Error::ZeroDirection)
        ));
        assert!(loss_att(&w0, &[0.0], None).is_err());
    }

    #[test]
    fn loss_img_identity_and_linear_mode() {
        let p = init_generator(1, 8, 16, 5)
            .unwrap()
            .with_activation(Activation::Identity);
        let w0 = sample_latents(2, 1, 8).remove(0);
        let du = sample_latents(3, 1, 8).remove(0).into_vec();
        let dl = sample_latents(4, 1, 8).remove(0).into_vec();
        assert_eq!(loss_img(&p, &w0, &du, &du).unwrap(), 0.0);
        let aw1 = p.a().matmul(p.w1());
        let expected = norm(&aw1.matvec(&sub(&du, &dl)));
        assert!((loss_img(&p, &w0, &du, &dl).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn stationary_when_both_terms_vanish() {
        // (w₀+Δ)·Δ = 0 with Δ = Δw
        let p = init_generator(5, 2, 8, 5).unwrap();
        let w0 = lc(&[1.0, 0.0]);
        let du = vec![-1.0, 0.0];
        let g = gradient_of_total_loss(&p, &w0, &du, &du, &DirectionFitConfig::default()).unwrap();
        assert!(norm(&g) < 1e-12);
    }

    #[test]
    fn lambda_zero_isolates_image_term() {
        let p = init_generator(6, 16, 32, 5).unwrap();
        let w0 = sample_latents(7, 1, 16).remove(0);
        let du = sample_latents(8, 1, 16).remove(0).into_vec();
        let dl = scale(&du, 0.3);
        let cfg = DirectionFitConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let g = gradient_of_total_loss(&p, &w0, &du, &dl, &cfg).unwrap();
        let edited = add(w0.as_slice(), &dl);
        let r = sub(&p.features_raw(&edited), &p.features_raw(&add(w0.as_slice(), &du)));
        let rn = norm(&r);
        let expected = p.vjp_raw(&edited, &scale(&r, 1.0 / rn));
        assert!(norm(&sub(&g, &expected)) < 1e-14);
    }

    #[test]
    fn zero_edit_is_a_fixed_point() {
        let p = init_generator(9, 32, 64, 5).unwrap();
        let w0 = sample_latents(10, 1, 32).remove(0);
        let pair = EditPair::new(w0.clone(), w0).unwrap();
        let report = optimize_direction(&p, &pair, &DirectionFitConfig::default()).unwrap();
        assert!(norm(&report.final_delta) <= 1e-6);
        assert!(matches!(
            fit_direction(&p, &pair, &DirectionFitConfig::default()),
            Err(Error::ZeroDirection)
        ));
    }

    #[test]
    fn report_shape_and_csv() {
        let p = init_generator(11, 32, 64, 5).unwrap();
        let w = sample_latents(12, 2, 32);
        let pair = EditPair::new(w[0].clone(), lc(&add(w[0].as_slice(), &scale(w[1].as_slice(), 0.2)))).unwrap();
        let cfg = DirectionFitConfig {
            iterations: 50,
            ..Default::default()
        };
        let (dir, report) = fit_direction(&p, &pair, &cfg).unwrap();
        assert_eq!(report.trace.len(), 50);
        let max = report.trace.iter().map(|t| t.total).fold(f64::MIN, f64::max);
        assert!(report.final_losses.total <= max);
        assert!((norm(dir.unit()) - 1.0).abs() < 1e-12);
        let csv = report.to_csv();
        assert!(csv.starts_with("iteration,l_img,l_att,l_total\n0,"));
        assert_eq!(csv.lines().count(), 51);
    }

    #[test]
    fn target_distance_zero_direction_convention() {
        let p = init_generator(13, 8, 16, 5).unwrap();
        let w0 = sample_latents(14, 1, 8).remove(0);
        let du = sample_latents(15, 1, 8).remove(0).into_vec();
        let cfg = DirectionFitConfig {
            target_distance: Some(-1.5),
            ..Default::default()
        };
        let terms = total_loss(&p, &w0, &du, &[0.0; 8], &cfg).unwrap();
        assert_eq!(terms.att, 1.5);
        let pair = EditPair::new(w0.clone(), lc(&add(w0.as_slice(), &du))).unwrap();
        let (_, report) = fit_direction(&p, &pair, &cfg).unwrap();
        assert!(report.final_losses.total < report.trace[0].total);
    }

    #[test]
    fn config_validation() {
        let bad = [
            DirectionFitConfig {
                lambda: -0.1,
                ..Default::default()
            },
            DirectionFitConfig {
                iterations: 0,
                ..Default::default()
            },
            DirectionFitConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            DirectionFitConfig {
                beta1: 1.0,
                ..Default::default()
            },
            DirectionFitConfig {
                target_distance: Some(f64::NAN),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
