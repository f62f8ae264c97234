//! Example-edit producer: plain gradient descent in latent space toward a
//! target attribute state, with unedited attributes anchored and a
//! proximity term keeping the edit local.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GeneratorParams;
use crate::geometry::{EditPair, LatentCode};
use crate::linalg::dot;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeGoal {
    Target(f64),
    /// Hold at the starting value.
    Anchor,
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EditTarget(Vec<AttributeGoal>);

impl EditTarget {
    pub fn new(goals: Vec<AttributeGoal>) -> Result<Self> {
        if !goals.iter().any(|g| matches!(g, AttributeGoal::Target(_))) {
            return Err(Error::NoTargetEntry);
        }
        if let Some(AttributeGoal::Target(v)) = goals
            .iter()
            .find(|g| matches!(g, AttributeGoal::Target(v) if !v.is_finite()))
        {
            return Err(Error::NonFiniteInput(format!("target value {v}")));
        }
        Ok(Self(goals))
    }

    /// Targets on the listed attributes, every other attribute anchored.
    pub fn anchored(k: usize, targets: &[(usize, f64)]) -> Result<Self> {
        Self::with_rest(k, targets, AttributeGoal::Anchor)
    }

    /// Targets on the listed attributes, every other attribute free.
    pub fn free(k: usize, targets: &[(usize, f64)]) -> Result<Self> {
        Self::with_rest(k, targets, AttributeGoal::Free)
    }

    fn with_rest(k: usize, targets: &[(usize, f64)], rest: AttributeGoal) -> Result<Self> {
        let mut goals = vec![rest; k];
        for &(i, v) in targets {
            if i >= k {
                return Err(Error::AttributeOutOfRange { index: i, count: k });
            }
            goals[i] = AttributeGoal::Target(v);
        }
        Self::new(goals)
    }

    pub fn goals(&self) -> &[AttributeGoal] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Weight μ of the `‖w − w₀‖²` proximity term.
    pub proximity: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            learning_rate: 0.05,
            proximity: 0.05,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if !(self.proximity >= 0.0 && self.proximity.is_finite()) {
            return Err(Error::InvalidConfig("proximity weight must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome {
    pub pair: EditPair,
    /// Total loss before each step, then once more at the final point
    /// (`steps + 1` entries).
    pub trace: Vec<f64>,
    /// Largest `|a_j(w'₀) − t_j|` over targeted attributes.
    pub target_error: f64,
}

/// Residual of each attribute against its goal; free attributes give 0.
fn residuals(target: &EditTarget, a: &[f64], a0: &[f64]) -> Vec<f64> {
    target
        .goals()
        .iter()
        .zip(a.iter().zip(a0))
        .map(|(g, (ai, a0i))| match g {
            AttributeGoal::Target(t) => ai - t,
            AttributeGoal::Anchor => ai - a0i,
            AttributeGoal::Free => 0.0,
        })
        .collect()
}

/// Edit loss `Σ_target (a_j − t_j)² + Σ_anchor (a_j − a_j(w₀))² + μ‖w − w₀‖²`.
pub fn edit_loss(
    params: &GeneratorParams,
    w0: &LatentCode,
    w: &LatentCode,
    target: &EditTarget,
    proximity: f64,
) -> Result<f64> {
    let d = params.latent_dim();
    w0.check_dim(d)?;
    w.check_dim(d)?;
    check_target(params, target)?;
    let a0 = params.features_raw(w0.as_slice());
    let a = params.features_raw(w.as_slice());
    let r = residuals(target, &a, &a0);
    let drift: Vec<f64> = w.as_slice().iter().zip(w0.as_slice()).map(|(x, y)| x - y).collect();
    Ok(dot(&r, &r) + proximity * dot(&drift, &drift))
}

fn check_target(params: &GeneratorParams, target: &EditTarget) -> Result<()> {
    if target.len() != params.attribute_count() {
        return Err(Error::WrongAttributeCount {
            expected: params.attribute_count(),
            found: target.len(),
        });
    }
    Ok(())
}

pub fn solve_edit(
    params: &GeneratorParams,
    w0: &LatentCode,
    target: &EditTarget,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    w0.check_dim(params.latent_dim())?;
    check_target(params, target)?;

    let start = w0.as_slice();
    let a0 = params.features_raw(start);
    let mut w = start.to_vec();
    let mut trace = Vec::with_capacity(cfg.steps + 1);

    let loss_at = |a: &[f64], w: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let r = residuals(target, a, &a0);
        let drift: Vec<f64> = w.iter().zip(start).map(|(x, y)| x - y).collect();
        let loss = dot(&r, &r) + cfg.proximity * dot(&drift, &drift);
        (loss, r, drift)
    };

    for step in 0..=cfg.steps {
        let a = params.features_raw(&w);
        let (loss, r, drift) = loss_at(&a, &w);
        if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
            trace.push(loss);
            return Err(Error::NonFinite {
                stage: "edit solver",
                iteration: step,
                trace,
            });
        }
        trace.push(loss);
        if step == cfg.steps {
            break;
        }
        let cotangent: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let grad = params.vjp_raw(&w, &cotangent);
        for ((wi, gi), di) in w.iter_mut().zip(&grad).zip(&drift) {
            *wi -= cfg.learning_rate * (gi + 2.0 * cfg.proximity * di);
        }
    }

    let a = params.features_raw(&w);
    let target_error = target
        .goals()
        .iter()
        .zip(&a)
        .filter_map(|(g, ai)| match g {
            AttributeGoal::Target(t) => Some((ai - t).abs()),
            _ => None,
        })
        .fold(0.0, f64::max);
    let end = LatentCode::new(w)?;
    Ok(SolveOutcome {
        pair: EditPair::new(w0.clone(), end)?,
        trace,
        target_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{init_generator, sample_latents};
    use crate::linalg::{add_scaled, norm};

    fn setup(seed: u64) -> (GeneratorParams, LatentCode) {
        let p = init_generator(seed, 32, 64, 5).unwrap();
        let w0 = sample_latents(seed + 100, 1, 32).remove(0);
        (p, w0)
    }

    #[test]
    fn target_validation() {
        assert!(matches!(
            EditTarget::new(vec![AttributeGoal::Anchor; 5]),
            Err(Error::NoTargetEntry)
        ));
        assert!(EditTarget::anchored(5, &[(5, 1.0)]).is_err());
        assert!(EditTarget::anchored(5, &[(0, f64::NAN)]).is_err());
        let (p, w0) = setup(0);
        let short = EditTarget::anchored(4, &[(0, 1.0)]).unwrap();
        assert!(solve_edit(&p, &w0, &short, &SolverConfig::default()).is_err());
    }

    #[test]
    fn identity_target_keeps_start() {
        let (p, w0) = setup(1);
        let a0 = p.features_raw(w0.as_slice());
        let target = EditTarget::anchored(5, &[(0, a0[0])]).unwrap();
        let out = solve_edit(&p, &w0, &target, &SolverConfig::default()).unwrap();
        assert!(norm(&out.pair.displacement()) < 1e-3);
    }

    #[test]
    fn reachable_single_target_is_hit() {
        for seed in 0..5 {
            let (p, w0) = setup(seed);
            let a0 = p.features_raw(w0.as_slice());
            let t = a0[0] + 0.25;
            let target = EditTarget::anchored(5, &[(0, t)]).unwrap();
            let out = solve_edit(&p, &w0, &target, &SolverConfig::default()).unwrap();
            let a1 = p.features_raw(out.pair.end.as_slice());
            assert!((a1[0] - t).abs() < 0.05, "seed {seed}: {}", a1[0] - t);
            assert!(out.target_error < 0.05);
            assert_eq!(out.trace.len(), 201);
        }
    }

    /// Best loss over 20 random restarts of finite-difference descent on
    /// `edit_loss`.
    fn restart_oracle(p: &GeneratorParams, w0: &LatentCode, target: &EditTarget, mu: f64) -> f64 {
        let loss = |w: &[f64]| edit_loss(p, w0, &LatentCode::new(w.to_vec()).unwrap(), target, mu).unwrap();
        let noise = sample_latents(777, 20, w0.dim());
        let mut best = f64::INFINITY;
        for (r, z) in noise.iter().enumerate() {
            let jitter = if r == 0 { 0.0 } else { 0.3 };
            let mut w = add_scaled(w0.as_slice(), jitter, z.as_slice());
            for _ in 0..400 {
                let h = 1e-6;
                let g: Vec<f64> = (0..w.len())
                    .map(|i| {
                        let mut up = w.clone();
                        let mut dn = w.clone();
                        up[i] += h;
                        dn[i] -= h;
                        (loss(&up) - loss(&dn)) / (2.0 * h)
                    })
                    .collect();
                w = add_scaled(&w, -0.05, &g);
            }
            best = best.min(loss(&w));
        }
        best
    }

    #[test]
    fn solver_loss_close_to_restart_oracle() {
        for seed in [0, 3] {
            let (p, w0) = setup(seed);
            let a0 = p.features_raw(w0.as_slice());
            let target = EditTarget::anchored(5, &[(0, a0[0] + 0.3)]).unwrap();
            let cfg = SolverConfig::default();
            let out = solve_edit(&p, &w0, &target, &cfg).unwrap();
            let ours = *out.trace.last().unwrap();
            let oracle = restart_oracle(&p, &w0, &target, cfg.proximity);
            assert!(ours <= 1.1 * oracle + 1e-9, "seed {seed}: {ours} vs oracle {oracle}");
        }
    }

    #[test]
    fn anchored_attributes_barely_drift() {
        for seed in 0..5 {
            let (p, w0) = setup(seed);
            let a0 = p.features_raw(w0.as_slice());
            let target = EditTarget::anchored(5, &[(3, a0[3] + 0.4)]).unwrap();
            let out = solve_edit(&p, &w0, &target, &SolverConfig::default()).unwrap();
            let a1 = p.features_raw(out.pair.end.as_slice());
            for j in [0, 1, 2, 4] {
                assert!((a1[j] - a0[j]).abs() < 0.1, "seed {seed} attr {j}");
            }
        }
    }

    #[test]
    fn free_descent_is_mostly_monotone() {
        let (p, w0) = setup(2);
        let a0 = p.features_raw(w0.as_slice());
        let target = EditTarget::free(5, &[(1, a0[1] - 0.5)]).unwrap();
        let cfg = SolverConfig {
            proximity: 0.0,
            ..SolverConfig::default()
        };
        let out = solve_edit(&p, &w0, &target, &cfg).unwrap();
        let first = out.trace[0];
        let last = *out.trace.last().unwrap();
        assert!(last <= first);
        for pair in out.trace.windows(2) {
            assert!(pair[1] <= pair[0] * 1.05 + 1e-15);
        }
    }

    #[test]
    fn descent_and_determinism() {
        let (p, w0) = setup(3);
        let a0 = p.features_raw(w0.as_slice());
        let target = EditTarget::anchored(5, &[(4, a0[4] - 0.6), (2, a0[2] + 0.2)]).unwrap();
        let cfg = SolverConfig::default();
        let a = solve_edit(&p, &w0, &target, &cfg).unwrap();
        let b = solve_edit(&p, &w0, &target, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.last().unwrap() <= &a.trace[0]);
        let recomputed = edit_loss(&p, &w0, &a.pair.end, &target, cfg.proximity).unwrap();
        assert!((recomputed - a.trace.last().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let (p, w0) = setup(4);
        let target = EditTarget::anchored(5, &[(0, 50.0)]).unwrap();
        let cfg = SolverConfig {
            learning_rate: 1e200,
            ..SolverConfig::default()
        };
        match solve_edit(&p, &w0, &target, &cfg) {
            Err(Error::NonFinite { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            SolverConfig {
                steps: 0,
                ..Default::default()
            },
            SolverConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            SolverConfig {
                proximity: -1.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
