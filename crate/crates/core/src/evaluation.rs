//! Consistency diagnostics: how linearly an attribute tracks the distance
//! along a direction, and how tightly a batch converges after transfer.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GeneratorParams;
use crate::geometry::{hyperplane_through, signed_distance, EditDirection, LatentCode};
use crate::linalg::dot;
use crate::session::Session;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub count: usize,
    /// Set when x or y has zero variance; R² is then 0 by convention.
    pub degenerate: bool,
}

/// Ordinary least squares `y ≈ slope·x + intercept` on centred data.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<CorrelationReport> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
        return Ok(CorrelationReport {
            slope,
            intercept: my - slope * mx,
            r_squared: 0.0,
            count: xs.len(),
            degenerate: true,
        });
    }
    let slope = sxy / sxx;
    let r_squared = ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0);
    Ok(CorrelationReport {
        slope,
        intercept: my - slope * mx,
        r_squared,
        count: xs.len(),
        degenerate: false,
    })
}

fn check_attr(params: &GeneratorParams, attribute_index: usize) -> Result<()> {
    let k = params.attribute_count();
    if attribute_index >= k {
        return Err(Error::AttributeOutOfRange {
            index: attribute_index,
            count: k,
        });
    }
    Ok(())
}

/// Raw feature `attribute_index` of each latent.
pub fn attribute_values(params: &GeneratorParams, latents: &[LatentCode], attribute_index: usize) -> Result<Vec<f64>> {
    check_attr(params, attribute_index)?;
    let d = params.latent_dim();
    latents
        .iter()
        .map(|w| {
            w.check_dim(d)?;
            Ok(params.features_raw(w.as_slice())[attribute_index])
        })
        .collect()
}

/// Regress the attribute on `w·n` over the given latents.
pub fn linearity(
    params: &GeneratorParams,
    dir: &EditDirection,
    latents: &[LatentCode],
    attribute_index: usize,
) -> Result<CorrelationReport> {
    if latents.is_empty() {
        return Err(Error::EmptyInput);
    }
    crate::geometry::check_dim(params.latent_dim(), dir.dim())?;
    let ys = attribute_values(params, latents, attribute_index)?;
    let xs: Vec<f64> = latents.iter().map(|w| dot(w.as_slice(), dir.unit())).collect();
    ols(&xs, &ys)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadReport {
    pub attribute_index: usize,
    pub target_value: f64,
    pub pre_std: f64,
    pub post_std: f64,
    pub pre_mae: f64,
    pub post_mae: f64,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

impl SpreadReport {
    /// `post_std / pre_std`; infinite when the batch had no spread to begin with.
    pub fn std_ratio(&self) -> f64 {
        if self.pre_std == 0.0 {
            if self.post_std == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            self.post_std / self.pre_std
        }
    }

    /// `index,pre,post` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,pre,post\n");
        for (i, (a, b)) in self.pre.iter().zip(&self.post).enumerate() {
            let _ = writeln!(out, "{i},{a},{b}");
        }
        out
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn mae(xs: &[f64], target: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().map(|x| (x - target).abs()).sum::<f64>() / xs.len() as f64
}

/// Spread statistics of one attribute over paired pre/post latents.
pub fn spread_between(
    params: &GeneratorParams,
    pre: &[LatentCode],
    post: &[LatentCode],
    attribute_index: usize,
    target_value: f64,
) -> Result<SpreadReport> {
    if pre.len() != post.len() {
        return Err(Error::DimensionMismatch {
            expected: pre.len(),
            found: post.len(),
        });
    }
    let pre_vals = attribute_values(params, pre, attribute_index)?;
    let post_vals = attribute_values(params, post, attribute_index)?;
    Ok(SpreadReport {
        attribute_index,
        target_value,
        pre_std: mean_std(&pre_vals).1,
        post_std: mean_std(&post_vals).1,
        pre_mae: mae(&pre_vals, target_value),
        post_mae: mae(&post_vals, target_value),
        pre: pre_vals,
        post: post_vals,
    })
}

/// Spread of a transferred session. `target_value` defaults to the
/// attribute at the session's current target state.
pub fn spread(
    params: &GeneratorParams,
    session: &Session,
    attribute_index: usize,
    target_value: Option<f64>,
) -> Result<SpreadReport> {
    check_attr(params, attribute_index)?;
    if session.alphas().is_none() {
        return Err(Error::MissingAlphas);
    }
    let post = session.edited_latents()?;
    let target_value = match target_value {
        Some(v) => v,
        None => {
            let t = session.target_state(session.slider())?;
            params.features_raw(t.as_slice())[attribute_index]
        }
    };
    spread_between(params, session.test_latents(), &post, attribute_index, target_value)
}

/// Plot-ready points: x = signed distance to the hyperplane through the
/// target state, y = attribute value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterData {
    pub pre: Vec<(f64, f64)>,
    pub post: Vec<(f64, f64)>,
}

impl ScatterData {
    /// `series,x,y` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,x,y\n");
        for (name, pts) in [("pre", &self.pre), ("post", &self.post)] {
            for (x, y) in pts {
                let _ = writeln!(out, "{name},{x},{y}");
            }
        }
        out
    }
}

pub fn scatter(params: &GeneratorParams, session: &Session, attribute_index: usize) -> Result<ScatterData> {
    check_attr(params, attribute_index)?;
    let dir = session.direction().ok_or(Error::MissingDirection)?;
    let target = session.target_state(session.slider())?;
    let plane = hyperplane_through(&target, dir)?;
    let post = session.edited_latents()?;
    let points = |ws: &[LatentCode]| -> Result<Vec<(f64, f64)>> {
        ws.iter()
            .map(|w| {
                let x = signed_distance(w, &plane)?;
                Ok((x, params.features_raw(w.as_slice())[attribute_index]))
            })
            .collect()
    };
    Ok(ScatterData {
        pre: points(session.test_latents())?,
        post: points(&post)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{init_generator, sample_latents};
    use crate::geometry::normalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line_has_unit_r2() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.3 - 4.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -1.5 * x + 0.25).collect();
        let r = ols(&xs, &ys).unwrap();
        assert!((r.r_squared - 1.0).abs() < 1e-12);
        assert!((r.slope + 1.5).abs() < 1e-12 && (r.intercept - 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_response_is_degenerate() {
        let r = ols(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).unwrap();
        assert_eq!(r.r_squared, 0.0);
        assert!(r.degenerate);
        assert!(matches!(ols(&[], &[]), Err(Error::EmptyInput)));
        assert!(ols(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn noisy_line_recovers_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 2.0 * x + 1.0 + rng.random_range(-0.01..0.01))
            .collect();
        let r = ols(&xs, &ys).unwrap();
        assert!((r.slope - 2.0).abs() <= 0.01);
        assert!(r.r_squared > 0.999);
    }

    #[test]
    fn linearity_is_scale_invariant() {
        let p = init_generator(1, 16, 32, 5).unwrap();
        let ws = sample_latents(2, 100, 16);
        let raw = sample_latents(3, 1, 16).remove(0).into_vec();
        let a = linearity(&p, &normalize(raw.clone()).unwrap(), &ws, 2).unwrap();
        let scaled: Vec<f64> = raw.iter().map(|v| v * 7.5).collect();
        let b = linearity(&p, &normalize(scaled).unwrap(), &ws, 2).unwrap();
        assert!((a.r_squared - b.r_squared).abs() < 1e-12);
        assert!(linearity(&p, &normalize(raw.clone()).unwrap(), &[], 2).is_err());
        assert!(linearity(&p, &normalize(raw).unwrap(), &ws, 5).is_err());
    }

    #[test]
    fn zero_length_edit_leaves_stats_unchanged() {
        let p = init_generator(4, 16, 32, 5).unwrap();
        let ws = sample_latents(5, 40, 16);
        let r = spread_between(&p, &ws, &ws, 1, 0.3).unwrap();
        assert_eq!(r.pre_std, r.post_std);
        assert_eq!(r.pre_mae, r.post_mae);
        assert_eq!(r.std_ratio(), 1.0);
    }

    #[test]
    fn csv_exports() {
        let r = SpreadReport {
            attribute_index: 0,
            target_value: 0.0,
            pre_std: 1.0,
            post_std: 0.5,
            pre_mae: 1.0,
            post_mae: 0.5,
            pre: vec![1.0, -1.0],
            post: vec![0.5, -0.5],
        };
        assert_eq!(r.to_csv(), "index,pre,post\n0,1,0.5\n1,-1,-0.5\n");
        let s = ScatterData {
            pre: vec![(1.0, 2.0)],
            post: vec![(0.0, 2.5)],
        };
        assert_eq!(s.to_csv(), "series,x,y\npre,1,2\npost,0,2.5\n");
    }
}
