//! Batch-editing session: example edit, fitted direction, test latents and
//! the slider-controlled per-item strengths.
//!
//! The shared final state is `example.start + s·Δ*`. Every test latent gets
//! `α_i = (target − w_i)·n`, so rescaling only re-runs the O(N·d) projection
//! and never touches the direction. Edited latents are not stored; they are
//! rebuilt from the alphas on demand.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::direction::{fit_direction, DirectionFitConfig, FitReport};
use crate::error::{Error, Result};
use crate::generator::{sample_latents, GeneratorParams, GeneratorSpec};
use crate::geometry::{apply_edit, batch_alphas, target_state, AlphaAssignment, EditDirection, EditPair, LatentCode};
use crate::linalg::{norm, sub};

pub const SESSION_FILE_VERSION: u32 = 1;
/// Maximum gap between a composed edit's start and the current end.
pub const CHAIN_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Session {
    id: String,
    params: GeneratorParams,
    example: Option<EditPair>,
    direction: Option<EditDirection>,
    fit_report: Option<FitReport>,
    slider_s: f64,
    test_latents: Vec<LatentCode>,
    alphas: Option<AlphaAssignment>,
    created_unix_ms: u64,
    modified_unix_ms: u64,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Session {
    /// New empty session with a random id.
    pub fn create(spec: GeneratorSpec) -> Result<Self> {
        Self::create_with_id(spec, uuid::Uuid::new_v4().to_string())
    }

    pub fn create_with_id(spec: GeneratorSpec, id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidConfig("session id must not be empty".into()));
        }
        let params = GeneratorParams::new(spec)?;
        let now = now_ms();
        Ok(Self {
            id,
            params,
            example: None,
            direction: None,
            fit_report: None,
            slider_s: 1.0,
            test_latents: Vec::new(),
            alphas: None,
            created_unix_ms: now,
            modified_unix_ms: now,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn spec(&self) -> GeneratorSpec {
        self.params.spec()
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.latent_dim()
    }

    pub fn example(&self) -> Option<&EditPair> {
        self.example.as_ref()
    }

    pub fn direction(&self) -> Option<&EditDirection> {
        self.direction.as_ref()
    }

    pub fn fit_report(&self) -> Option<&FitReport> {
        self.fit_report.as_ref()
    }

    pub fn slider(&self) -> f64 {
        self.slider_s
    }

    pub fn test_latents(&self) -> &[LatentCode] {
        &self.test_latents
    }

    pub fn alphas(&self) -> Option<&AlphaAssignment> {
        self.alphas.as_ref()
    }

    pub fn created_unix_ms(&self) -> u64 {
        self.created_unix_ms
    }

    pub fn modified_unix_ms(&self) -> u64 {
        self.modified_unix_ms
    }

    fn touch(&mut self) {
        self.modified_unix_ms = now_ms().max(self.created_unix_ms);
    }

    fn check_pair(&self, pair: &EditPair) -> Result<()> {
        pair.start.check_dim(self.dim())?;
        pair.end.check_dim(self.dim())
    }

    fn invalidate_direction(&mut self) {
        self.direction = None;
        self.fit_report = None;
        self.alphas = None;
    }

    /// Replace the example edit. Any fitted direction and alphas are dropped.
    pub fn set_example_edit(&mut self, pair: EditPair) -> Result<()> {
        self.check_pair(&pair)?;
        self.example = Some(pair);
        self.invalidate_direction();
        self.touch();
        Ok(())
    }

    /// Chain a second edit onto the example, keeping only the final state:
    /// `(w₀ → w'₀) ∘ (w'₀ → w''₀) = (w₀ → w''₀)`.
    pub fn compose_edits(&mut self, second: EditPair) -> Result<()> {
        self.check_pair(&second)?;
        let current = self.example.as_ref().ok_or(Error::MissingExample)?;
        let gap = norm(&sub(second.start.as_slice(), current.end.as_slice()));
        if gap > CHAIN_TOLERANCE {
            return Err(Error::ChainBroken { gap });
        }
        let composed = EditPair::new(current.start.clone(), second.end)?;
        self.example = Some(composed);
        self.invalidate_direction();
        self.touch();
        Ok(())
    }

    /// Append test latents. Existing alphas are dropped; the direction stays.
    pub fn add_test_latents(&mut self, latents: Vec<LatentCode>) -> Result<()> {
        let d = self.dim();
        if let Some((index, w)) = latents.iter().enumerate().find(|(_, w)| w.dim() != d) {
            return Err(Error::DimensionMismatchAt {
                index,
                expected: d,
                found: w.dim(),
            });
        }
        self.test_latents.extend(latents);
        self.alphas = None;
        self.touch();
        Ok(())
    }

    pub fn sample_test_latents(&mut self, seed: u64, count: usize) -> Result<()> {
        let d = self.dim();
        self.add_test_latents(sample_latents(seed, count, d))
    }

    /// Install a direction obtained elsewhere (e.g. a saved fit).
    pub fn set_direction(&mut self, dir: EditDirection) -> Result<()> {
        crate::geometry::check_dim(self.dim(), dir.dim())?;
        self.direction = Some(dir);
        self.fit_report = None;
        self.alphas = None;
        self.touch();
        Ok(())
    }

    /// Fit Δ* on the current example. On error the session is unchanged.
    pub fn fit(&mut self, cfg: &DirectionFitConfig) -> Result<&FitReport> {
        let example = self.example.as_ref().ok_or(Error::MissingExample)?;
        let (dir, report) = fit_direction(&self.params, example, cfg)?;
        self.direction = Some(dir);
        self.alphas = None;
        self.touch();
        Ok(self.fit_report.insert(report))
    }

    /// `example.start + s·Δ*`
    pub fn target_state(&self, s: f64) -> Result<LatentCode> {
        let example = self.example.as_ref().ok_or(Error::MissingExample)?;
        let dir = self.direction.as_ref().ok_or(Error::MissingDirection)?;
        target_state(&example.start, dir, s)
    }

    fn solve_alphas(&mut self, s: f64) -> Result<&AlphaAssignment> {
        let target = self.target_state(s)?;
        let dir = self.direction.as_ref().ok_or(Error::MissingDirection)?;
        let alphas = batch_alphas(&target, &self.test_latents, dir)?;
        self.slider_s = s;
        self.touch();
        Ok(self.alphas.insert(alphas))
    }

    /// Compute per-item strengths at the current slider value.
    pub fn transfer(&mut self) -> Result<&AlphaAssignment> {
        if self.direction.is_none() {
            return Err(Error::MissingDirection);
        }
        if self.test_latents.is_empty() {
            return Err(Error::NoTestLatents);
        }
        self.solve_alphas(self.slider_s)
    }

    /// Move the slider and recompute every alpha in closed form.
    pub fn rescale(&mut self, s: f64) -> Result<&AlphaAssignment> {
        if !s.is_finite() {
            return Err(Error::NonFiniteInput(format!("slider value {s}")));
        }
        if self.direction.is_none() {
            return Err(Error::MissingDirection);
        }
        self.solve_alphas(s)
    }

    pub fn edited_latent(&self, index: usize) -> Result<LatentCode> {
        let alphas = self.alphas.as_ref().ok_or(Error::MissingAlphas)?;
        let dir = self.direction.as_ref().ok_or(Error::MissingDirection)?;
        let w = self.test_latents.get(index).ok_or(Error::IndexOutOfRange {
            index,
            count: self.test_latents.len(),
        })?;
        apply_edit(w, alphas.alphas[index], dir)
    }

    /// `w_i + α_i n` for every test latent.
    pub fn edited_latents(&self) -> Result<Vec<LatentCode>> {
        let alphas = self.alphas.as_ref().ok_or(Error::MissingAlphas)?;
        let dir = self.direction.as_ref().ok_or(Error::MissingDirection)?;
        self.test_latents
            .iter()
            .zip(alphas.as_slice())
            .map(|(w, a)| apply_edit(w, *a, dir))
            .collect()
    }

    pub fn to_file(&self) -> SessionFile {
        let spec = self.spec();
        SessionFile {
            version: SESSION_FILE_VERSION,
            id: self.id.clone(),
            generator: spec,
            example: self.example.clone(),
            direction: self.direction.clone(),
            slider_s: self.slider_s,
            test_latents: self.test_latents.clone(),
            alphas: self.alphas.clone(),
            created_unix_ms: self.created_unix_ms,
            modified_unix_ms: self.modified_unix_ms,
        }
    }

    pub fn from_file(file: SessionFile) -> Result<Self> {
        if file.version != SESSION_FILE_VERSION {
            return Err(Error::UnsupportedVersion(file.version));
        }
        let params = GeneratorParams::new(file.generator)?;
        let d = params.latent_dim();
        if let Some(pair) = &file.example {
            pair.start.check_dim(d)?;
            pair.end.check_dim(d)?;
        }
        if let Some(dir) = &file.direction {
            crate::geometry::check_dim(d, dir.dim())?;
        }
        if let Some((index, w)) = file.test_latents.iter().enumerate().find(|(_, w)| w.dim() != d) {
            return Err(Error::DimensionMismatchAt {
                index,
                expected: d,
                found: w.dim(),
            });
        }
        if !file.slider_s.is_finite() {
            return Err(Error::NonFiniteInput("slider_s".into()));
        }
        if let Some(alphas) = &file.alphas {
            if file.direction.is_none() {
                return Err(Error::MissingDirection);
            }
            if alphas.len() != file.test_latents.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} alphas for {} test latents",
                    alphas.len(),
                    file.test_latents.len()
                )));
            }
            if alphas.as_slice().iter().any(|a| !a.is_finite()) {
                return Err(Error::NonFiniteInput("alphas".into()));
            }
        }
        Ok(Self {
            id: file.id,
            params,
            example: file.example,
            direction: file.direction,
            fit_report: None,
            slider_s: file.slider_s,
            test_latents: file.test_latents,
            alphas: file.alphas,
            created_unix_ms: file.created_unix_ms,
            modified_unix_ms: file.modified_unix_ms,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_file())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk session layout. Field order is part of the format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub version: u32,
    pub id: String,
    pub generator: GeneratorSpec,
    pub example: Option<EditPair>,
    pub direction: Option<EditDirection>,
    pub slider_s: f64,
    pub test_latents: Vec<LatentCode>,
    pub alphas: Option<AlphaAssignment>,
    #[serde(default)]
    pub created_unix_ms: u64,
    #[serde(default)]
    pub modified_unix_ms: u64,
}

impl SessionFile {
    /// Copy with both timestamps zeroed, for content comparisons.
    pub fn without_timestamps(&self) -> Self {
        Self {
            created_unix_ms: 0,
            modified_unix_ms: 0,
            ..self.clone()
        }
    }
}
