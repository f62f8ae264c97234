//! Display path: attribute vector → glyph parameters → 64×64 grayscale face.
//! Nothing here is differentiated.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::AttributeVector;

pub const RASTER_SIZE: usize = 64;
/// Attribute names in feature order.
pub const ATTRIBUTE_NAMES: [&str; 5] = ["orientation", "size", "aspect", "mouth", "eye"];

/// Resolve an attribute by name or numeric index.
pub fn attribute_index(name: &str) -> Option<usize> {
    if let Ok(i) = name.parse::<usize>() {
        return Some(i);
    }
    let lower = name.to_ascii_lowercase();
    ATTRIBUTE_NAMES
        .iter()
        .position(|n| *n == lower)
        .or(match lower.as_str() {
            "pose" | "yaw" | "rotation" => Some(0),
            "smile" | "mouth_curve" => Some(3),
            "eyes" | "eye_open" => Some(4),
            _ => None,
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlyphSpec {
    /// Radians in (−π/2, π/2).
    pub orientation: f64,
    /// Face height as a fraction of the canvas, in [0.2, 0.8].
    pub size: f64,
    /// Width/height ratio in [0.4, 1.0].
    pub aspect: f64,
    /// −1 frown … 1 smile.
    pub mouth_curve: f64,
    /// 0 closed … 1 open.
    pub eye_open: f64,
}

impl Default for GlyphSpec {
    fn default() -> Self {
        Self {
            orientation: 0.0,
            size: 0.5,
            aspect: 0.7,
            mouth_curve: 0.0,
            eye_open: 0.5,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn attributes_to_glyph(a: &AttributeVector) -> Result<GlyphSpec> {
    let v = a.as_slice();
    if v.len() != ATTRIBUTE_NAMES.len() {
        return Err(Error::WrongAttributeCount {
            expected: ATTRIBUTE_NAMES.len(),
            found: v.len(),
        });
    }
    Ok(GlyphSpec {
        orientation: FRAC_PI_2 * (0.5 * v[0]).tanh(),
        size: 0.2 + 0.6 * sigmoid(v[1]),
        aspect: 0.4 + 0.6 * sigmoid(v[2]),
        mouth_curve: v[3].tanh(),
        eye_open: sigmoid(v[4]),
    })
}

/// Row-major grayscale image with intensities in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRaster {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageRaster {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Binary PGM: `P5\n<w> <h>\n255\n` followed by row-major bytes.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_bytes());
        out
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.to_bytes())?;
            writer.finish()?;
        }
        Ok(out)
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_pgm())?;
        Ok(())
    }
}

const FACE_INTENSITY: f64 = 0.85;
const FEATURE_INTENSITY: f64 = 0.08;
/// Anti-aliasing half-width in pixels.
const EDGE: f64 = 0.75;

/// Coverage in [0, 1] of a signed distance (negative inside).
fn coverage(sd: f64) -> f64 {
    let t = ((EDGE - sd) / (2.0 * EDGE)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Approximate signed distance to an axis-aligned ellipse centred at origin.
fn ellipse_sd(x: f64, y: f64, rx: f64, ry: f64) -> f64 {
    let k = ((x / rx).powi(2) + (y / ry).powi(2)).sqrt();
    (k - 1.0) * rx.min(ry)
}

/// Render an oriented face: filled ellipse with two eyes and a mouth arc.
/// Geometry is mirror-symmetric about the face's vertical axis.
pub fn render(glyph: &GlyphSpec) -> ImageRaster {
    let n = RASTER_SIZE;
    let half = n as f64 / 2.0;
    let ry = glyph.size * n as f64 / 2.0;
    let rx = glyph.aspect * ry;
    let (sin, cos) = glyph.orientation.sin_cos();

    let eye_dx = 0.38 * rx;
    let eye_y = -0.25 * ry;
    let eye_rx = (0.16 * rx).max(1.0);
    let eye_ry = (0.16 * ry * glyph.eye_open).max(0.35);

    let mouth_y = 0.42 * ry;
    let mouth_half = 0.45 * rx;
    let mouth_bend = 0.22 * ry * glyph.mouth_curve;
    let mouth_thick = (0.05 * ry).max(0.9);

    let mut pixels = Vec::with_capacity(n * n);
    for row in 0..n {
        let py = row as f64 + 0.5 - half;
        for col in 0..n {
            let px = col as f64 + 0.5 - half;
            // into the face frame (y down, rotated by −orientation)
            let x = cos * px + sin * py;
            let y = -sin * px + cos * py;

            let face = coverage(ellipse_sd(x, y, rx, ry));
            if face == 0.0 {
                pixels.push(0.0);
                continue;
            }

            let ax = x.abs();
            let eye = coverage(ellipse_sd(ax - eye_dx, y - eye_y, eye_rx, eye_ry));

            let mouth = if ax <= mouth_half + EDGE {
                let u = (ax / mouth_half).min(1.0);
                // smile bends the corners up (toward negative y)
                let arc_y = mouth_y - mouth_bend * u * u;
                let end_fade = coverage(ax - mouth_half);
                coverage((y - arc_y).abs() - mouth_thick) * end_fade
            } else {
                0.0
            };

            let feature = eye.max(mouth);
            let inside = FACE_INTENSITY * (1.0 - feature) + FEATURE_INTENSITY * feature;
            pixels.push((face * inside).clamp(0.0, 1.0));
        }
    }
    ImageRaster {
        width: n,
        height: n,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn glyph_of(v: [f64; 5]) -> GlyphSpec {
        attributes_to_glyph(&AttributeVector(v.to_vec())).unwrap()
    }

    #[test]
    fn squash_midpoints() {
        let g = glyph_of([0.0; 5]);
        assert_eq!(g.orientation, 0.0);
        assert!((g.size - 0.5).abs() < 1e-15);
        assert!((g.aspect - 0.7).abs() < 1e-15);
        assert_eq!(g.mouth_curve, 0.0);
        assert!((g.eye_open - 0.5).abs() < 1e-15);
    }

    #[test]
    fn squash_saturates_within_ranges() {
        let g = glyph_of([1e6, 1e6, 1e6, 1e6, 1e6]);
        assert!((g.orientation - FRAC_PI_2).abs() < 1e-12);
        assert!((g.size - 0.8).abs() < 1e-12);
        let g = glyph_of([-1e6, -1e6, -1e6, -1e6, -1e6]);
        assert!((g.orientation + FRAC_PI_2).abs() < 1e-12);
        assert!((g.aspect - 0.4).abs() < 1e-12);
        assert!((g.mouth_curve + 1.0).abs() < 1e-12);
        assert!(g.eye_open.abs() < 1e-12);
    }

    #[test]
    fn squash_is_monotone() {
        let mut prev = glyph_of([0.0, -10.0, 0.0, 0.0, 0.0]);
        for i in 1..=200 {
            let a2 = -10.0 + 0.1 * i as f64;
            let g = glyph_of([a2 * 0.5, a2, a2, a2, a2]);
            assert!(g.size > prev.size);
            assert!(g.orientation > prev.orientation || i == 1);
            prev = g;
        }
    }

    #[test]
    fn wrong_attribute_count() {
        let err = attributes_to_glyph(&AttributeVector(vec![0.0; 4])).unwrap_err();
        assert!(matches!(err, Error::WrongAttributeCount { expected: 5, found: 4 }));
    }

    #[test]
    fn default_glyph_occupancy() {
        let img = render(&GlyphSpec::default());
        let lit = img.pixels().iter().filter(|p| **p > 0.5).count();
        let frac = lit as f64 / (RASTER_SIZE * RASTER_SIZE) as f64;
        // semi-axes 16 × 11.2 px cover ≈ 13.7% of the canvas minus features
        assert!((0.05..0.2).contains(&frac), "occupancy {frac}");
        assert!(img.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn upright_glyph_is_mirror_symmetric() {
        for g in [
            GlyphSpec::default(),
            GlyphSpec {
                mouth_curve: 0.9,
                eye_open: 0.1,
                size: 0.7,
                aspect: 0.45,
                orientation: 0.0,
            },
        ] {
            let img = render(&g);
            for y in 0..RASTER_SIZE {
                for x in 0..RASTER_SIZE / 2 {
                    let l = img.get(x, y);
                    let r = img.get(RASTER_SIZE - 1 - x, y);
                    assert!((l - r).abs() <= 1e-6, "({x},{y}) {l} vs {r}");
                }
            }
        }
    }

    #[test]
    fn render_is_deterministic_and_reacts_to_glyph() {
        let g = GlyphSpec {
            orientation: 0.4,
            ..GlyphSpec::default()
        };
        assert_eq!(render(&g), render(&g));
        assert_ne!(render(&g), render(&GlyphSpec::default()));
        let smile = render(&GlyphSpec {
            mouth_curve: 1.0,
            ..GlyphSpec::default()
        });
        let frown = render(&GlyphSpec {
            mouth_curve: -1.0,
            ..GlyphSpec::default()
        });
        assert_ne!(smile, frown);
    }

    #[test]
    fn pgm_layout_is_exact() {
        let img = render(&GlyphSpec::default());
        let pgm = img.to_pgm();
        let header = b"P5\n64 64\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 64 * 64);
        assert_eq!(&pgm[header.len()..], img.to_bytes().as_slice());
    }

    #[test]
    fn png_has_signature() {
        let png = render(&GlyphSpec::default()).to_png().unwrap();
        assert_eq!(&png[..8], &[0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A]);
    }

    #[test]
    fn attribute_lookup() {
        assert_eq!(attribute_index("mouth"), Some(3));
        assert_eq!(attribute_index("Yaw"), Some(0));
        assert_eq!(attribute_index("2"), Some(2));
        assert_eq!(attribute_index("nose"), None);
    }
}
