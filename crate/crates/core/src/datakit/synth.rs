//! Procedural letter glyphs rendered in per-signer styles.
//!
//! Each letter is a fixed set of thick strokes plus a dot in a `[-1, 1]²`
//! glyph plane. A signer style bends that plane (scale, rotation, shear),
//! thickens or thins the strokes, nudges each letter's stroke endpoints in
//! a signer-specific way and adds brightness bias, jitter and pixel noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::Vocab;
use crate::numcore::{SeedTree, Tensor};

use super::{FRAME_LEN, FRAME_SIDE};

/// Seed of the canonical glyph shapes. Fixed so every dataset shares the
/// same alphabet.
const GLYPH_SEED: u64 = 0x6c65_7474_6572;

const STROKES: usize = 3;
const SOFT_EDGE: f64 = 0.04;

/// Lower bound on the squared distance between any two canonical glyph
/// templates.
pub const GLYPH_MIN_SQ_DISTANCE: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    /// Stroke endpoints `[x0, y0, x1, y1]` in the glyph plane.
    pub strokes: Vec<[f64; 4]>,
    /// Dot centre and radius.
    pub dot: [f64; 3],
}

/// Canonical shape of `letter` (0 = A).
pub fn glyph(letter: usize) -> Glyph {
    let mut rng = SeedTree::new(GLYPH_SEED).child("glyph").index(letter as u64).rng();
    let mut point = || [rng.gen_range(-0.75..0.75), rng.gen_range(-0.75..0.75)];
    let strokes = (0..STROKES)
        .map(|_| {
            let a = point();
            let b = point();
            [a[0], a[1], b[0], b[1]]
        })
        .collect();
    let c = point();
    Glyph {
        strokes,
        dot: [c[0], c[1], 0.14],
    }
}

/// Deterministic appearance of one signer.
#[derive(Debug, Clone, PartialEq)]
pub struct SignerStyle {
    pub id: u32,
    pub seed: u64,
    /// Stroke half-width in glyph units.
    pub thickness: f64,
    pub shear: f64,
    pub rotation_deg: f64,
    pub scale: f64,
    pub brightness: f64,
    /// Per-frame translation bound in pixels.
    pub jitter_px: f64,
    pub noise_std: f64,
    /// Standard deviation of the per-letter endpoint displacement.
    pub idiosyncrasy: f64,
}

impl SignerStyle {
    pub fn new(id: u32, seed: u64) -> Self {
        let mut rng = SeedTree::new(seed).child("signer").index(id as u64).rng();
        SignerStyle {
            id,
            seed,
            thickness: rng.gen_range(0.06..0.11),
            shear: rng.gen_range(-0.3..0.3),
            rotation_deg: rng.gen_range(-15.0..15.0),
            scale: rng.gen_range(0.8..1.0),
            brightness: rng.gen_range(-0.08..0.08),
            jitter_px: rng.gen_range(1.0..2.5),
            noise_std: 0.04,
            idiosyncrasy: 0.1,
        }
    }

    /// Undistorted rendering: no shear, rotation, bias, jitter or noise.
    pub fn neutral() -> Self {
        SignerStyle {
            id: u32::MAX,
            seed: 0,
            thickness: 0.08,
            shear: 0.0,
            rotation_deg: 0.0,
            scale: 1.0,
            brightness: 0.0,
            jitter_px: 0.0,
            noise_std: 0.0,
            idiosyncrasy: 0.0,
        }
    }

    /// This signer's version of a letter's glyph.
    pub fn letter_glyph(&self, letter: usize) -> Glyph {
        let mut g = glyph(letter);
        if self.idiosyncrasy > 0.0 {
            let mut rng = SeedTree::new(self.seed)
                .child("signer")
                .index(self.id as u64)
                .child("letter")
                .index(letter as u64)
                .rng();
            let n = Normal::new(0.0, self.idiosyncrasy).expect("positive std");
            for s in &mut g.strokes {
                for v in s.iter_mut() {
                    *v += n.sample(&mut rng);
                }
            }
            g.dot[0] += n.sample(&mut rng);
            g.dot[1] += n.sample(&mut rng);
        }
        g
    }

    /// Maps image-plane offsets (in units of half the frame) back to the
    /// glyph plane.
    fn inverse_map(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        // forward = scale · R · [[1, shear], [0, 1]]
        let f = [
            [self.scale * c, self.scale * (c * self.shear - s)],
            [self.scale * s, self.scale * (s * self.shear + c)],
        ];
        let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        [
            [f[1][1] / det, -f[0][1] / det],
            [-f[1][0] / det, f[0][0] / det],
        ]
    }
}

fn segment_distance(p: [f64; 2], s: &[f64; 4]) -> f64 {
    let (ax, ay, bx, by) = (s[0], s[1], s[2], s[3]);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - ax) * dx + (p[1] - ay) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (ax + t * dx - p[0], ay + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

fn coverage(edge_distance: f64) -> f64 {
    (0.5 - edge_distance / SOFT_EDGE).clamp(0.0, 1.0)
}

/// Renders `glyph` under `style`, shifted by `offset_px`, without noise.
pub fn render_glyph(glyph: &Glyph, style: &SignerStyle, offset_px: [f64; 2]) -> Vec<f64> {
    let inv = style.inverse_map();
    let half = FRAME_SIDE as f64 / 2.0;
    let centre = (FRAME_SIDE as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; FRAME_LEN];
    for r in 0..FRAME_SIDE {
        for c in 0..FRAME_SIDE {
            let x = (c as f64 - centre - offset_px[0]) / half;
            let y = (r as f64 - centre - offset_px[1]) / half;
            let p = [inv[0][0] * x + inv[0][1] * y, inv[1][0] * x + inv[1][1] * y];
            let stroke = glyph
                .strokes
                .iter()
                .map(|s| segment_distance(p, s))
                .fold(f64::INFINITY, f64::min);
            let dot = ((p[0] - glyph.dot[0]).powi(2) + (p[1] - glyph.dot[1]).powi(2)).sqrt();
            let v = coverage(stroke - style.thickness).max(coverage(dot - glyph.dot[2]));
            out[r * FRAME_SIDE + c] = v;
        }
    }
    out
}

/// Canonical template of a letter (neutral style, no jitter).
pub fn glyph_template(letter: usize) -> Vec<f64> {
    render_glyph(&glyph(letter), &SignerStyle::neutral(), [0.0, 0.0])
}

/// One observed frame of `letter`: the style's glyph with jitter, bias and
/// pixel noise drawn from `rng`, clamped to `[0, 1]`.
pub fn letter_frame<R: Rng>(letter: usize, style: &SignerStyle, rng: &mut R) -> Vec<f64> {
    let offset = [
        rng.gen_range(-1.0..=1.0) * style.jitter_px,
        rng.gen_range(-1.0..=1.0) * style.jitter_px,
    ];
    let mut frame = render_glyph(&style.letter_glyph(letter), style, offset);
    let noise = Normal::new(0.0, style.noise_std.max(0.0)).expect("non-negative std");
    for v in &mut frame {
        let n = if style.noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
        *v = (*v + style.brightness + n).clamp(0.0, 1.0);
    }
    frame
}

/// Frames of one fingerspelled word.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    /// `S × 4096`, one flattened 64×64 frame per row.
    pub frames: Tensor,
    pub signer: u32,
    pub word: String,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        self.frames.row_slice(i)
    }
}

/// Frame count for a word of `letters` letters.
pub fn sequence_length(letters: usize, frames_per_letter: usize, transition_frames: usize) -> usize {
    letters * frames_per_letter + letters.saturating_sub(1) * transition_frames
}

/// Renders `word` as seen from `style`: `frames_per_letter` jittered frames
/// per letter with `transition_frames` cross-faded frames between letters.
pub fn synth_generate(
    word: &str,
    style: &SignerStyle,
    frames_per_letter: usize,
    transition_frames: usize,
    seed: u64,
) -> Result<FrameSequence> {
    if word.is_empty() {
        return Err(Error::Data("cannot render an empty word".into()));
    }
    if frames_per_letter == 0 {
        return Err(Error::invalid("frames_per_letter must be at least 1"));
    }
    let letters = Vocab::ALPHABET.encode(word)?;
    let mut rng = SeedTree::new(seed).child("frames").rng();
    let s = sequence_length(letters.len(), frames_per_letter, transition_frames);
    let mut data = Vec::with_capacity(s * FRAME_LEN);
    let mut previous_last: Option<Vec<f64>> = None;
    for &letter in &letters {
        let frames: Vec<Vec<f64>> = (0..frames_per_letter)
            .map(|_| letter_frame(letter, style, &mut rng))
            .collect();
        if let Some(prev) = previous_last.take() {
            let next = &frames[0];
            for t in 1..=transition_frames {
                let a = t as f64 / (transition_frames + 1) as f64;
                data.extend(prev.iter().zip(next).map(|(p, n)| (1.0 - a) * p + a * n));
            }
        }
        previous_last = frames.last().cloned();
        for f in frames {
            data.extend(f);
        }
    }
    Ok(FrameSequence {
        frames: Tensor::new(&[s, FRAME_LEN], data)?,
        signer: style.id,
        word: word.to_ascii_uppercase(),
    })
}
