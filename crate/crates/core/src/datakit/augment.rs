use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{SeedTree, Tensor};

use super::synth::{letter_frame, SignerStyle};
use super::{FRAME_LEN, FRAME_SIDE};

/// Geometric transform applied about the frame centre: scale, then rotate
/// by an angle drawn uniformly from `±max_rotation_deg`, then translate by
/// `translate_px` in a uniformly random direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSpec {
    pub scale: f64,
    pub translate_px: f64,
    pub max_rotation_deg: f64,
    pub seed: u64,
}

impl TransformSpec {
    pub fn identity(seed: u64) -> Self {
        TransformSpec {
            scale: 1.0,
            translate_px: 0.0,
            max_rotation_deg: 0.0,
            seed,
        }
    }

    pub fn scaling(ratio: f64, seed: u64) -> Self {
        TransformSpec {
            scale: ratio,
            ..Self::identity(seed)
        }
    }

    pub fn translation(px: f64, seed: u64) -> Self {
        TransformSpec {
            translate_px: px,
            ..Self::identity(seed)
        }
    }

    pub fn rotation(max_deg: f64, seed: u64) -> Self {
        TransformSpec {
            max_rotation_deg: max_deg,
            ..Self::identity(seed)
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.scale > 0.0
            && self.scale.is_finite()
            && self.translate_px.is_finite()
            && self.max_rotation_deg.is_finite()
            && self.max_rotation_deg >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid transform {self:?}")))
        }
    }
}

fn pixel(frame: &[f64], x: i64, y: i64) -> f64 {
    let n = FRAME_SIDE as i64;
    if (0..n).contains(&x) && (0..n).contains(&y) {
        frame[(y * n + x) as usize]
    } else {
        0.0
    }
}

fn bilinear(frame: &[f64], x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    (1.0 - fy) * ((1.0 - fx) * pixel(frame, x0, y0) + fx * pixel(frame, x0 + 1, y0))
        + fy * ((1.0 - fx) * pixel(frame, x0, y0 + 1) + fx * pixel(frame, x0 + 1, y0 + 1))
}

/// Applies `spec` to a 64×64 frame with bilinear resampling. Regions that
/// come from outside the source are zero.
pub fn augment(frame: &[f64], spec: &TransformSpec) -> Result<Vec<f64>> {
    if frame.len() != FRAME_LEN {
        return Err(Error::shape(
            "augment",
            format!("frame has {} values, expected {FRAME_LEN}", frame.len()),
        ));
    }
    spec.validate()?;
    let mut rng = SeedTree::new(spec.seed).child("augment").rng();
    let direction = rng.gen_range(0.0..std::f64::consts::TAU);
    let angle = if spec.max_rotation_deg > 0.0 {
        rng.gen_range(-spec.max_rotation_deg..=spec.max_rotation_deg)
    } else {
        0.0
    };
    let (tx, ty) = (
        spec.translate_px * direction.cos(),
        spec.translate_px * direction.sin(),
    );
    let (s, c) = angle.to_radians().sin_cos();
    let centre = (FRAME_SIDE as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; FRAME_LEN];
    for r in 0..FRAME_SIDE {
        for col in 0..FRAME_SIDE {
            let x = col as f64 - centre - tx;
            let y = r as f64 - centre - ty;
            let sx = (c * x + s * y) / spec.scale + centre;
            let sy = (c * y - s * x) / spec.scale + centre;
            out[r * FRAME_SIDE + col] = bilinear(frame, sx, sy).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// `n` frames augmented from `source` (cycled in order), each with its own
/// transform seed derived from `base.seed`.
pub fn augmented_pool(source: &[Vec<f64>], n: usize, base: &TransformSpec) -> Result<Vec<Vec<f64>>> {
    if source.is_empty() {
        return Err(Error::Data("no frames to augment".into()));
    }
    let seeds = SeedTree::new(base.seed).child("pool");
    (0..n)
        .map(|i| {
            let spec = TransformSpec {
                seed: seeds.index(i as u64).value(),
                ..*base
            };
            augment(&source[i % source.len()], &spec)
        })
        .collect()
}

/// Styles for the unlabeled pool. Their ids start at 1000 so they never
/// coincide with labeled signers.
pub fn heldout_styles(count: usize, seed: u64) -> Vec<SignerStyle> {
    (0..count as u32).map(|i| SignerStyle::new(1000 + i, seed)).collect()
}

/// Unlabeled single-letter frames, cycling through `styles` with random
/// letters.
pub fn make_unlabeled_pool(n_frames: usize, styles: &[SignerStyle], seed: u64) -> Result<Vec<Vec<f64>>> {
    if n_frames == 0 {
        return Err(Error::invalid("pool needs at least one frame"));
    }
    if styles.is_empty() {
        return Err(Error::invalid("pool needs at least one style"));
    }
    let tree = SeedTree::new(seed).child("pool");
    Ok((0..n_frames)
        .map(|i| {
            let mut rng = tree.index(i as u64).rng();
            let letter = rng.gen_range(0..26);
            letter_frame(letter, &styles[i % styles.len()], &mut rng)
        })
        .collect())
}

/// Stacks each frame with its `(w - 1) / 2` neighbours on either side,
/// replicating the first and last frames past the ends.
pub fn window_frames(frames: &Tensor, w: usize) -> Result<Tensor> {
    if w % 2 == 0 {
        return Err(Error::invalid(format!("window size {w} must be odd")));
    }
    let (s, d) = (frames.rows(), frames.cols());
    let half = (w / 2) as i64;
    let mut out = Vec::with_capacity(s * w * d);
    for i in 0..s as i64 {
        for j in -half..=half {
            let k = (i + j).clamp(0, s as i64 - 1) as usize;
            out.extend_from_slice(frames.row_slice(k));
        }
    }
    Tensor::new(&[s, w * d], out)
}
