//! Deterministic multi-center synthetic slides.
//!
//! Every slide is a full `height × width` grid of patches whose features are
//! Gaussian noise plus the slide's center shift. Tumor patches additionally
//! carry a unit signal direction `u`:
//!
//! * `presence`: positive slides hold one disc of tumor patches, negative
//!   slides none.
//! * `contiguity`: every slide holds exactly as many tumor patches as one
//!   disc covers. Positives arrange them as the disc; negatives scatter them
//!   so that no two touch (8-neighbourhood). Only the arrangement differs
//!   between classes.
//!
//! The per-center positive rate is `0.5 ± rho / 2`, alternating sign between
//! centers, which makes the center a confounder of the label.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{save_slide, GridCoord, Label, Manifest, ManifestEntry, SlideRecord};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::{self, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthTask {
    Presence,
    Contiguity,
}

impl FromStr for SynthTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "presence" => Ok(SynthTask::Presence),
            "contiguity" => Ok(SynthTask::Contiguity),
            other => Err(Error::Config(format!("unknown synthetic task {other:?}"))),
        }
    }
}

impl SynthTask {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthTask::Presence => "presence",
            SynthTask::Contiguity => "contiguity",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_centers: usize,
    pub slides_per_center: usize,
    pub height: usize,
    pub width: usize,
    pub feature_dim: usize,
    /// Tumor disc radius in grid units.
    pub radius: usize,
    /// Norm of each center's additive feature shift.
    pub shift: f64,
    /// Label/center correlation in `[0, 1]`.
    pub rho: f64,
    pub task: SynthTask,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_centers: 3,
            slides_per_center: 20,
            height: 12,
            width: 12,
            feature_dim: 16,
            radius: 2,
            shift: 1.0,
            rho: 0.0,
            task: SynthTask::Presence,
            noise_std: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_centers == 0 || self.slides_per_center == 0 {
            return bad("need at least one center and one slide per center".into());
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho {} outside [0, 1]", self.rho));
        }
        if self.radius == 0 {
            return bad("radius must be at least 1".into());
        }
        let span = 2 * self.radius + 1;
        if span > self.height || span > self.width {
            return bad(format!(
                "a radius-{} disc does not fit a {}x{} grid",
                self.radius, self.height, self.width
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) || !self.shift.is_finite() || self.shift < 0.0 {
            return bad("noise_std and shift must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Number of cells in the tumor disc.
    pub fn disc_area(&self) -> usize {
        disc_offsets(self.radius).len()
    }
}

/// Synthetic slides plus the ground truth used to build them.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub slides: Vec<SlideRecord>,
    /// Per slide, per patch: whether the patch carries the tumor signal.
    pub tumor_masks: Vec<Vec<bool>>,
    pub signal: Vec<f64>,
    pub center_shifts: Vec<Vec<f64>>,
}

pub fn center_name(c: usize) -> String {
    format!("center{c}")
}

/// Builds the dataset in memory.
pub fn generate_slides(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let m = cfg.disc_area();
    if cfg.task == SynthTask::Contiguity {
        let max_independent = cfg.height.div_ceil(2) * cfg.width.div_ceil(2);
        if m > max_independent {
            return Err(Error::Infeasible(format!(
                "{m} pairwise non-adjacent patches do not fit a {}x{} grid",
                cfg.height, cfg.width
            )));
        }
    }
    let mut global = rng::seeded(rng::derive(cfg.seed, rng::stream::SYNTH));
    let signal = random_unit(&mut global, cfg.feature_dim);
    let center_shifts: Vec<Vec<f64>> = (0..cfg.n_centers)
        .map(|_| random_unit(&mut global, cfg.feature_dim).into_iter().map(|v| v * cfg.shift).collect())
        .collect();

    let coords: Vec<GridCoord> = (0..cfg.height)
        .flat_map(|y| (0..cfg.width).map(move |x| GridCoord::new(x as i32, y as i32)))
        .collect();

    let mut slides = Vec::new();
    let mut masks = Vec::new();
    for (c, shift) in center_shifts.iter().enumerate() {
        let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
        let rate = 0.5 + 0.5 * cfg.rho * sign;
        let n_pos = (rate * cfg.slides_per_center as f64).round() as usize;
        let mut labels: Vec<Label> = (0..cfg.slides_per_center)
            .map(|i| if i < n_pos { Label::Tumor } else { Label::Normal })
            .collect();
        labels.shuffle(&mut global);

        for (i, label) in labels.into_iter().enumerate() {
            let index = (c * cfg.slides_per_center + i) as u64;
            let mut srng = rng::seeded(rng::derive(cfg.seed, 10_000 + index));
            let mask = tumor_mask(cfg, label, &mut srng)?;
            let mut data = Vec::with_capacity(coords.len() * cfg.feature_dim);
            for &tumor in &mask {
                for f in 0..cfg.feature_dim {
                    let noise: f64 = StandardNormal.sample(&mut srng);
                    let mut v = cfg.noise_std * noise + shift[f];
                    if tumor {
                        v += signal[f];
                    }
                    data.push(v as f32 as f64);
                }
            }
            let features = Matrix::from_vec(coords.len(), cfg.feature_dim, data)?;
            let id = format!("{}_s{i:04}", center_name(c));
            slides.push(SlideRecord::new(id, label, center_name(c), coords.clone(), features)?);
            masks.push(mask);
        }
    }
    Ok(SynthDataset { slides, tumor_masks: masks, signal, center_shifts })
}

/// Generates the dataset and writes `slides/<id>.gmil` plus `manifest.csv`
/// under `out_dir`.
pub fn generate(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    let data = generate_slides(cfg)?;
    fs::create_dir_all(out_dir.join("slides"))?;
    let mut entries = Vec::with_capacity(data.slides.len());
    for s in &data.slides {
        let rel = PathBuf::from("slides").join(format!("{}.gmil", s.slide_id));
        save_slide(s, out_dir.join(&rel))?;
        entries.push(ManifestEntry {
            slide_id: s.slide_id.clone(),
            path: rel,
            label: s.label,
            center_id: s.center_id.clone(),
        });
    }
    let manifest = Manifest::new(entries, out_dir)?;
    manifest.save(out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

fn random_unit(rng: &mut SeededRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn disc_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn tumor_mask(cfg: &SynthConfig, label: Label, rng: &mut SeededRng) -> Result<Vec<bool>> {
    let (h, w) = (cfg.height, cfg.width);
    let mut mask = vec![false; h * w];
    let place_disc = |mask: &mut Vec<bool>, rng: &mut SeededRng| {
        let r = cfg.radius;
        let cx = rng.random_range(r..w - r) as isize;
        let cy = rng.random_range(r..h - r) as isize;
        for (dx, dy) in disc_offsets(r) {
            mask[(cy + dy) as usize * w + (cx + dx) as usize] = true;
        }
    };
    match (cfg.task, label) {
        (_, Label::Tumor) => place_disc(&mut mask, rng),
        (SynthTask::Presence, Label::Normal) => {}
        (SynthTask::Contiguity, Label::Normal) => {
            let m = cfg.disc_area();
            let mut cells: Vec<usize> = (0..h * w).collect();
            for _ in 0..1000 {
                cells.shuffle(rng);
                mask.iter_mut().for_each(|v| *v = false);
                let mut placed = 0;
                for &cell in &cells {
                    let (y, x) = ((cell / w) as isize, (cell % w) as isize);
                    let touches = (-1..=1).any(|dy| {
                        (-1..=1).any(|dx| {
                            let (ny, nx) = (y + dy, x + dx);
                            ny >= 0
                                && nx >= 0
                                && (ny as usize) < h
                                && (nx as usize) < w
                                && mask[ny as usize * w + nx as usize]
                        })
                    });
                    if !touches {
                        mask[cell] = true;
                        placed += 1;
                        if placed == m {
                            return Ok(mask);
                        }
                    }
                }
            }
            return Err(Error::Infeasible(format!(
                "could not scatter {m} non-adjacent patches on a {h}x{w} grid"
            )));
        }
    }
    Ok(mask)
}
