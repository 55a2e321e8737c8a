//! Training-time augmentation: the two supervised levels and the Barlow
//! Twins two-view distortion pipeline.
//!
//! Level 1 applies random central zoom and random contrast; level 2 adds
//! blurring, downscaled resolution and cutout. The Barlow Twins pipeline
//! runs a fixed stage order per view: 90-degree rotation, crop, color
//! jitter, grayscale, gaussian noise, one of {blur, resize}, optional 3x3
//! puzzling, cutout, final resize to the model input size. Puzzling, when
//! enabled, always precedes cutout.
//!
//! Magnitudes the protocol leaves open (zoom span, jitter strength, noise
//! sigma, ...) are config fields with the defaults below; every draw comes
//! from the caller's rng, so identical seeds give identical outputs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{self, Image};
use crate::pretext::{self, PretextTask, TileGrid};
use crate::rngutil;

/// Supervised augmentation configuration. Build via [`AugConfig::level`]
/// and override fields as needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugConfig {
    pub level: u8,
    /// Central zoom keeps this fraction of the side, then resizes back.
    pub zoom_range: (f32, f32),
    pub contrast_range: (f32, f32),
    pub brightness_probability: f32,
    pub brightness_range: (f32, f32),
    pub hue_probability: f32,
    /// Hue shift in turns.
    pub hue_delta: f32,
    pub noise_probability: f32,
    pub noise_sigma_max: f32,
    pub blur_probability: f32,
    pub blur_sigma_range: (f32, f32),
    pub downscale_probability: f32,
    pub downscale_range: (f32, f32),
    pub cutout_probability: f32,
    /// Cutout square side as a fraction of the shorter image side.
    pub cutout_side_range: (f32, f32),
}

impl Default for AugConfig {
    fn default() -> Self {
        AugConfig::level(1)
    }
}

impl AugConfig {
    /// The named augmentation level: 1 = zoom + contrast,
    /// 2 = level 1 plus blur, downscale and cutout.
    pub fn level(level: u8) -> Self {
        let l2 = level >= 2;
        AugConfig {
            level,
            zoom_range: (0.85, 1.0),
            contrast_range: (0.8, 1.2),
            brightness_probability: 0.0,
            brightness_range: (0.8, 1.2),
            hue_probability: 0.0,
            hue_delta: 0.05,
            noise_probability: 0.0,
            noise_sigma_max: 0.05,
            blur_probability: if l2 { 0.5 } else { 0.0 },
            blur_sigma_range: (0.5, 2.0),
            downscale_probability: if l2 { 0.5 } else { 0.0 },
            downscale_range: (0.25, 1.0),
            cutout_probability: if l2 { 0.5 } else { 0.0 },
            cutout_side_range: (0.1, 0.3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.level) {
            return Err(Error::invalid("augmentation level must be 1 or 2"));
        }
        if self.level == 1
            && (self.blur_probability > 0.0
                || self.downscale_probability > 0.0
                || self.cutout_probability > 0.0)
        {
            return Err(Error::invalid(
                "level 1 must not blur, downscale or cut out",
            ));
        }
        for p in [
            self.brightness_probability,
            self.hue_probability,
            self.noise_probability,
            self.blur_probability,
            self.downscale_probability,
            self.cutout_probability,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("probabilities must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Which probabilistic stages fired during one [`augment_traced`] call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AugTrace {
    pub brightness: bool,
    pub hue: bool,
    pub noise: bool,
    pub blur: bool,
    pub downscale: bool,
    pub cutout: bool,
}

fn apply_contrast(img: &Image, factor: f32) -> Image {
    if factor == 1.0 {
        return img.clone();
    }
    let mean = {
        let g = imageops::grayscale(img);
        g.sum() / g.len() as f32
    };
    let mut out = img.mapv(|v| mean + (v - mean) * factor);
    imageops::clamp01(&mut out);
    out
}

fn apply_brightness(img: &Image, factor: f32) -> Image {
    if factor == 1.0 {
        return img.clone();
    }
    let mut out = img.mapv(|v| v * factor);
    imageops::clamp01(&mut out);
    out
}

fn apply_saturation(img: &Image, factor: f32) -> Image {
    if factor == 1.0 {
        return img.clone();
    }
    let gray = imageops::grayscale(img);
    let mut out = img.clone();
    out.zip_mut_with(&gray, |v, &g| *v = (g + (*v - g) * factor).clamp(0.0, 1.0));
    out
}

fn central_zoom(img: &Image, keep: f32, rng_unused: ()) -> Image {
    let _ = rng_unused;
    if keep >= 1.0 {
        return img.clone();
    }
    let (h, w) = imageops::dims(img);
    let ch = ((h as f32 * keep).round() as usize).clamp(1, h);
    let cw = ((w as f32 * keep).round() as usize).clamp(1, w);
    let top = (h - ch) / 2;
    let left = (w - cw) / 2;
    let cropped = imageops::crop(img, top, left, ch, cw).expect("central crop in bounds");
    imageops::resize_bilinear(&cropped, h, w)
}

fn add_noise(img: &Image, sigma: f32, rng: &mut ChaCha8Rng) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let mut out = img.clone();
    out.mapv_inplace(|v| v + sigma * rngutil::normal(rng));
    imageops::clamp01(&mut out);
    out
}

fn downscale_resolution(img: &Image, factor: f32) -> Image {
    if factor >= 1.0 {
        return img.clone();
    }
    let (h, w) = imageops::dims(img);
    let dh = ((h as f32 * factor).round() as usize).max(1);
    let dw = ((w as f32 * factor).round() as usize).max(1);
    let small = imageops::resize_bilinear(img, dh, dw);
    imageops::resize_bilinear(&small, h, w)
}

fn cutout(img: &mut Image, side_frac: f32, rng: &mut ChaCha8Rng) -> bool {
    let (h, w) = imageops::dims(img);
    let side = ((h.min(w) as f32) * side_frac).round() as usize;
    if side == 0 {
        return false;
    }
    let side = side.min(h).min(w);
    let top = rng.random_range(0..=(h - side));
    let left = rng.random_range(0..=(w - side));
    let fill = imageops::channel_means(img);
    for y in top..top + side {
        for x in left..left + side {
            for (c, f) in fill.iter().enumerate() {
                img[[y, x, c]] = *f;
            }
        }
    }
    true
}

/// Applies one supervised augmentation draw. Same shape in, same shape out;
/// deterministic given the rng state.
pub fn augment(img: &Image, config: &AugConfig, rng: &mut ChaCha8Rng) -> Result<Image> {
    augment_traced(img, config, rng).map(|(img, _)| img)
}

/// [`augment`] plus a record of which probabilistic stages fired.
pub fn augment_traced(
    img: &Image,
    config: &AugConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Image, AugTrace)> {
    config.validate()?;
    let mut trace = AugTrace::default();

    let keep = rngutil::uniform(rng, config.zoom_range.0, config.zoom_range.1);
    let mut out = central_zoom(img, keep, ());

    if config.brightness_probability > 0.0 && rng.random::<f32>() < config.brightness_probability
    {
        trace.brightness = true;
        let f = rngutil::uniform(rng, config.brightness_range.0, config.brightness_range.1);
        out = apply_brightness(&out, f);
    }

    let f = rngutil::uniform(rng, config.contrast_range.0, config.contrast_range.1);
    out = apply_contrast(&out, f);

    if config.hue_probability > 0.0 && rng.random::<f32>() < config.hue_probability {
        trace.hue = true;
        let d = rngutil::uniform(rng, -config.hue_delta, config.hue_delta);
        out = imageops::shift_hue(&out, d);
    }

    if config.noise_probability > 0.0 && rng.random::<f32>() < config.noise_probability {
        trace.noise = true;
        let sigma = rngutil::uniform(rng, 0.0, config.noise_sigma_max);
        out = add_noise(&out, sigma, rng);
    }

    if config.blur_probability > 0.0 && rng.random::<f32>() < config.blur_probability {
        trace.blur = true;
        let sigma = rngutil::uniform(rng, config.blur_sigma_range.0, config.blur_sigma_range.1);
        out = imageops::gaussian_blur(&out, sigma);
    }

    if config.downscale_probability > 0.0 && rng.random::<f32>() < config.downscale_probability {
        trace.downscale = true;
        let f = rngutil::uniform(rng, config.downscale_range.0, config.downscale_range.1);
        out = downscale_resolution(&out, f);
    }

    if config.cutout_probability > 0.0 && rng.random::<f32>() < config.cutout_probability {
        let frac =
            rngutil::uniform(rng, config.cutout_side_range.0, config.cutout_side_range.1);
        trace.cutout = cutout(&mut out, frac, rng);
    }

    Ok((out, trace))
}

/// Barlow Twins view distortion configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BtViewConfig {
    pub p_color_jitter: f32,
    pub p_grayscale: f32,
    /// Probability that the drawn blur-or-resize candidate is applied.
    pub p_blur_or_resize: f32,
    pub jitter_strength: f32,
    pub noise_sigma_max: f32,
    pub blur_sigma_range: (f32, f32),
    pub resize_range: (f32, f32),
    /// Crop side as a fraction of the source side.
    pub crop_scale_range: (f32, f32),
    pub cutout_side_range: (f32, f32),
    /// The puzzling-augmented variant: random 3x3 puzzling before cutout.
    pub puzzling_variant: bool,
    /// Both views are resized to this square size at the end.
    pub output_size: usize,
}

impl Default for BtViewConfig {
    fn default() -> Self {
        BtViewConfig {
            p_color_jitter: 0.8,
            p_grayscale: 0.3,
            p_blur_or_resize: 0.2,
            jitter_strength: 0.4,
            noise_sigma_max: 0.05,
            blur_sigma_range: (0.5, 2.0),
            resize_range: (0.25, 1.0),
            crop_scale_range: (0.6, 1.0),
            cutout_side_range: (0.1, 0.3),
            puzzling_variant: false,
            output_size: 224,
        }
    }
}

impl BtViewConfig {
    pub fn validate(&self) -> Result<()> {
        for p in [self.p_color_jitter, self.p_grayscale, self.p_blur_or_resize] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("probabilities must lie in [0, 1]"));
            }
        }
        if self.output_size == 0 {
            return Err(Error::invalid("output size must be positive"));
        }
        Ok(())
    }

    /// Stage names in application order, for run records.
    pub fn stage_names(&self) -> Vec<&'static str> {
        let mut stages = vec![
            "rot90",
            "crop",
            "color_jitter",
            "grayscale",
            "gaussian_noise",
            "blur_or_resize",
        ];
        if self.puzzling_variant {
            stages.push("puzzle3x3");
        }
        stages.push("cutout");
        stages.push("resize_to_input");
        stages
    }
}

/// Which stages fired while producing one Barlow Twins view.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BtViewTrace {
    pub rotation_class: u8,
    pub color_jitter: bool,
    pub grayscale: bool,
    pub blur: bool,
    pub resize: bool,
    pub puzzled: bool,
    pub cutout: bool,
}

fn bt_view(img: &Image, config: &BtViewConfig, rng: &mut ChaCha8Rng) -> (Image, BtViewTrace) {
    let mut trace = BtViewTrace::default();

    trace.rotation_class = rng.random_range(0..=3u8);
    let mut out = imageops::rot90(img, trace.rotation_class);

    // random crop, always
    let (h, w) = imageops::dims(&out);
    let scale = rngutil::uniform(rng, config.crop_scale_range.0, config.crop_scale_range.1);
    let ch = ((h as f32 * scale).round() as usize).clamp(1, h);
    let cw = ((w as f32 * scale).round() as usize).clamp(1, w);
    let top = rng.random_range(0..=(h - ch));
    let left = rng.random_range(0..=(w - cw));
    if (ch, cw) != (h, w) {
        out = imageops::crop(&out, top, left, ch, cw).expect("crop in bounds");
    }

    if rng.random::<f32>() < config.p_color_jitter {
        trace.color_jitter = true;
        let s = config.jitter_strength;
        let b = rngutil::uniform(rng, 1.0 - s, 1.0 + s);
        let c = rngutil::uniform(rng, 1.0 - s, 1.0 + s);
        let sat = rngutil::uniform(rng, 1.0 - s, 1.0 + s);
        let hue = rngutil::uniform(rng, -s / 4.0, s / 4.0);
        out = apply_brightness(&out, b);
        out = apply_contrast(&out, c);
        out = apply_saturation(&out, sat);
        if hue != 0.0 {
            out = imageops::shift_hue(&out, hue);
        }
    }

    if rng.random::<f32>() < config.p_grayscale {
        trace.grayscale = true;
        out = imageops::grayscale(&out);
    }

    // gaussian noise, always (sigma may draw 0)
    let sigma = rngutil::uniform(rng, 0.0, config.noise_sigma_max);
    out = add_noise(&out, sigma, rng);

    // exactly one candidate of {blur, resize}, applied with its probability
    let candidate_is_blur = rng.random::<bool>();
    if rng.random::<f32>() < config.p_blur_or_resize {
        if candidate_is_blur {
            trace.blur = true;
            let s = rngutil::uniform(rng, config.blur_sigma_range.0, config.blur_sigma_range.1);
            out = imageops::gaussian_blur(&out, s);
        } else {
            trace.resize = true;
            let f = rngutil::uniform(rng, config.resize_range.0, config.resize_range.1);
            out = downscale_resolution(&out, f);
        }
    }

    if config.puzzling_variant {
        let grid = TileGrid::new(3).expect("3x3 grid");
        if imageops::dims(&out).0 >= 3 && imageops::dims(&out).1 >= 3 {
            trace.puzzled = true;
            out = pretext::sample_pretext(rng, PretextTask::Puzzle, &grid, &out)
                .expect("puzzle transform")
                .image;
        }
    }

    // cutout, always (side may round to 0)
    let frac = rngutil::uniform(rng, config.cutout_side_range.0, config.cutout_side_range.1);
    trace.cutout = cutout(&mut out, frac, rng);

    out = imageops::resize_bilinear(&out, config.output_size, config.output_size);
    (out, trace)
}

/// Produces the two independently distorted views of one source image.
pub fn bt_view_pair(
    img: &Image,
    config: &BtViewConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Image, Image)> {
    bt_view_pair_traced(img, config, rng).map(|(a, b, _, _)| (a, b))
}

/// [`bt_view_pair`] plus per-view stage traces.
pub fn bt_view_pair_traced(
    img: &Image,
    config: &BtViewConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Image, Image, BtViewTrace, BtViewTrace)> {
    config.validate()?;
    let (a, ta) = bt_view(img, config, rng);
    let (b, tb) = bt_view(img, config, rng);
    Ok((a, b, ta, tb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngutil::seeded;
    use ndarray::Array3;

    fn test_image(side: usize) -> Image {
        Array3::from_shape_fn((side, side, 3), |(y, x, c)| {
            ((y * 37 + x * 11 + c * 101) % 255) as f32 / 255.0
        })
    }

    #[test]
    fn zero_strength_level1_is_identity() {
        let mut cfg = AugConfig::level(1);
        cfg.zoom_range = (1.0, 1.0);
        cfg.contrast_range = (1.0, 1.0);
        let img = test_image(32);
        let out = augment(&img, &cfg, &mut seeded(1, 1)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn augment_is_deterministic() {
        let cfg = AugConfig::level(2);
        let img = test_image(48);
        let a = augment(&img, &cfg, &mut seeded(42, 7)).unwrap();
        let b = augment(&img, &cfg, &mut seeded(42, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn augment_preserves_shape() {
        let cfg = AugConfig::level(2);
        let img = test_image(40);
        for s in 0..20 {
            let out = augment(&img, &cfg, &mut seeded(s, 3)).unwrap();
            assert_eq!(out.shape(), img.shape());
        }
    }

    #[test]
    fn level1_never_blurs_downscales_or_cuts() {
        let cfg = AugConfig::level(1);
        let img = test_image(32);
        for s in 0..200 {
            let (_, trace) = augment_traced(&img, &cfg, &mut seeded(s, 5)).unwrap();
            assert!(!trace.blur && !trace.downscale && !trace.cutout);
        }
        let mut bad = AugConfig::level(1);
        bad.cutout_probability = 0.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cutout_frequency_matches_probability() {
        let mut cfg = AugConfig::level(2);
        cfg.blur_probability = 0.0;
        cfg.downscale_probability = 0.0;
        cfg.cutout_probability = 0.5;
        let img = test_image(32);
        let mut rng = seeded(9, 2);
        let draws = 10_000;
        let mut hits = 0;
        for _ in 0..draws {
            let (_, trace) = augment_traced(&img, &cfg, &mut rng).unwrap();
            if trace.cutout {
                hits += 1;
            }
        }
        let freq = hits as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn degenerate_bt_config_reduces_to_rotation() {
        let cfg = BtViewConfig {
            p_color_jitter: 0.0,
            p_grayscale: 0.0,
            p_blur_or_resize: 0.0,
            noise_sigma_max: 0.0,
            crop_scale_range: (1.0, 1.0),
            cutout_side_range: (0.0, 0.0),
            puzzling_variant: false,
            output_size: 32,
            ..BtViewConfig::default()
        };
        let img = test_image(32);
        let (a, b, ta, tb) = bt_view_pair_traced(&img, &cfg, &mut seeded(11, 4)).unwrap();
        assert_eq!(a, imageops::rot90(&img, ta.rotation_class));
        assert_eq!(b, imageops::rot90(&img, tb.rotation_class));
    }

    #[test]
    fn bt_views_are_deterministic() {
        let cfg = BtViewConfig {
            output_size: 32,
            ..BtViewConfig::default()
        };
        let img = test_image(48);
        let (a1, b1) = bt_view_pair(&img, &cfg, &mut seeded(3, 3)).unwrap();
        let (a2, b2) = bt_view_pair(&img, &cfg, &mut seeded(3, 3)).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn bt_views_match_output_size() {
        let cfg = BtViewConfig {
            output_size: 24,
            puzzling_variant: true,
            ..BtViewConfig::default()
        };
        let img = test_image(48);
        let (a, b) = bt_view_pair(&img, &cfg, &mut seeded(5, 5)).unwrap();
        assert_eq!(a.shape(), [24, 24, 3]);
        assert_eq!(b.shape(), [24, 24, 3]);
    }

    #[test]
    fn bt_stage_frequencies_match_probabilities() {
        let cfg = BtViewConfig {
            output_size: 16,
            ..BtViewConfig::default()
        };
        let img = test_image(32);
        let mut rng = seeded(21, 8);
        let draws = 5_000; // two views per draw -> 10^4 views
        let mut gray = 0usize;
        let mut jitter = 0usize;
        let mut blur_or_resize = 0usize;
        for _ in 0..draws {
            let (_, _, ta, tb) = bt_view_pair_traced(&img, &cfg, &mut rng).unwrap();
            for t in [&ta, &tb] {
                gray += usize::from(t.grayscale);
                jitter += usize::from(t.color_jitter);
                blur_or_resize += usize::from(t.blur || t.resize);
            }
        }
        let views = (2 * draws) as f64;
        assert!((gray as f64 / views - 0.3).abs() < 0.02);
        assert!((jitter as f64 / views - 0.8).abs() < 0.02);
        assert!((blur_or_resize as f64 / views - 0.2).abs() < 0.02);
    }

    #[test]
    fn puzzling_variant_reports_stage_before_cutout() {
        let cfg = BtViewConfig {
            puzzling_variant: true,
            output_size: 16,
            ..BtViewConfig::default()
        };
        let stages = cfg.stage_names();
        let puzzle = stages.iter().position(|s| *s == "puzzle3x3").unwrap();
        let cut = stages.iter().position(|s| *s == "cutout").unwrap();
        assert!(puzzle < cut);
        let img = test_image(33);
        let (_, _, ta, tb) = bt_view_pair_traced(&img, &cfg, &mut seeded(2, 2)).unwrap();
        assert!(ta.puzzled && tb.puzzled);
    }
}
