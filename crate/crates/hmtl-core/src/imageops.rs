//! Pixel-level primitives over `Array3<f32>` images.
//!
//! Images are (height, width, channel) arrays with values in [0, 1].
//! Geometric ops that must be exactly invertible (`rot90`, `crop`,
//! `paste`) move pixels without interpolation; resizing is bilinear or
//! nearest-neighbor and short-circuits to a copy when shapes already match.

use ndarray::{Array3, ArrayView3, Axis};

use crate::error::{Error, Result};

pub type Image = Array3<f32>;

/// (height, width) of an image.
pub fn dims(img: &Image) -> (usize, usize) {
    (img.shape()[0], img.shape()[1])
}

/// Extracts the rectangle starting at (top, left) with the given size.
pub fn crop(img: &Image, top: usize, left: usize, h: usize, w: usize) -> Result<Image> {
    let (ih, iw) = dims(img);
    if top + h > ih || left + w > iw || h == 0 || w == 0 {
        return Err(Error::invalid(format!(
            "crop {h}x{w}@({top},{left}) outside {ih}x{iw} image"
        )));
    }
    Ok(img
        .slice(ndarray::s![top..top + h, left..left + w, ..])
        .to_owned())
}

/// Writes `patch` into `img` with its top-left corner at (top, left).
pub fn paste(img: &mut Image, patch: &ArrayView3<f32>, top: usize, left: usize) -> Result<()> {
    let (ih, iw) = dims(img);
    let (ph, pw) = (patch.shape()[0], patch.shape()[1]);
    if top + ph > ih || left + pw > iw {
        return Err(Error::invalid("paste region outside image"));
    }
    img.slice_mut(ndarray::s![top..top + ph, left..left + pw, ..])
        .assign(patch);
    Ok(())
}

/// Rotates by `k` * 90 degrees counterclockwise. Exact pixel permutation.
pub fn rot90(img: &Image, k: u8) -> Image {
    match k % 4 {
        0 => img.clone(),
        1 => {
            // (y, x) <- (x, W-1-y): transpose then flip rows
            let mut t = img.view().permuted_axes([1, 0, 2]).to_owned();
            t.invert_axis(Axis(0));
            t
        }
        2 => {
            let mut t = img.clone();
            t.invert_axis(Axis(0));
            t.invert_axis(Axis(1));
            t
        }
        3 => {
            let mut t = img.view().permuted_axes([1, 0, 2]).to_owned();
            t.invert_axis(Axis(1));
            t
        }
        _ => unreachable!(),
    }
}

/// Bilinear resize to (oh, ow). Identity copy when the size already matches.
pub fn resize_bilinear(img: &Image, oh: usize, ow: usize) -> Image {
    let (ih, iw) = dims(img);
    let c = img.shape()[2];
    if ih == oh && iw == ow {
        return img.clone();
    }
    let mut out = Array3::zeros((oh, ow, c));
    let sy = ih as f32 / oh as f32;
    let sx = iw as f32 / ow as f32;
    for oy in 0..oh {
        let fy = ((oy as f32 + 0.5) * sy - 0.5).clamp(0.0, (ih - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(ih - 1);
        let wy = fy - y0 as f32;
        for ox in 0..ow {
            let fx = ((ox as f32 + 0.5) * sx - 0.5).clamp(0.0, (iw - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(iw - 1);
            let wx = fx - x0 as f32;
            for ch in 0..c {
                let v00 = img[[y0, x0, ch]];
                let v01 = img[[y0, x1, ch]];
                let v10 = img[[y1, x0, ch]];
                let v11 = img[[y1, x1, ch]];
                let top = v00 + (v01 - v00) * wx;
                let bot = v10 + (v11 - v10) * wx;
                out[[oy, ox, ch]] = top + (bot - top) * wy;
            }
        }
    }
    out
}

/// Nearest-neighbor resize to (oh, ow).
pub fn resize_nearest(img: &Image, oh: usize, ow: usize) -> Image {
    let (ih, iw) = dims(img);
    let c = img.shape()[2];
    if ih == oh && iw == ow {
        return img.clone();
    }
    let mut out = Array3::zeros((oh, ow, c));
    for oy in 0..oh {
        let y = ((oy as f32 + 0.5) * ih as f32 / oh as f32) as usize;
        let y = y.min(ih - 1);
        for ox in 0..ow {
            let x = ((ox as f32 + 0.5) * iw as f32 / ow as f32) as usize;
            let x = x.min(iw - 1);
            for ch in 0..c {
                out[[oy, ox, ch]] = img[[y, x, ch]];
            }
        }
    }
    out
}

/// Separable gaussian blur with the given sigma; kernel radius 2*sigma.
pub fn gaussian_blur(img: &Image, sigma: f32) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (2.0 * sigma).ceil().max(1.0) as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let denom = 2.0 * sigma * sigma;
    for i in -radius..=radius {
        kernel.push((-((i * i) as f32) / denom).exp());
    }
    let sum: f32 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }

    let (h, w) = dims(img);
    let c = img.shape()[2];
    let mut tmp = Array3::<f32>::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sx = (x as isize + ki as isize - radius).clamp(0, w as isize - 1) as usize;
                    acc += img[[y, sx, ch]] * kv;
                }
                tmp[[y, x, ch]] = acc;
            }
        }
    }
    let mut out = Array3::<f32>::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sy = (y as isize + ki as isize - radius).clamp(0, h as isize - 1) as usize;
                    acc += tmp[[sy, x, ch]] * kv;
                }
                out[[y, x, ch]] = acc;
            }
        }
    }
    out
}

/// Per-pixel luminance (Rec. 601 weights), replicated to all channels.
pub fn grayscale(img: &Image) -> Image {
    let (h, w) = dims(img);
    let c = img.shape()[2];
    let mut out = img.clone();
    if c < 3 {
        return out;
    }
    for y in 0..h {
        for x in 0..w {
            let l = 0.299 * img[[y, x, 0]] + 0.587 * img[[y, x, 1]] + 0.114 * img[[y, x, 2]];
            for ch in 0..3 {
                out[[y, x, ch]] = l;
            }
        }
    }
    out
}

/// Mean value per channel.
pub fn channel_means(img: &Image) -> Vec<f32> {
    let c = img.shape()[2];
    let n = (img.shape()[0] * img.shape()[1]) as f32;
    (0..c)
        .map(|ch| img.index_axis(Axis(2), ch).sum() / n)
        .collect()
}

/// Clamps all values into [0, 1].
pub fn clamp01(img: &mut Image) {
    img.mapv_inplace(|v| v.clamp(0.0, 1.0));
}

/// Shifts hue by `delta` (in turns, i.e. 1.0 = full cycle) via HSV.
pub fn shift_hue(img: &Image, delta: f32) -> Image {
    let (h, w) = dims(img);
    let mut out = img.clone();
    if img.shape()[2] < 3 {
        return out;
    }
    for y in 0..h {
        for x in 0..w {
            let (r, g, b) = (img[[y, x, 0]], img[[y, x, 1]], img[[y, x, 2]]);
            let (hh, s, v) = rgb_to_hsv(r, g, b);
            let hh = (hh + delta).rem_euclid(1.0);
            let (r, g, b) = hsv_to_rgb(hh, s, v);
            out[[y, x, 0]] = r;
            out[[y, x, 1]] = g;
            out[[y, x, 2]] = b;
        }
    }
    out
}

pub fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let v = max;
    let d = max - min;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / d).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h, s, v)
}

pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Encodes to 8-bit RGB for file export.
pub fn to_rgb8(img: &Image) -> Vec<u8> {
    let (h, w) = dims(img);
    let mut bytes = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                let v = img[[y, x, ch.min(img.shape()[2] - 1)]];
                bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    bytes
}

/// Decodes 8-bit RGB bytes into a float image.
pub fn from_rgb8(bytes: &[u8], h: usize, w: usize) -> Result<Image> {
    if bytes.len() != h * w * 3 {
        return Err(Error::invalid("byte length does not match image shape"));
    }
    let mut img = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                img[[y, x, ch]] = bytes[(y * w + x) * 3 + ch] as f32 / 255.0;
            }
        }
    }
    Ok(img)
}
