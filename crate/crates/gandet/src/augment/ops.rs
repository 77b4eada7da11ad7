use crate::augment::Image;
use crate::error::{Error, Result};
use crate::tensorcore::RngStream;

/// Mirror an index into [0, n) ("reflect" boundary, edge sample repeated).
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with kernel radius ceil(3*sigma) and reflect
/// boundary handling. sigma = 0 is a bit-exact identity.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for d in -radius..=radius {
        kernel.push((-(d * d) as f64 / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= norm);

    let (h, w) = (img.height(), img.width());
    // horizontal pass
    let mut tmp = vec![0.0; 3 * h * w];
    for c in 0..3 {
        let plane = img.channel(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sx = reflect(x as isize + ki as isize - radius, w);
                    acc += kv * plane[y * w + sx];
                }
                tmp[(c * h + y) * w + x] = acc;
            }
        }
    }
    // vertical pass
    let mut out = vec![0.0; 3 * h * w];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sy = reflect(y as isize + ki as isize - radius, h);
                    acc += kv * tmp[(c * h + sy) * w + x];
                }
                out[(c * h + y) * w + x] = acc.clamp(0.0, 1.0);
            }
        }
    }
    Image::new(h, w, out).expect("blur keeps values in range")
}

/// BT.601 luma of one pixel; exact passthrough for already-gray pixels.
#[inline]
fn luma(r: f64, g: f64, b: f64) -> f64 {
    if r == g && g == b {
        r
    } else {
        0.299 * r + 0.587 * g + 0.114 * b
    }
}

/// BT.601 grayscale, replicated on all three channels.
pub fn to_grayscale(img: &Image) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut gray = vec![0.0; h * w];
    for i in 0..h * w {
        gray[i] = luma(
            img.data()[i],
            img.data()[h * w + i],
            img.data()[2 * h * w + i],
        )
        .clamp(0.0, 1.0);
    }
    let mut data = Vec::with_capacity(3 * h * w);
    for _ in 0..3 {
        data.extend_from_slice(&gray);
    }
    Image::new(h, w, data).expect("grayscale keeps values in range")
}

/// Photometric jitter. Identity parameters (1, 1, 1, 0) skip every stage,
/// so they return the input bit-exact.
///
/// Formulas, applied in order and clamped to [0,1] after each stage:
///   brightness: v' = brightness * v
///   contrast:   v' = mean_luma + contrast * (v - mean_luma)
///   saturation: v' = gray(pixel) + saturation * (v - gray(pixel))
///   hue:        HSV hue rotated by the given degrees
pub fn color_jitter(
    img: &Image,
    brightness: f64,
    contrast: f64,
    saturation: f64,
    hue_degrees: f64,
) -> Result<Image> {
    for (name, f) in [
        ("brightness", brightness),
        ("contrast", contrast),
        ("saturation", saturation),
    ] {
        if f < 0.0 {
            return Err(Error::Contract(format!(
                "color_jitter: {name} factor must be >= 0, got {f}"
            )));
        }
    }
    let mut out = img.clone();
    if brightness != 1.0 {
        out = out.map_clamped(|v| v * brightness);
    }
    if contrast != 1.0 {
        let (h, w) = (out.height(), out.width());
        let mut mean = 0.0;
        for i in 0..h * w {
            mean += luma(
                out.data()[i],
                out.data()[h * w + i],
                out.data()[2 * h * w + i],
            );
        }
        mean /= (h * w) as f64;
        out = out.map_clamped(|v| mean + contrast * (v - mean));
    }
    if saturation != 1.0 {
        let (h, w) = (out.height(), out.width());
        let mut data = out.data().to_vec();
        for i in 0..h * w {
            let g = luma(data[i], data[h * w + i], data[2 * h * w + i]);
            for c in 0..3 {
                let v = g + saturation * (data[c * h * w + i] - g);
                data[c * h * w + i] = v.clamp(0.0, 1.0);
            }
        }
        out = Image::new(h, w, data)?;
    }
    if hue_degrees != 0.0 {
        let (h, w) = (out.height(), out.width());
        let mut data = out.data().to_vec();
        for i in 0..h * w {
            let (r, g, b) = (data[i], data[h * w + i], data[2 * h * w + i]);
            let (hh, s, v) = rgb_to_hsv(r, g, b);
            let (r, g, b) = hsv_to_rgb((hh + hue_degrees).rem_euclid(360.0), s, v);
            data[i] = r.clamp(0.0, 1.0);
            data[h * w + i] = g.clamp(0.0, 1.0);
            data[2 * h * w + i] = b.clamp(0.0, 1.0);
        }
        out = Image::new(h, w, data)?;
    }
    Ok(out)
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / d).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0).rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as usize % 6 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    (r + m, g + m, b + m)
}

/// Add i.i.d. zero-mean Gaussian noise per sample, clamped to [0,1].
/// sigma = 0 is a bit-exact identity.
pub fn add_gaussian_noise(img: &Image, sigma: f64, rng: &mut RngStream) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let data = img
        .data()
        .iter()
        .map(|&v| (v + sigma * rng.normal()).clamp(0.0, 1.0))
        .collect();
    Image::new(img.height(), img.width(), data).expect("noise output clamped into range")
}

/// Blank a rectangle with a fill value. The rectangle may extend past the
/// borders; it is clipped. A zero-area rectangle is a bit-exact identity.
pub fn cutout(img: &Image, x: isize, y: isize, w: usize, h: usize, fill: f64) -> Image {
    let mut out = img.clone();
    if w == 0 || h == 0 {
        return out;
    }
    let x0 = x.max(0) as usize;
    let y0 = y.max(0) as usize;
    let x1 = ((x + w as isize).max(0) as usize).min(img.width());
    let y1 = ((y + h as isize).max(0) as usize).min(img.height());
    let fill = fill.clamp(0.0, 1.0);
    for c in 0..3 {
        for yy in y0..y1 {
            for xx in x0..x1 {
                out.set(c, yy, xx, fill);
            }
        }
    }
    out
}

/// Reflect-pad an image up to at least (h, w).
fn reflect_pad_to(img: &Image, h: usize, w: usize) -> Image {
    if img.height() >= h && img.width() >= w {
        return img.clone();
    }
    let (oh, ow) = (img.height().max(h), img.width().max(w));
    Image::from_fn(oh, ow, |c, y, x| {
        img.get(
            c,
            reflect(y as isize, img.height()),
            reflect(x as isize, img.width()),
        )
    })
}

/// Contiguous size x size crop at an rng-chosen offset, uniform over valid
/// offsets. Undersized inputs are reflect-padded up to size first.
pub fn random_crop(img: &Image, size: usize, rng: &mut RngStream) -> Result<Image> {
    if size == 0 {
        return Err(Error::Contract("random_crop: size must be positive".into()));
    }
    let padded;
    let src = if img.height() < size || img.width() < size {
        padded = reflect_pad_to(img, size, size);
        &padded
    } else {
        img
    };
    let oy = rng.index(src.height() - size + 1);
    let ox = rng.index(src.width() - size + 1);
    Ok(crop(src, oy, ox, size))
}

pub(crate) fn crop(img: &Image, oy: usize, ox: usize, size: usize) -> Image {
    let mut data = Vec::with_capacity(3 * size * size);
    for c in 0..3 {
        for y in 0..size {
            for x in 0..size {
                data.push(img.get(c, oy + y, ox + x));
            }
        }
    }
    Image::new(size, size, data).expect("crop stays in range")
}

/// Deterministic center crop (validation path).
pub fn center_crop(img: &Image, size: usize) -> Image {
    let padded;
    let src = if img.height() < size || img.width() < size {
        padded = reflect_pad_to(img, size, size);
        &padded
    } else {
        img
    };
    crop(src, (src.height() - size) / 2, (src.width() - size) / 2, size)
}

/// Bilinear resampling by a scale factor, half-pixel-center convention
/// (corner alignment off): src = (dst + 0.5) * in/out - 0.5, clamped to the
/// valid range. scale = 1 is a bit-exact identity.
pub fn resize_bilinear(img: &Image, scale: f64) -> Result<Image> {
    if !(scale > 0.0) {
        return Err(Error::Contract(format!(
            "resize_bilinear: scale must be positive, got {scale}"
        )));
    }
    if scale == 1.0 {
        return Ok(img.clone());
    }
    let oh = (img.height() as f64 * scale).round() as usize;
    let ow = (img.width() as f64 * scale).round() as usize;
    if oh == 0 || ow == 0 {
        return Err(Error::Contract(format!(
            "resize_bilinear: scale {scale} collapses {}x{} to a degenerate size",
            img.height(),
            img.width()
        )));
    }
    let ry = img.height() as f64 / oh as f64;
    let rx = img.width() as f64 / ow as f64;
    let mut data = Vec::with_capacity(3 * oh * ow);
    for c in 0..3 {
        for y in 0..oh {
            let sy = ((y as f64 + 0.5) * ry - 0.5).clamp(0.0, (img.height() - 1) as f64);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(img.height() - 1);
            let fy = sy - y0 as f64;
            for x in 0..ow {
                let sx = ((x as f64 + 0.5) * rx - 0.5).clamp(0.0, (img.width() - 1) as f64);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(img.width() - 1);
                let fx = sx - x0 as f64;
                let v = (1.0 - fy) * ((1.0 - fx) * img.get(c, y0, x0) + fx * img.get(c, y0, x1))
                    + fy * ((1.0 - fx) * img.get(c, y1, x0) + fx * img.get(c, y1, x1));
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Image::new(oh, ow, data)
}
