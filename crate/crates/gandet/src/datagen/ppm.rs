use crate::augment::Image;
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

/// Write an image as binary PPM (P6, 8-bit). Codec-free and bit-exact:
/// samples are rounded to bytes once, here.
pub fn write_ppm(img: &Image, path: &Path) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let mut buf = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                buf.push((img.get(c, y, x) * 255.0).round() as u8);
            }
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a binary PPM; byte values map to reals as byte/255.
pub fn read_ppm(path: &Path) -> Result<Image> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Manifest(format!("{}: {msg}", path.display()));
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        }
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Manifest(format!(
                "{}: truncated header",
                path.display()
            )));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token(&bytes)? != "P6" {
        return Err(bad("not a P6 PPM"));
    }
    let w: usize = token(&bytes)?.parse().map_err(|_| bad("bad width"))?;
    let h: usize = token(&bytes)?.parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = token(&bytes)?.parse().map_err(|_| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad("only 8-bit PPM supported"));
    }
    pos += 1; // single whitespace after maxval
    let pixels = &bytes[pos..];
    if pixels.len() < 3 * h * w {
        return Err(bad("truncated pixel data"));
    }
    let mut data = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data[(c * h + y) * w + x] = pixels[(y * w + x) * 3 + c] as f64 / 255.0;
            }
        }
    }
    Image::new(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_quantized_values() {
        let dir = std::env::temp_dir().join("gandet_ppm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("img.ppm");
        // values already on the 8-bit grid survive exactly
        let img = Image::from_fn(5, 7, |c, y, x| ((c * 89 + y * 13 + x * 3) % 256) as f64 / 255.0);
        write_ppm(&img, &path).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back, img);
        std::fs::remove_dir_all(&dir).ok();
    }
}
