//! Image I/O: 8-bit sRGB PNG, little-endian PFM float maps (read/write) and
//! Radiance HDR (read-only), plus the sRGB transfer functions.

use crate::img::ImageRgb;
use crate::math::Rgb;
use crate::num::Real;
use std::io::{Read, Write};
use std::path::Path;

pub fn srgb_encode<T: Real>(v: T) -> T {
    let v = v.clamp(T::zero(), T::one());
    if v <= T::of(0.0031308) {
        v * T::of(12.92)
    } else {
        T::of(1.055) * v.powf(T::one() / T::of(2.4)) - T::of(0.055)
    }
}

pub fn srgb_decode<T: Real>(v: T) -> T {
    if v <= T::of(0.04045) {
        v / T::of(12.92)
    } else {
        ((v + T::of(0.055)) / T::of(1.055)).powf(T::of(2.4))
    }
}

/// Writes a linear-space image as an 8-bit sRGB PNG.
pub fn save_png_srgb<T: Real>(img: &ImageRgb<T>, path: &Path) -> crate::Result<()> {
    let mut buf = image::RgbImage::new(img.w as u32, img.h as u32);
    for y in 0..img.h {
        for x in 0..img.w {
            let c = img.px(x, y);
            let q = |v: T| (srgb_encode(v).as_f64() * 255.0).round().clamp(0.0, 255.0) as u8;
            buf.put_pixel(x as u32, y as u32, image::Rgb([q(c.x), q(c.y), q(c.z)]));
        }
    }
    buf.save(path).map_err(|e| crate::Error::Image(format!("{}: {e}", path.display())))
}

/// Writes raw [0,1] values as an 8-bit PNG without a transfer function
/// (used for normal maps encoded as (n+1)/2).
pub fn save_png_raw<T: Real>(img: &ImageRgb<T>, path: &Path) -> crate::Result<()> {
    let mut buf = image::RgbImage::new(img.w as u32, img.h as u32);
    for y in 0..img.h {
        for x in 0..img.w {
            let c = img.px(x, y);
            let q = |v: T| (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8;
            buf.put_pixel(x as u32, y as u32, image::Rgb([q(c.x), q(c.y), q(c.z)]));
        }
    }
    buf.save(path).map_err(|e| crate::Error::Image(format!("{}: {e}", path.display())))
}

/// Loads an LDR PNG and linearizes it (sRGB -> linear). Alpha, when present,
/// is composited over the given background color.
pub fn load_png_linear<T: Real>(path: &Path, bg: Rgb<T>) -> crate::Result<ImageRgb<T>> {
    let dynimg =
        image::open(path).map_err(|e| crate::Error::Image(format!("{}: {e}", path.display())))?;
    let rgba = dynimg.to_rgba8();
    let (w, h) = (rgba.width() as usize, rgba.height() as usize);
    let mut out = ImageRgb::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let p = rgba.get_pixel(x as u32, y as u32);
            let a = T::of(p[3] as f64 / 255.0);
            let lin = |v: u8| srgb_decode(T::of(v as f64 / 255.0));
            let c = Rgb::new(lin(p[0]), lin(p[1]), lin(p[2]));
            out.set_px(x, y, c * a + bg * (T::one() - a));
        }
    }
    Ok(out)
}

/// Loads a PNG in its stored (sRGB-encoded) [0,1] values without
/// linearization; alpha composited over white. Metrics compare in this space.
pub fn load_png_stored<T: Real>(path: &Path) -> crate::Result<ImageRgb<T>> {
    let dynimg =
        image::open(path).map_err(|e| crate::Error::Image(format!("{}: {e}", path.display())))?;
    let rgba = dynimg.to_rgba8();
    let (w, h) = (rgba.width() as usize, rgba.height() as usize);
    let mut out = ImageRgb::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let p = rgba.get_pixel(x as u32, y as u32);
            let a = T::of(p[3] as f64 / 255.0);
            let v = |v: u8| T::of(v as f64 / 255.0);
            let c = Rgb::new(v(p[0]), v(p[1]), v(p[2]));
            out.set_px(x, y, c * a + Rgb::splat(T::one()) * (T::one() - a));
        }
    }
    Ok(out)
}

/// Writes a little-endian binary PFM ("PF", bottom-to-top rows, scale -1).
pub fn save_pfm<T: Real>(img: &ImageRgb<T>, path: &Path) -> crate::Result<()> {
    let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let hdr = format!("PF\n{} {}\n-1.0\n", img.w, img.h);
    w.write_all(hdr.as_bytes()).map_err(|e| crate::Error::io(path, e))?;
    for y in (0..img.h).rev() {
        for x in 0..img.w {
            let c = img.px(x, y);
            for v in [c.x, c.y, c.z] {
                w.write_all(&(v.as_f64() as f32).to_le_bytes())
                    .map_err(|e| crate::Error::io(path, e))?;
            }
        }
    }
    Ok(())
}

pub fn load_pfm<T: Real>(path: &Path) -> crate::Result<ImageRgb<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| crate::Error::io(path, e))?;
    let bad = |m: &str| crate::Error::Image(format!("{}: {m}", path.display()));
    // header: magic, dims, scale, separated by whitespace; then raw floats
    let mut pos = 0usize;
    let mut token = || -> crate::Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(crate::Error::Image("truncated PFM header".into()));
        }
        let t = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1; // single whitespace after each token
        Ok(t)
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(bad("not a PFM file")),
    };
    let w: usize = token()?.parse().map_err(|_| bad("bad width"))?;
    let h: usize = token()?.parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = token()?.parse().map_err(|_| bad("bad scale"))?;
    let little_endian = scale < 0.0;
    let data = &bytes[pos..];
    let need = w * h * channels * 4;
    if data.len() < need {
        return Err(bad("truncated PFM payload"));
    }
    let mut out = ImageRgb::zeros(w, h);
    let mut idx = 0;
    for y in (0..h).rev() {
        for x in 0..w {
            let mut c = [T::zero(); 3];
            for item in c.iter_mut().take(channels) {
                let raw: [u8; 4] = data[idx..idx + 4].try_into().unwrap();
                let v = if little_endian {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                };
                *item = T::of(v as f64);
                idx += 4;
            }
            if channels == 1 {
                c[1] = c[0];
                c[2] = c[0];
            }
            out.set_px(x, y, Rgb::new(c[0], c[1], c[2]));
        }
    }
    Ok(out)
}

/// Reads a Radiance HDR environment map (read-only support).
pub fn load_hdr<T: Real>(path: &Path) -> crate::Result<ImageRgb<T>> {
    let dynimg =
        image::open(path).map_err(|e| crate::Error::Image(format!("{}: {e}", path.display())))?;
    let rgb = dynimg.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut out = ImageRgb::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let p = rgb.get_pixel(x as u32, y as u32);
            out.set_px(x, y, Rgb::of(p[0] as f64, p[1] as f64, p[2] as f64));
        }
    }
    Ok(out)
}

/// Loads an environment map by extension: `.pfm` or `.hdr`.
pub fn load_envmap<T: Real>(path: &Path) -> crate::Result<ImageRgb<T>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => load_pfm(path),
        Some("hdr") => load_hdr(path),
        _ => Err(crate::Error::Image(format!(
            "{}: unsupported envmap format (use .pfm or .hdr)",
            path.display()
        ))),
    }
}
