use std::io::Write;
use std::path::Path;

use super::ImageBuffer;
use crate::error::{Error, Result};

const PNG_MAGIC: &[u8] = b"\x89PNG";

fn image_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

/// Magic expected from the file extension, if it names a known format.
fn expected_magic(path: &Path) -> Option<&'static str> {
    match extension(path).as_str() {
        "png" => Some("\\x89PNG"),
        "pgm" => Some("P5"),
        "ppm" => Some("P6"),
        "pnm" => Some("P5 or P6"),
        _ => None,
    }
}

/// Reads an 8-bit PNG or binary PGM/PPM; values are scaled to `[0, 1]`.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(PNG_MAGIC) {
        return decode_png(path, &bytes);
    }
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        return decode_pnm(path, &bytes);
    }
    let found: String = bytes.iter().take(4).map(|b| format!("{b:02x}")).collect();
    let expected = expected_magic(path).unwrap_or("\\x89PNG, P5 or P6");
    Err(image_err(path, format!("bad magic bytes {found}, expected {expected}")))
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<ImageBuffer> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img.color(),
        image::ColorType::L8 | image::ColorType::La8 | image::ColorType::L16 | image::ColorType::La16
    );
    if gray {
        let raw = img.to_luma8().into_raw();
        ImageBuffer::new(w, h, 1, raw.iter().map(|&v| v as f64 / 255.0).collect())
    } else {
        let raw = img.to_rgb8().into_raw();
        Ok(interleaved_to_planar(w, h, &raw))
    }
}

fn interleaved_to_planar(w: usize, h: usize, raw: &[u8]) -> ImageBuffer {
    let n = w * h;
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        for c in 0..3 {
            data[c * n + i] = raw[3 * i + c] as f64 / 255.0;
        }
    }
    ImageBuffer {
        width: w,
        height: h,
        channels: 3,
        data,
    }
}

fn planar_to_interleaved(img: &ImageBuffer) -> Vec<u8> {
    let n = img.plane_len();
    let mut out = vec![0u8; n * img.channels];
    for i in 0..n {
        for c in 0..img.channels {
            out[img.channels * i + c] = to_u8(img.data[c * n + i]);
        }
    }
    out
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Parses the header of a binary PNM file: magic, width, height, maxval,
/// then a single whitespace byte before the raster.
fn decode_pnm(path: &Path, bytes: &[u8]) -> Result<ImageBuffer> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(image_err(path, "truncated or malformed header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| image_err(path, "header value out of range"))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(image_err(path, format!("unsupported maxval {maxval}, only 8-bit (255) is read")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(image_err(path, "truncated or malformed header"));
    }
    pos += 1;
    let need = w * h * channels;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(image_err(
            path,
            format!("truncated raster: {} of {need} bytes", raster.len()),
        ));
    }
    if channels == 1 {
        ImageBuffer::new(w, h, 1, raster[..need].iter().map(|&v| v as f64 / 255.0).collect())
    } else {
        Ok(interleaved_to_planar(w, h, &raster[..need]))
    }
}

/// Writes 8-bit data; the format follows the extension (`png`, `pgm`, `ppm`, `pnm`).
pub fn save_image(img: &ImageBuffer, path: &Path) -> Result<()> {
    let raw = planar_to_interleaved(img);
    match extension(path).as_str() {
        "png" => {
            let color = if img.channels == 1 {
                image::ExtendedColorType::L8
            } else {
                image::ExtendedColorType::Rgb8
            };
            image::save_buffer_with_format(
                path,
                &raw,
                img.width as u32,
                img.height as u32,
                color,
                image::ImageFormat::Png,
            )
            .map_err(|e| image_err(path, e.to_string()))
        }
        ext @ ("pgm" | "ppm" | "pnm") => {
            let want = if img.channels == 1 { "pgm" } else { "ppm" };
            if ext != "pnm" && ext != want {
                return Err(image_err(
                    path,
                    format!("{}-channel image needs a .{want} file", img.channels),
                ));
            }
            let magic = if img.channels == 1 { "P5" } else { "P6" };
            let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            write!(f, "{magic}\n{} {}\n255\n", img.width, img.height)
                .and_then(|_| f.write_all(&raw))
                .map_err(|e| Error::io(path, e))
        }
        other => Err(image_err(
            path,
            format!("unsupported extension {other:?}; use png, pgm or ppm"),
        )),
    }
}
