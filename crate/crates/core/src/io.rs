//! File formats: grayscale images, PBM sampling masks with a text sidecar,
//! and the binary k-space measurement file.
//!
//! Measurement file layout (`GEOCS-KSP`): a 64-byte ASCII header
//! `GEOCS-KSP n=<n> k=<k> sigma=<sigma> seed=<seed>` padded with spaces and
//! terminated by `\n`, followed by `k` little-endian `f32` pairs `(re, im)`
//! in row-major order of the sampled frequencies.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, GrayImage, ImageBuffer, Luma};
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{GeocsError, Result};
use crate::sampling::{Measurement, SamplingMask};
use crate::spectral::Image;

pub const KSP_MAGIC: &str = "GEOCS-KSP";
pub const KSP_HEADER_LEN: usize = 64;

fn image_error(path: &Path, e: image::ImageError) -> GeocsError {
    match e {
        image::ImageError::IoError(io) => GeocsError::Io(io),
        other => GeocsError::Format(format!("{}: {other}", path.display())),
    }
}

/// Reads a grayscale PNG/PGM (8 or 16 bit) and scales it to `[0, 1]`.
/// Color inputs are converted to luma.
pub fn read_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let gray = img.to_luma16();
    let (w, h) = gray.dimensions();
    if w != h {
        return Err(GeocsError::Format(format!(
            "{}: image must be square, got {w}x{h}",
            path.display()
        )));
    }
    let n = w as usize;
    let data = Array2::from_shape_fn((n, n), |(r, c)| {
        gray.get_pixel(c as u32, r as u32)[0] as f64 / u16::MAX as f64
    });
    Image::new(data)
}

/// Output sample depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Writes an image after clamping to `[0, 1]` and quantizing. The format
/// follows the extension (`.png` or `.pgm`).
pub fn write_image(path: &Path, img: &Image, depth: BitDepth) -> Result<()> {
    let n = img.n() as u32;
    let q = |r: u32, c: u32, max: f64| {
        (img.data()[[r as usize, c as usize]].clamp(0.0, 1.0) * max).round()
    };
    let dynamic = match depth {
        BitDepth::Eight => DynamicImage::ImageLuma8(ImageBuffer::from_fn(n, n, |c, r| {
            Luma([q(r, c, 255.0) as u8])
        })),
        BitDepth::Sixteen => DynamicImage::ImageLuma16(ImageBuffer::from_fn(n, n, |c, r| {
            Luma([q(r, c, 65535.0) as u16])
        })),
    };
    dynamic.save(path).map_err(|e| image_error(path, e))
}

/// Rescales `values` linearly onto `[0, 1]` for viewing (constant input maps to 0).
pub fn normalize_for_display(values: &Array2<f64>) -> Result<Image> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    Image::new(values.mapv(|v| if span > 0.0 { (v - lo) / span } else { 0.0 }))
}

/// Describes how a mask file was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskInfo {
    pub n: usize,
    pub lines: usize,
    pub rate: f64,
    pub seed: u64,
}

/// Path of the text sidecar for a mask file.
pub fn mask_sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".txt");
    PathBuf::from(name)
}

/// Writes the mask (sampled frequencies are white) and its sidecar. A `.png`
/// extension gives an 8-bit PNG with values 0/255, anything else a binary PBM.
pub fn write_mask(path: &Path, mask: &SamplingMask, info: &MaskInfo) -> Result<()> {
    let n = mask.n() as u32;
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        let img: GrayImage = ImageBuffer::from_fn(n, n, |c, r| {
            Luma([if mask.keep()[[r as usize, c as usize]] { 255 } else { 0 }])
        });
        img.save(path).map_err(|e| image_error(path, e))?;
        return write_sidecar(path, info);
    }
    let bits: GrayImage = ImageBuffer::from_fn(n, n, |c, r| {
        Luma([u8::from(mask.keep()[[r as usize, c as usize]])])
    });
    let mut buffer = Vec::new();
    let encoder = PnmEncoder::new(&mut buffer).with_subtype(PnmSubtype::Bitmap(SampleEncoding::Binary));
    DynamicImage::ImageLuma8(bits)
        .write_with_encoder(encoder)
        .map_err(|e| image_error(path, e))?;
    fs::write(path, buffer)?;
    write_sidecar(path, info)
}

fn write_sidecar(path: &Path, info: &MaskInfo) -> Result<()> {
    let sidecar = format!(
        "n={}\nlines={}\nrate={}\nseed={}\n",
        info.n, info.lines, info.rate, info.seed
    );
    fs::write(mask_sidecar(path), sidecar)?;
    Ok(())
}

/// Reads a mask image; any nonzero (white) pixel counts as sampled.
pub fn read_mask(path: &Path) -> Result<SamplingMask> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    if w != h {
        return Err(GeocsError::Format(format!(
            "{}: mask must be square, got {w}x{h}",
            path.display()
        )));
    }
    let n = w as usize;
    SamplingMask::new(Array2::from_shape_fn((n, n), |(r, c)| {
        img.get_pixel(c as u32, r as u32)[0] > 0
    }))
}

/// Parses a mask sidecar.
pub fn read_mask_info(path: &Path) -> Result<MaskInfo> {
    let text = fs::read_to_string(mask_sidecar(path))?;
    let map = parse_key_values(&text)?;
    let get = |k: &str| {
        map.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| GeocsError::Format(format!("mask sidecar lacks `{k}`")))
    };
    let num_err = |k: &str| GeocsError::Format(format!("mask sidecar has a malformed `{k}`"));
    Ok(MaskInfo {
        n: get("n")?.parse().map_err(|_| num_err("n"))?,
        lines: get("lines")?.parse().map_err(|_| num_err("lines"))?,
        rate: get("rate")?.parse().map_err(|_| num_err("rate"))?,
        seed: get("seed")?.parse().map_err(|_| num_err("seed"))?,
    })
}

/// Splits `key = value` lines; `#` and `;` start comments, `[section]`
/// lines are ignored.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            GeocsError::Format(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        out.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parsed `GEOCS-KSP` header.
#[derive(Clone, Debug, PartialEq)]
pub struct KspHeader {
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl KspHeader {
    pub fn encode(&self) -> Result<[u8; KSP_HEADER_LEN]> {
        let text = format!(
            "{KSP_MAGIC} n={} k={} sigma={} seed={}",
            self.n, self.k, self.sigma, self.seed
        );
        if text.len() > KSP_HEADER_LEN - 1 {
            return Err(GeocsError::Format(format!(
                "measurement header exceeds {KSP_HEADER_LEN} bytes: `{text}`"
            )));
        }
        let mut out = [b' '; KSP_HEADER_LEN];
        out[..text.len()].copy_from_slice(text.as_bytes());
        out[KSP_HEADER_LEN - 1] = b'\n';
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |why: &str| GeocsError::Format(format!("corrupt measurement header: {why}"));
        if bytes.len() != KSP_HEADER_LEN || bytes[KSP_HEADER_LEN - 1] != b'\n' {
            return Err(bad("wrong length or terminator"));
        }
        let text = std::str::from_utf8(bytes).map_err(|_| bad("not ASCII"))?;
        let mut fields = text.split_whitespace();
        if fields.next() != Some(KSP_MAGIC) {
            return Err(bad("missing magic"));
        }
        let mut header = KspHeader {
            n: 0,
            k: 0,
            sigma: f64::NAN,
            seed: 0,
        };
        let mut seen = [false; 4];
        for field in fields {
            let (key, value) = field.split_once('=').ok_or_else(|| bad(field))?;
            match key {
                "n" => {
                    header.n = value.parse().map_err(|_| bad("n"))?;
                    seen[0] = true;
                }
                "k" => {
                    header.k = value.parse().map_err(|_| bad("k"))?;
                    seen[1] = true;
                }
                "sigma" => {
                    header.sigma = value.parse().map_err(|_| bad("sigma"))?;
                    seen[2] = true;
                }
                "seed" => {
                    header.seed = value.parse().map_err(|_| bad("seed"))?;
                    seen[3] = true;
                }
                _ => return Err(bad(key)),
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(bad("missing field"));
        }
        if !(header.sigma >= 0.0) {
            return Err(bad("negative sigma"));
        }
        Ok(header)
    }
}

pub fn encode_measurement(m: &Measurement) -> Result<Vec<u8>> {
    let header = KspHeader {
        n: m.n(),
        k: m.len(),
        sigma: m.sigma,
        seed: m.seed,
    };
    let mut out = Vec::with_capacity(KSP_HEADER_LEN + 8 * m.len());
    out.extend_from_slice(&header.encode()?);
    for z in &m.values {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn write_measurement(path: &Path, m: &Measurement) -> Result<()> {
    let bytes = encode_measurement(m)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Decodes a measurement file against the mask it was sampled with.
pub fn decode_measurement(bytes: &[u8], mask: &SamplingMask) -> Result<Measurement> {
    if bytes.len() < KSP_HEADER_LEN {
        return Err(GeocsError::Format("measurement file shorter than its header".into()));
    }
    let header = KspHeader::decode(&bytes[..KSP_HEADER_LEN])?;
    if header.n != mask.n() || header.k != mask.count() {
        return Err(GeocsError::Format(format!(
            "measurement (n={}, k={}) does not match mask (n={}, k={})",
            header.n,
            header.k,
            mask.n(),
            mask.count()
        )));
    }
    let body = &bytes[KSP_HEADER_LEN..];
    if body.len() != 8 * header.k {
        return Err(GeocsError::Format(format!(
            "expected {} payload bytes, found {}",
            8 * header.k,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Measurement::new(values, mask.clone(), header.sigma, header.seed)
}

pub fn read_measurement(path: &Path, mask: &SamplingMask) -> Result<Measurement> {
    let mut bytes = Vec::new();
    BufReader::new(fs::File::open(path)?).read_to_end(&mut bytes)?;
    decode_measurement(&bytes, mask)
}

/// Reads just the header of a measurement file.
pub fn read_measurement_header(path: &Path) -> Result<KspHeader> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut buf = [0u8; KSP_HEADER_LEN];
    reader
        .read_exact(&mut buf)
        .map_err(|_| GeocsError::Format("measurement file shorter than its header".into()))?;
    let _ = reader.fill_buf()?;
    KspHeader::decode(&buf)
}
