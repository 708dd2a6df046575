//! Binary field formats and portable graymap I/O.
//!
//! * `CF2D` / `RF2D`: 4-byte ASCII magic, `u32` LE width, `u32` LE height,
//!   then row-major `f64` LE samples (interleaved re, im for `CF2D`).
//! * `MEAS`: magic, `u32` LE count `N`, `u32` LE `m`, `u32` LE `m`, then `N`
//!   complete `RF2D` records.
//! * P5 graymaps with 8- or 16-bit samples.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Field2D, RealField};
use crate::scalar::Real;
use crate::simulate::Dataset;

const CF2D: &[u8; 4] = b"CF2D";
const RF2D: &[u8; 4] = b"RF2D";
const MEAS: &[u8; 4] = b"MEAS";

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&b)
        )));
    }
    Ok(())
}

pub fn encode_complex<R: Real>(f: &ComplexField<R>, w: &mut impl Write) -> Result<()> {
    w.write_all(CF2D)?;
    put_u32(w, f.width())?;
    put_u32(w, f.height())?;
    for z in f.as_slice() {
        w.write_all(&z.re.as_f64().to_le_bytes())?;
        w.write_all(&z.im.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn decode_complex<R: Real>(r: &mut impl Read) -> Result<ComplexField<R>> {
    expect_magic(r, CF2D)?;
    let (w, h) = (get_u32(r)?, get_u32(r)?);
    let mut data = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let re = get_f64(r)?;
        let im = get_f64(r)?;
        data.push(Complex::new(R::lit(re), R::lit(im)));
    }
    Field2D::new(w, h, data)
}

pub fn encode_real<R: Real>(f: &RealField<R>, w: &mut impl Write) -> Result<()> {
    w.write_all(RF2D)?;
    put_u32(w, f.width())?;
    put_u32(w, f.height())?;
    for x in f.as_slice() {
        w.write_all(&x.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn decode_real<R: Real>(r: &mut impl Read) -> Result<RealField<R>> {
    expect_magic(r, RF2D)?;
    let (w, h) = (get_u32(r)?, get_u32(r)?);
    let mut data = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        data.push(R::lit(get_f64(r)?));
    }
    Field2D::new(w, h, data)
}

pub fn encode_measurements<R: Real>(stack: &[RealField<R>], w: &mut impl Write) -> Result<()> {
    let m = stack.first().map_or(0, |d| d.width());
    if stack.iter().any(|d| d.shape() != (m, m)) {
        return Err(Error::Dimension("measurement stack must be uniform m x m".into()));
    }
    w.write_all(MEAS)?;
    put_u32(w, stack.len())?;
    put_u32(w, m)?;
    put_u32(w, m)?;
    for d in stack {
        encode_real(d, w)?;
    }
    Ok(())
}

pub fn decode_measurements<R: Real>(r: &mut impl Read) -> Result<Vec<RealField<R>>> {
    expect_magic(r, MEAS)?;
    let (count, w, h) = (get_u32(r)?, get_u32(r)?, get_u32(r)?);
    (0..count)
        .map(|_| {
            let d = decode_real(r)?;
            if d.shape() != (w, h) {
                return Err(Error::Format("measurement record size mismatch".into()));
            }
            Ok(d)
        })
        .collect()
}

pub fn write_complex<R: Real>(path: impl AsRef<Path>, f: &ComplexField<R>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_complex(f, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_complex<R: Real>(path: impl AsRef<Path>) -> Result<ComplexField<R>> {
    decode_complex(&mut BufReader::new(File::open(path)?))
}

pub fn write_real<R: Real>(path: impl AsRef<Path>, f: &RealField<R>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_real(f, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_real<R: Real>(path: impl AsRef<Path>) -> Result<RealField<R>> {
    decode_real(&mut BufReader::new(File::open(path)?))
}

pub fn write_measurements<R: Real>(path: impl AsRef<Path>, stack: &[RealField<R>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_measurements(stack, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_measurements<R: Real>(path: impl AsRef<Path>) -> Result<Vec<RealField<R>>> {
    decode_measurements(&mut BufReader::new(File::open(path)?))
}

/// SHA-256 over the encoded probe followed by the encoded measurement stack.
pub fn dataset_checksum<R: Real>(data: &Dataset<R>) -> String {
    let mut buf = Vec::new();
    encode_complex(&data.probe, &mut buf).expect("in-memory write");
    encode_measurements(&data.measurements, &mut buf).expect("in-memory write");
    let digest = Sha256::digest(&buf);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// 8- or 16-bit graymap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

fn pgm_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PGM header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn pgm_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = pgm_token(bytes, pos)?;
    tok.parse()
        .map_err(|_| Error::Format(format!("bad PGM header value '{tok}'")))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    if pgm_token(bytes, &mut pos)? != "P5" {
        return Err(Error::Format("only binary (P5) graymaps are supported".into()));
    }
    let width = pgm_number(bytes, &mut pos)?;
    let height = pgm_number(bytes, &mut pos)?;
    let maxval = pgm_number(bytes, &mut pos)?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!(
            "invalid PGM geometry {width}x{height} maxval {maxval}"
        )));
    }
    pos += 1;
    let wide = maxval > 255;
    let need = width * height * if wide { 2 } else { 1 };
    let body = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format("truncated PGM raster".into()))?;
    let pixels = if wide {
        body.chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        body.iter().map(|&b| b as u16).collect()
    };
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn encode_pgm(img: &GrayImage, w: &mut impl Write) -> Result<()> {
    write!(w, "P5\n{} {}\n{}\n", img.width, img.height, img.maxval)?;
    if img.maxval > 255 {
        for p in &img.pixels {
            w.write_all(&p.to_be_bytes())?;
        }
    } else {
        let bytes: Vec<u8> = img.pixels.iter().map(|&p| p as u8).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_pgm(&bytes)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_pgm(img, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Center crop of an image to `n × n`, each pixel divided by `maxval`.
fn center_crop_unit(img: &GrayImage, n: usize) -> Result<Vec<f64>> {
    if img.width < n || img.height < n {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("{}x{} image is smaller than {n}x{n}", img.width, img.height),
        )));
    }
    let r0 = (img.height - n) / 2;
    let c0 = (img.width - n) / 2;
    let scale = 1.0 / img.maxval as f64;
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            out.push(img.pixels[(r0 + r) * img.width + c0 + c] as f64 * scale);
        }
    }
    Ok(out)
}

/// Combines two graymaps into an object: magnitude = pixel/maxval, phase =
/// (pixel/maxval)·π/2, both center-cropped to `n × n`.
pub fn object_from_images<R: Real>(
    magnitude: &GrayImage,
    phase: &GrayImage,
    n: usize,
) -> Result<ComplexField<R>> {
    let mag = center_crop_unit(magnitude, n)?;
    let ph = center_crop_unit(phase, n)?;
    Ok(Field2D::from_fn(n, n, |r, c| {
        let i = r * n + c;
        Complex::from_polar(R::lit(mag[i]), R::lit(ph[i] * std::f64::consts::FRAC_PI_2))
    }))
}

/// Reads magnitude and phase graymaps from disk; see [`object_from_images`].
pub fn load_grayscale_object<R: Real>(
    mag_path: impl AsRef<Path>,
    phase_path: impl AsRef<Path>,
    n: usize,
) -> Result<ComplexField<R>> {
    let mag = read_pgm(mag_path)?;
    let ph = read_pgm(phase_path)?;
    object_from_images(&mag, &ph, n)
}

/// 16-bit rendering of `|z|` scaled so that `max|z|` maps to white.
pub fn magnitude_image<R: Real>(z: &ComplexField<R>) -> GrayImage {
    let mag = z.modulus();
    let max = mag.max_value().as_f64();
    let pixels = mag
        .as_slice()
        .iter()
        .map(|&v| {
            if max > 0.0 {
                (v.as_f64() / max * 65535.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            }
        })
        .collect();
    GrayImage {
        width: z.width(),
        height: z.height(),
        maxval: 65535,
        pixels,
    }
}

/// 16-bit rendering of `arg z`, mapping `[−π, π]` onto the full gray range.
pub fn phase_image<R: Real>(z: &ComplexField<R>) -> GrayImage {
    let pi = std::f64::consts::PI;
    let pixels = z
        .as_slice()
        .iter()
        .map(|v| {
            let t = (v.arg().as_f64() + pi) / (2.0 * pi);
            (t * 65535.0).round().clamp(0.0, 65535.0) as u16
        })
        .collect();
    GrayImage {
        width: z.width(),
        height: z.height(),
        maxval: 65535,
        pixels,
    }
}

/// Writes `magnitude.pgm` and `phase.pgm` into `dir`.
pub fn export_images<R: Real>(z: &ComplexField<R>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_pgm(dir.join("magnitude.pgm"), &magnitude_image(z))?;
    write_pgm(dir.join("phase.pgm"), &phase_image(z))?;
    Ok(())
}
