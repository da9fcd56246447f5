//! Image and raster files.
//!
//! Gray images are read from binary or plain PGM and from PNG (gray, gray with
//! alpha, RGB, RGBA; 8 or 16 bit). Color is reduced to luma and a zero alpha
//! marks background. Images are written as 8-bit PGM or PNG depending on the
//! extension, with values rounded half away from zero and clamped to
//! `[0, 255]`.
//!
//! Orientation, frequency and curvature rasters use a plain text format: a
//! header line `OF <width> <height>` (or `RF`, `CURV`) followed by one line per
//! row of space-separated values with six decimals, `*` marking absent values.
//! Orientations are in radians.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::frequency::RidgeFrequencyMap;
use crate::image::GrayImage;
use crate::orientation::OrientationField;
use crate::region::CurvatureMap;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Rounds half away from zero and clamps to `[0, 255]`.
pub fn quantize(value: f64) -> u8 {
    if value.is_nan() {
        return 0;
    }
    value.round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    /// Format implied by a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "pgm" => Ok(Self::Pgm),
            "png" => Ok(Self::Png),
            _ => Err(Error::UnsupportedFormat(format!("`{}`", path.display()))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Pgm => "pgm",
            Self::Png => "png",
        }
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_image(&bytes).map_err(|e| e.in_file(path))
}

/// Decodes PGM or PNG data, recognized by its signature.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        decode_pgm(bytes)
    } else {
        Err(Error::UnsupportedFormat("neither PGM nor PNG data".into()))
    }
}

fn pgm_error(message: impl Into<String>) -> Error {
    Error::Parse {
        what: "PGM header",
        line: 1,
        message: message.into(),
    }
}

/// Reads whitespace-separated header tokens, skipping `#` comments.
struct PgmTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmTokens<'a> {
    fn next_token(&mut self) -> Result<&'a [u8]> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                        self.pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(pgm_error("unexpected end of data")),
            }
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn next_number(&mut self) -> Result<usize> {
        let tok = self.next_token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| pgm_error(format!("expected a number, found `{}`", String::from_utf8_lossy(tok))))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let binary = bytes.starts_with(b"P5");
    let mut tokens = PgmTokens { bytes, pos: 2 };
    let width = tokens.next_number()?;
    let height = tokens.next_number()?;
    let maxval = tokens.next_number()?;
    if maxval == 0 || maxval > 65535 {
        return Err(pgm_error(format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| pgm_error("image dimensions overflow"))?;
    let scale = 255.0 / maxval as f64;
    let raw: Vec<usize> = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = tokens.pos + 1;
        let sample = if maxval < 256 { 1 } else { 2 };
        let data = bytes
            .get(start..start + n * sample)
            .ok_or_else(|| pgm_error(format!("raster truncated: expected {} bytes", n * sample)))?;
        if sample == 1 {
            data.iter().map(|&b| usize::from(b)).collect()
        } else {
            data.chunks_exact(2)
                .map(|c| usize::from(u16::from_be_bytes([c[0], c[1]])))
                .collect()
        }
    } else {
        (0..n).map(|_| tokens.next_number()).collect::<Result<_>>()?
    };
    if let Some(v) = raw.iter().find(|&&v| v > maxval) {
        return Err(pgm_error(format!("sample {v} exceeds maxval {maxval}")));
    }
    GrayImage::from_pixels(width, height, raw.iter().map(|&v| v as f64 * scale).collect())
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::UnsupportedFormat("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::UnsupportedFormat("unexpanded palette PNG".into())),
    };
    let mut pixels = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        for px in row[..w * channels].chunks_exact(channels) {
            let gray = if channels >= 3 {
                0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2])
            } else {
                f64::from(px[0])
            };
            let alpha = match channels {
                2 => px[1],
                4 => px[3],
                _ => 255,
            };
            pixels.push(gray);
            mask.push(alpha > 0);
        }
    }
    GrayImage::new(w, h, pixels, mask)
}

/// Writes an image as PGM or PNG, chosen by the extension.
pub fn write_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_image(img, ImageFormat::from_path(path)?)?;
    std::fs::write(path, bytes).map_err(|e| Error::from(e).in_file(path))
}

pub fn encode_image(img: &GrayImage, format: ImageFormat) -> Result<Vec<u8>> {
    let data: Vec<u8> = img.pixels().iter().map(|&v| quantize(v)).collect();
    match format {
        ImageFormat::Pgm => {
            let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
            out.extend_from_slice(&data);
            Ok(out)
        }
        ImageFormat::Png => encode_png(img.width(), img.height(), png::ColorType::Grayscale, &data),
    }
}

pub(crate) fn encode_png(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(data)?;
        writer.finish()?;
    }
    Ok(out)
}

/// Reads a foreground mask: any nonzero gray value is foreground.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Vec<bool>> {
    let img = read_image(path)?;
    Ok(img
        .pixels()
        .iter()
        .zip(img.mask())
        .map(|(&v, &m)| m && v > 0.0)
        .collect())
}

/// Writes a mask as a PGM or PNG with foreground 255 and background 0.
pub fn write_mask(width: usize, height: usize, mask: &[bool], path: impl AsRef<Path>) -> Result<()> {
    let pixels = mask.iter().map(|&m| if m { 255.0 } else { 0.0 }).collect();
    write_image(&GrayImage::from_pixels(width, height, pixels)?, path)
}

/// Kinds of text raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterKind {
    Orientation,
    Frequency,
    Curvature,
}

impl RasterKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Orientation => "OF",
            Self::Frequency => "RF",
            Self::Curvature => "CURV",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "OF" => Some(Self::Orientation),
            "RF" => Some(Self::Frequency),
            "CURV" => Some(Self::Curvature),
            _ => None,
        }
    }
}

/// Formats a raster of optional values.
pub fn format_raster(kind: RasterKind, width: usize, height: usize, values: &[Option<f64>]) -> String {
    let mut out = String::with_capacity(values.len() * 9 + 32);
    writeln!(out, "{} {width} {height}", kind.tag()).unwrap();
    for row in values.chunks(width).take(height) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match v {
                Some(v) => write!(out, "{v:.6}").unwrap(),
                None => out.push('*'),
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a text raster. `accept` lists the header tags allowed.
pub fn parse_raster(text: &str, accept: &[RasterKind]) -> Result<(RasterKind, usize, usize, Vec<Option<f64>>)> {
    let err = |line: usize, message: String| Error::Parse {
        what: "raster",
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [tag, w, h] = fields[..] else {
        return Err(err(1, format!("expected `<TAG> <width> <height>`, found `{header}`")));
    };
    let kind = RasterKind::from_tag(tag)
        .filter(|k| accept.contains(k))
        .ok_or_else(|| err(1, format!("unexpected raster tag `{tag}`")))?;
    let parse_dim = |s: &str| s.parse::<usize>().map_err(|_| err(1, format!("bad dimension `{s}`")));
    let (width, height) = (parse_dim(w)?, parse_dim(h)?);
    let mut values = Vec::with_capacity(width * height);
    let mut rows = 0;
    for (idx, line) in lines {
        let row: Vec<Option<f64>> = line
            .split_whitespace()
            .map(|tok| match tok {
                "*" => Ok(None),
                t => t
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| err(idx + 1, format!("bad value `{t}`"))),
            })
            .collect::<Result<_>>()?;
        if row.len() != width {
            return Err(err(idx + 1, format!("expected {width} values, found {}", row.len())));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != height {
        return Err(err(height + 1, format!("expected {height} rows, found {rows}")));
    }
    Ok((kind, width, height, values))
}

fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    BufReader::new(File::open(path).map_err(|e| Error::from(e).in_file(path))?)
        .read_to_string(&mut s)
        .map_err(|e| Error::from(e).in_file(path))?;
    Ok(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::from(e).in_file(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::from(e).in_file(path))
}

pub fn write_orientation(of: &OrientationField, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_raster(RasterKind::Orientation, of.width(), of.height(), of.angles()))
}

pub fn read_orientation(path: impl AsRef<Path>) -> Result<OrientationField> {
    let path = path.as_ref();
    let parsed = parse_raster(&read_text(path)?, &[RasterKind::Orientation]);
    let (_, w, h, values) = parsed.map_err(|e| e.in_file(path))?;
    OrientationField::new(w, h, values)
}

pub fn write_frequency(rf: &RidgeFrequencyMap, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_raster(RasterKind::Frequency, rf.width(), rf.height(), rf.values()))
}

/// Reads an RF raster. Values within the six-decimal rounding of the accepted
/// range are clamped into it.
pub fn read_frequency(path: impl AsRef<Path>) -> Result<RidgeFrequencyMap> {
    use crate::frequency::{MAX_FREQUENCY, MIN_FREQUENCY};
    let path = path.as_ref();
    let parsed = parse_raster(&read_text(path)?, &[RasterKind::Frequency]);
    let (_, w, h, values) = parsed.map_err(|e| e.in_file(path))?;
    let values = values
        .into_iter()
        .map(|v| {
            v.map(|f| {
                if (f - MIN_FREQUENCY).abs() <= 5e-7 || (f - MAX_FREQUENCY).abs() <= 5e-7 {
                    f.clamp(MIN_FREQUENCY, MAX_FREQUENCY)
                } else {
                    f
                }
            })
        })
        .collect();
    RidgeFrequencyMap::new(w, h, values).map_err(|e| e.in_file(path))
}

pub fn write_curvature(c: &CurvatureMap, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_raster(RasterKind::Curvature, c.width(), c.height(), c.values()))
}

/// Reads a `CURV` raster; an `OF` header is accepted as well.
pub fn read_curvature(path: impl AsRef<Path>) -> Result<CurvatureMap> {
    let path = path.as_ref();
    let parsed = parse_raster(&read_text(path)?, &[RasterKind::Curvature, RasterKind::Orientation]);
    let (_, w, h, values) = parsed.map_err(|e| e.in_file(path))?;
    CurvatureMap::new(w, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_image() -> GrayImage {
        GrayImage::from_fn(7, 5, |x, y| (x * 37 + y * 11) as f64 % 256.0).unwrap()
    }

    #[test]
    fn quantization_rounds_half_away_from_zero() {
        assert_eq!(quantize(0.5), 1);
        assert_eq!(quantize(1.49), 1);
        assert_eq!(quantize(254.5), 255);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(300.0), 255);
        assert_eq!(quantize(f64::NAN), 0);
    }

    #[test]
    fn pgm_round_trip() {
        let img = sample_image();
        let bytes = encode_image(&img, ImageFormat::Pgm).unwrap();
        assert!(bytes.starts_with(b"P5\n7 5\n255\n"));
        assert_eq!(decode_image(&bytes).unwrap(), img);
    }

    #[test]
    fn png_round_trip() {
        let img = sample_image();
        let bytes = encode_image(&img, ImageFormat::Png).unwrap();
        assert_eq!(decode_image(&bytes).unwrap(), img);
    }

    #[test]
    fn plain_pgm_with_comments_and_wide_samples() {
        let img = decode_image(b"P2\n# made by hand\n3 1\n# max\n1000\n0 500 1000\n").unwrap();
        assert_eq!(img.pixels(), &[0.0, 127.5, 255.0]);
        let mut p5 = b"P5 2 1 65535\n".to_vec();
        p5.extend_from_slice(&[0xff, 0xff, 0x00, 0x00]);
        assert_eq!(decode_image(&p5).unwrap().pixels(), &[255.0, 0.0]);
    }

    #[test]
    fn corrupt_data_is_rejected() {
        assert!(decode_image(b"hello").is_err());
        assert!(decode_image(b"P5\n4 4\n255\n\x00\x01").is_err());
        assert!(decode_image(b"P2\n2 1\n10\n3 11\n").is_err());
        let mut png = encode_image(&sample_image(), ImageFormat::Png).unwrap();
        png.truncate(30);
        assert!(decode_image(&png).is_err());
    }

    #[test]
    fn png_alpha_marks_background() {
        let data = [10, 255, 20, 0, 30, 255];
        let bytes = encode_png(3, 1, png::ColorType::GrayscaleAlpha, &data).unwrap();
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.pixels(), &[10.0, 20.0, 30.0]);
        assert_eq!(img.mask(), &[true, false, true]);
    }

    #[test]
    fn raster_round_trip() {
        let values = vec![Some(0.1), None, Some(0.333333), Some(0.04), Some(0.125), None];
        let text = format_raster(RasterKind::Frequency, 3, 2, &values);
        assert_eq!(text, "RF 3 2\n0.100000 * 0.333333\n0.040000 0.125000 *\n");
        let (kind, w, h, parsed) = parse_raster(&text, &[RasterKind::Frequency]).unwrap();
        assert_eq!((kind, w, h), (RasterKind::Frequency, 3, 2));
        assert_eq!(parsed, values);
        assert!(parse_raster(&text, &[RasterKind::Orientation]).is_err());
    }

    #[test]
    fn malformed_rasters_are_rejected() {
        let bad = ["", "OF 2\n", "OF 2 1\n0.1\n", "OF 2 2\n0.1 0.2\n", "OF 1 1\nabc\n", "XX 1 1\n0\n"];
        for text in bad {
            assert!(parse_raster(text, &[RasterKind::Orientation]).is_err(), "{text:?}");
        }
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let of = OrientationField::from_fn(4, 3, |x, y| (x != y).then_some(0.25 * x as f64)).unwrap();
        let p = dir.path().join("of.txt");
        write_orientation(&of, &p).unwrap();
        let back = read_orientation(&p).unwrap();
        assert_eq!(back.angles(), of.angles());
        let rf = RidgeFrequencyMap::new(2, 1, vec![Some(1.0 / 3.0), Some(1.0 / 25.0)]).unwrap();
        let p = dir.path().join("rf.txt");
        write_frequency(&rf, &p).unwrap();
        assert_eq!(read_frequency(&p).unwrap().valid_count(), 2);
        let img = sample_image();
        let p = dir.path().join("img.png");
        write_image(&img, &p).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
        assert!(write_image(&img, dir.path().join("img.bmp")).is_err());
        let mask = vec![true, false, false, true];
        let p = dir.path().join("mask.pgm");
        write_mask(2, 2, &mask, &p).unwrap();
        assert_eq!(read_mask(&p).unwrap(), mask);
    }
}
