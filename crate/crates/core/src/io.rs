//! Grayscale image files (PGM, PNG) and the reference-point binary format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Provenance, ReferencePoint};

/// Row-major grayscale image with values in `[0, 1]`; `height` rows of
/// `width` pixels, matching a `d1 x d2 = height x width` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Image(format!("{} values for a {height}x{width} image", data.len())));
        }
        Ok(GrayImage { height, width, data })
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }
}

fn img_err(msg: impl Into<String>) -> Error {
    Error::Image(msg.into())
}

/// Reads PGM header tokens, skipping `#` comments.
fn pgm_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut toks = Vec::new();
    let mut i = 0;
    while toks.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
            i += 1;
        }
        if start == i {
            return Err(img_err("truncated PGM header"));
        }
        toks.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    Ok((toks, i))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let (head, end) = pgm_tokens(bytes, 4)?;
    let num = |s: &str| s.parse::<usize>().map_err(|_| img_err(format!("bad PGM header field `{s}`")));
    let (width, height, maxval) = (num(&head[1])?, num(&head[2])?, num(&head[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(img_err(format!("PGM maxval {maxval} out of range")));
    }
    let n = width * height;
    let scale = maxval as f64;
    let data: Vec<f64> = match head[0].as_str() {
        "P2" => {
            let text = std::str::from_utf8(&bytes[end..]).map_err(|_| img_err("P2 body is not text"))?;
            let vals: Vec<f64> = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .flat_map(|l| l.split_whitespace())
                .map(|t| t.parse::<usize>().map(|v| v as f64 / scale).map_err(|_| img_err(format!("bad P2 sample `{t}`"))))
                .collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(img_err(format!("P2 body has {} samples, expected {n}", vals.len())));
            }
            vals
        }
        "P5" => {
            let body = &bytes[(end + 1).min(bytes.len())..];
            let wide = maxval > 255;
            let need = if wide { 2 * n } else { n };
            if body.len() < need {
                return Err(img_err(format!("P5 body has {} bytes, expected {need}", body.len())));
            }
            if wide {
                body[..need].chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale).collect()
            } else {
                body[..n].iter().map(|v| *v as f64 / scale).collect()
            }
        }
        m => return Err(img_err(format!("unsupported PGM magic `{m}`"))),
    };
    GrayImage::new(height, width, data)
}

/// Binary (P5) 8-bit PGM.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    out
}

pub fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let mut dec = png::Decoder::new(bytes);
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| img_err(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| img_err(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let stride = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        c => return Err(img_err(format!("only grayscale PNG is supported, got {c:?}"))),
    };
    let data = buf[..info.buffer_size()].chunks(stride).map(|c| c[0] as f64 / 255.0).collect();
    GrayImage::new(h, w, data)
}

/// 8-bit grayscale PNG.
pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| img_err(e.to_string()))?;
        w.write_image_data(&img.to_bytes()).map_err(|e| img_err(e.to_string()))?;
    }
    Ok(out)
}

/// Reads a PGM or PNG file, detected by its signature.
pub fn read_image(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else {
        Err(img_err(format!("{}: neither PGM nor PNG", path.display())))
    }
}

/// Writes PNG for a `.png` extension and binary PGM otherwise.
pub fn write_image(path: &Path, img: &GrayImage) -> Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("png") => encode_png(img)?,
        _ => encode_pgm(img),
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

const REF_MAGIC: &[u8; 8] = b"DRREF01\n";

/// JSON header of a reference file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefHeader {
    pub problem: String,
    pub primal_shapes: Vec<Vec<usize>>,
    pub dual_shapes: Vec<Vec<usize>>,
    pub provenance: Provenance,
    pub certificate: f64,
    pub primal_value: f64,
    pub x_len: usize,
    pub y_len: usize,
}

/// Layout: magic, little-endian `u64` header length, JSON header, then `x*`
/// and `y*` as little-endian `f64`.
pub fn write_reference<W: Write>(mut w: W, header: &RefHeader, r: &ReferencePoint) -> Result<()> {
    if header.x_len != r.x_star.len() || header.y_len != r.y_star.len() {
        return Err(Error::Layout("reference header does not match the point".into()));
    }
    let json = serde_json::to_vec(header)?;
    w.write_all(REF_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in r.x_star.iter().chain(&r.y_star) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_reference<R: Read>(mut r: R) -> Result<(RefHeader, ReferencePoint)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != REF_MAGIC {
        return Err(Error::Layout("not a reference file".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(Error::Layout("reference header too large".into()));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: RefHeader = serde_json::from_slice(&json)?;
    let mut read_vec = |n: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; 8 * n];
        r.read_exact(&mut buf)?;
        Ok(buf.chunks(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
    };
    let x_star = read_vec(header.x_len)?;
    let y_star = read_vec(header.y_len)?;
    let point = ReferencePoint { x_star, y_star, provenance: header.provenance, primal_value: header.primal_value, certificate: header.certificate };
    Ok((header, point))
}

pub fn save_reference(path: &Path, header: &RefHeader, r: &ReferencePoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_reference(&mut w, header, r)?;
    w.flush()?;
    Ok(())
}

pub fn load_reference(path: &Path) -> Result<(RefHeader, ReferencePoint)> {
    read_reference(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GrayImage {
        let data = (0..12).map(|i| (i * 20) as f64 / 255.0).collect();
        GrayImage::new(3, 4, data).unwrap()
    }

    #[test]
    fn pgm_round_trip() {
        let img = sample();
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn ascii_pgm_with_comments() {
        let text = b"P2\n# made by hand\n3 2\n# max\n10\n0 5 10\n10 # c\n 5 0\n";
        let img = decode_pgm(text).unwrap();
        assert_eq!((img.height, img.width), (2, 3));
        assert_eq!(img.data, vec![0.0, 0.5, 1.0, 1.0, 0.5, 0.0]);
        assert!(decode_pgm(b"P2\n3 2\n10\n0 5\n").is_err());
        assert!(decode_pgm(b"P7\n3 2\n10\n").is_err());
    }

    #[test]
    fn png_round_trip() {
        let img = sample();
        let bytes = encode_png(&img).unwrap();
        assert_eq!(decode_png(&bytes).unwrap(), img);
    }

    #[test]
    fn files_dispatch_on_signature() {
        let dir = tempfile::tempdir().unwrap();
        let img = sample();
        for name in ["a.png", "b.pgm"] {
            let p = dir.path().join(name);
            write_image(&p, &img).unwrap();
            assert_eq!(read_image(&p).unwrap(), img);
        }
    }

    #[test]
    fn reference_round_trip() {
        let r = ReferencePoint {
            x_star: vec![0.1, -2.5, 1e-300, f64::MAX],
            y_star: vec![3.0],
            provenance: Provenance::LongRun,
            primal_value: 0.25,
            certificate: 1e-9,
        };
        let h = RefHeader {
            problem: "toy".into(),
            primal_shapes: vec![vec![4]],
            dual_shapes: vec![vec![1]],
            provenance: r.provenance,
            certificate: r.certificate,
            primal_value: r.primal_value,
            x_len: 4,
            y_len: 1,
        };
        let mut buf = Vec::new();
        write_reference(&mut buf, &h, &r).unwrap();
        let (h2, r2) = read_reference(buf.as_slice()).unwrap();
        assert_eq!((h2, r2), (h.clone(), r.clone()));
        assert!(read_reference(&buf[..buf.len() - 1]).is_err());
        let bad = RefHeader { x_len: 3, ..h };
        assert!(write_reference(Vec::new(), &bad, &r).is_err());
    }
}
