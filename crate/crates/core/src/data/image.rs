use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel 8-bit image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("image must be non-empty, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Decodes a binary (P5) PGM with maxval <= 255.
    pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos).ok_or("missing magic")?;
        if magic != b"P5" {
            return Err("not a binary PGM (expected P5)".into());
        }
        let mut header = [0usize; 3];
        for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
            let tok = next_token(bytes, &mut pos).ok_or_else(|| format!("missing {name}"))?;
            *slot = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format!("bad {name}"))?;
        }
        let [width, height, maxval] = header;
        if maxval == 0 || maxval > 255 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let len = width * height;
        let raster = bytes
            .get(pos..pos + len)
            .ok_or_else(|| format!("truncated raster: need {len} bytes"))?;
        let pixels = if maxval == 255 {
            raster.to_vec()
        } else {
            raster
                .iter()
                .map(|&p| ((p as u32 * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8)
                .collect()
        };
        GrayImage::new(width, height, pixels).map_err(|e| e.to_string())
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_pgm(&bytes).map_err(|reason| Error::Decode {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.encode_pgm())
            .map_err(|e| Error::io(path, e))
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
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
    (*pos > start).then(|| &bytes[start..*pos])
}
