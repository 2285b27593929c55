//! Binary raster images and their PGM (P5) encoding.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `width x height` grid of {0, 1} pixels, row-major.
///
/// Pixel value 1 is white (written as 255 in PGM files), 0 is black.
/// Reads outside the grid return 0, i.e. the image sits on a virtual black frame.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            pixels: vec![value as u8; width * height],
        }
    }

    /// Builds an image from row-major pixels; any non-zero value counts as 1.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        let pixels = pixels.into_iter().map(|p| (p != 0) as u8).collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Parses rows of `#`/`1` (white) and `.`/`0` (black). Handy in tests.
    pub fn from_ascii(art: &str) -> Self {
        let rows: Vec<&str> = art
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.iter().map(|r| r.chars().count()).max().unwrap_or(0);
        let mut img = Self::new(width, height);
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                if matches!(ch, '#' | '1' | 'X' | 'x') {
                    img.set(x, y, true);
                }
            }
        }
        img
    }

    /// Builds a `width x height` image whose pixel `i` is bit `i` of `bits`.
    pub fn from_bits(width: usize, height: usize, bits: u64) -> Self {
        debug_assert!(width * height <= 64);
        let pixels = (0..width * height)
            .map(|i| ((bits >> i) & 1) as u8)
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x] != 0
    }

    /// Signed-coordinate read with the virtual black frame.
    #[inline]
    pub fn at(&self, x: isize, y: isize) -> bool {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            false
        } else {
            self.pixels[y as usize * self.width + x as usize] != 0
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.pixels[y * self.width + x] = value as u8;
    }

    pub fn check_bounds(&self, x: i64, y: i64) -> Result<()> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn count_ones(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| 1 - p).collect(),
        }
    }

    /// Pixel-wise `self AND NOT other`.
    pub fn difference(&self, other: &BinaryImage) -> Self {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let pixels = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| a & (1 - b))
            .collect();
        Self {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// True when every 1-pixel of `self` is also 1 in `other`.
    pub fn is_subset_of(&self, other: &BinaryImage) -> bool {
        self.pixels.iter().zip(&other.pixels).all(|(&a, &b)| a <= b)
    }

    /// Coordinates of all 1-pixels in raster order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Point reflection through the image centre.
    pub fn rotated_180(&self) -> Self {
        let mut pixels = self.pixels.clone();
        pixels.reverse();
        Self {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// The `w x h` window at `(x0, y0)`; pixels beyond the image read as 0.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        let mut out = Self::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if x0 + x < self.width && y0 + y < self.height {
                    out.set(x, y, self.get(x0 + x, y0 + y));
                }
            }
        }
        out
    }

    /// Number of 1-pixels on the outermost ring of the image.
    pub fn border_ones(&self) -> (usize, usize) {
        let (w, h) = (self.width, self.height);
        if w == 0 || h == 0 {
            return (0, 0);
        }
        let mut ones = 0;
        let mut total = 0;
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    total += 1;
                    ones += self.get(x, y) as usize;
                }
            }
        }
        (ones, total)
    }

    /// Pixels as reals: 1.0 for white, 0.0 for black.
    pub fn to_f32(&self) -> Vec<f32> {
        self.pixels.iter().map(|&p| p as f32).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().map(|&p| p * 255).collect();
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.pixels.len() + 20);
        self.write_pgm(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads a binary (P5) or plain (P2) graymap. Samples at or above half of
    /// maxval become 1.
    pub fn read_pgm<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let magic = read_token(&mut reader)?;
        let binary = match magic.as_str() {
            "P5" => true,
            "P2" => false,
            other => return Err(Error::Pgm(format!("unsupported magic {other:?}"))),
        };
        let width = parse_header_number(&mut reader, "width")?;
        let height = parse_header_number(&mut reader, "height")?;
        let maxval = parse_header_number(&mut reader, "maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(Error::Pgm(format!("maxval {maxval} out of range")));
        }
        let threshold = maxval.div_ceil(2);
        let n = width * height;
        let mut pixels = Vec::with_capacity(n);
        if binary {
            let sample_bytes = if maxval < 256 { 1 } else { 2 };
            let mut raw = vec![0u8; n * sample_bytes];
            reader
                .read_exact(&mut raw)
                .map_err(|e| Error::Pgm(format!("pixel data truncated: {e}")))?;
            for i in 0..n {
                let v = if sample_bytes == 1 {
                    raw[i] as usize
                } else {
                    u16::from_be_bytes([raw[2 * i], raw[2 * i + 1]]) as usize
                };
                pixels.push((v >= threshold) as u8);
            }
        } else {
            for _ in 0..n {
                let v = parse_header_number(&mut reader, "sample")?;
                pixels.push((v >= threshold) as u8);
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_pgm_bytes()).map_err(|e| Error::io_at(path, e))
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
        Self::read_pgm(file)
    }
}

impl fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryImage {}x{}", self.width, self.height)?;
        for y in 0..self.height {
            for x in 0..self.width {
                f.write_str(if self.get(x, y) { "#" } else { "." })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn read_token<R: BufRead>(reader: &mut R) -> Result<String> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            if token.is_empty() {
                return Err(Error::Pgm("unexpected end of header".into()));
            }
            return Ok(token);
        }
        let c = byte[0];
        if c == b'#' && token.is_empty() {
            let mut comment = Vec::new();
            reader.read_until(b'\n', &mut comment)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            return Ok(token);
        }
        token.push(c as char);
    }
}

fn parse_header_number<R: BufRead>(reader: &mut R, what: &str) -> Result<usize> {
    let tok = read_token(reader)?;
    tok.parse()
        .map_err(|_| Error::Pgm(format!("bad {what} {tok:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_is_bit_exact() {
        let img = BinaryImage::from_ascii(
            "
            #..#
            .##.
            ....
            ",
        );
        let bytes = img.to_pgm_bytes();
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(&bytes[bytes.len() - 12..bytes.len() - 8], &[255, 0, 0, 255]);
        let back = BinaryImage::read_pgm(&bytes[..]).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn reads_plain_pgm_with_comments() {
        let text = b"P2\n# made by hand\n3 1\n# another\n15\n0 8 15\n";
        let img = BinaryImage::read_pgm(&text[..]).unwrap();
        assert_eq!(img.pixels(), &[0, 1, 1]);
    }

    #[test]
    fn truncated_pixel_data_is_an_error() {
        let bytes = b"P5\n4 4\n255\n\x00\x00";
        assert!(matches!(
            BinaryImage::read_pgm(&bytes[..]),
            Err(Error::Pgm(_))
        ));
    }

    #[test]
    fn rejects_other_formats() {
        assert!(BinaryImage::read_pgm(&b"P6\n1 1\n255\n\0\0\0"[..]).is_err());
    }

    #[test]
    fn rotation_and_crop() {
        let img = BinaryImage::from_ascii(
            "
            ##.
            ...
            ..#
            ",
        );
        let r = img.rotated_180();
        assert!(r.get(2, 2) && r.get(1, 2) && r.get(0, 0));
        assert_eq!(r.rotated_180(), img);
        let c = img.crop(1, 0, 3, 2);
        assert_eq!(c.pixels(), &[1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn virtual_frame_reads_black() {
        let img = BinaryImage::filled(2, 2, true);
        assert!(img.at(0, 0));
        assert!(!img.at(-1, 0));
        assert!(!img.at(2, 1));
        assert!(img.check_bounds(2, 0).is_err());
    }

    #[test]
    fn set_algebra() {
        let a = BinaryImage::from_ascii("##\n#.");
        let b = BinaryImage::from_ascii("#.\n..");
        assert!(b.is_subset_of(&a));
        assert!(!a.is_subset_of(&b));
        assert_eq!(a.difference(&b), BinaryImage::from_ascii(".#\n#."));
        assert_eq!(a.complement().count_ones(), 1);
    }
}
