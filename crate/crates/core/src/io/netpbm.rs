//! Binary PGM (P5) and PPM (P6) with 8-bit samples, plus frame directories
//! whose files are named by zero-padded frame index (`000.pgm`, `001.ppm`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::similarity::{to_luma, GrayFrame, RgbFrame};

fn bad(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct Header {
    magic: [u8; 2],
    width: u32,
    height: u32,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let mut pos = 0usize;
    let mut line = 1usize;
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(bad(path, 1, "not a netpbm file"));
    }
    let magic = [bytes[0], bytes[1]];
    if magic[1] != b'5' && magic[1] != b'6' {
        return Err(bad(
            path,
            1,
            format!("unsupported netpbm variant P{} (only P5 and P6)", magic[1] as char),
        ));
    }
    pos += 2;
    let mut fields = [0u32; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b'\n') => {
                    line += 1;
                    pos += 1;
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let name = ["width", "height", "maxval"][k];
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *field = text
            .parse()
            .map_err(|_| bad(path, line, format!("missing or invalid {name}")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad(path, line, "header must end with a single whitespace byte")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(bad(path, line, "image dimensions must be positive"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad(
            path,
            line,
            format!("unsupported maxval {maxval}: only 8-bit samples (maxval <= 255) are read"),
        ));
    }
    Ok(Header {
        magic,
        width,
        height,
        maxval,
        data_start: pos,
    })
}

/// Decodes a P5 or P6 image to luma. PPM goes through [`to_luma`]; samples
/// with maxval below 255 are rescaled to the full 8-bit range.
pub fn decode_netpbm(bytes: &[u8], path: &Path) -> Result<GrayFrame> {
    let h = parse_header(bytes, path)?;
    let channels = if h.magic[1] == b'5' { 1 } else { 3 };
    let n = h.width as usize * h.height as usize * channels;
    let data = bytes
        .get(h.data_start..h.data_start + n)
        .ok_or_else(|| bad(path, 0, format!("truncated raster: expected {n} bytes")))?;
    let mut data = data.to_vec();
    if h.maxval != 255 {
        for v in &mut data {
            if u32::from(*v) > h.maxval {
                return Err(bad(path, 0, format!("sample {v} exceeds maxval {}", h.maxval)));
            }
            *v = ((u32::from(*v) * 255 * 2 + h.maxval) / (2 * h.maxval)) as u8;
        }
    }
    if channels == 1 {
        GrayFrame::new(h.width, h.height, data)
    } else {
        to_luma(&RgbFrame {
            width: h.width,
            height: h.height,
            data,
        })
    }
}

pub fn read_netpbm(path: &Path) -> Result<GrayFrame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_netpbm(&bytes, path)
}

pub fn encode_pgm(frame: &GrayFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.samples());
    out
}

pub fn encode_ppm(frame: &RgbFrame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.data);
    out
}

pub fn write_pgm(path: &Path, frame: &GrayFrame) -> Result<()> {
    fs::write(path, encode_pgm(frame)).map_err(|e| Error::io(path, e))
}

pub fn write_ppm(path: &Path, frame: &RgbFrame) -> Result<()> {
    fs::write(path, encode_ppm(frame)).map_err(|e| Error::io(path, e))
}

/// An indexed directory of frames, loaded one at a time.
#[derive(Debug, Clone)]
pub struct FrameDir {
    paths: Vec<PathBuf>,
}

impl FrameDir {
    /// Lists `*.pgm` / `*.ppm` files named by frame index. Indices must run
    /// from 0 without gaps; other files are ignored.
    pub fn open(dir: &Path) -> Result<Self> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut by_index: BTreeMap<u64, PathBuf> = BTreeMap::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if !matches!(ext.as_deref(), Some("pgm" | "ppm")) {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if stem.is_empty() || !stem.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::input(format!(
                    "{}: frame files must be named by frame index",
                    path.display()
                )));
            }
            let idx: u64 = stem
                .parse()
                .map_err(|_| Error::input(format!("{}: frame index out of range", path.display())))?;
            if let Some(prev) = by_index.insert(idx, path.clone()) {
                return Err(Error::input(format!(
                    "{} and {} both hold frame {idx}",
                    prev.display(),
                    path.display()
                )));
            }
        }
        let last = by_index.keys().next_back().copied();
        let missing: Vec<String> = (0..last.map_or(0, |l| l + 1))
            .filter(|i| !by_index.contains_key(i))
            .map(|i| i.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::input(format!(
                "{}: missing frame {}",
                dir.display(),
                missing.join(", ")
            )));
        }
        Ok(Self {
            paths: by_index.into_values().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn path(&self, i: usize) -> &Path {
        &self.paths[i]
    }

    pub fn load(&self, i: usize) -> Result<GrayFrame> {
        read_netpbm(&self.paths[i])
    }

    /// Size of frame 0, or `None` for an empty directory.
    pub fn dimensions(&self) -> Result<Option<(u32, u32)>> {
        if self.paths.is_empty() {
            return Ok(None);
        }
        let f = self.load(0)?;
        Ok(Some((f.width(), f.height())))
    }
}

/// Loads every frame of `dir` in index order, rejecting mixed dimensions.
pub fn read_frames(dir: &Path) -> Result<Vec<GrayFrame>> {
    let d = FrameDir::open(dir)?;
    let mut frames: Vec<GrayFrame> = Vec::with_capacity(d.len());
    for i in 0..d.len() {
        let f = d.load(i)?;
        if let Some(first) = frames.first() {
            if (f.width(), f.height()) != (first.width(), first.height()) {
                return Err(Error::input(format!(
                    "{} is {}x{} but frame 0 is {}x{}",
                    d.path(i).display(),
                    f.width(),
                    f.height(),
                    first.width(),
                    first.height()
                )));
            }
        }
        frames.push(f);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32, seed: u8) -> GrayFrame {
        let s = (0..w * h).map(|i| (i as u8).wrapping_mul(7).wrapping_add(seed)).collect();
        GrayFrame::new(w, h, s).unwrap()
    }

    #[test]
    fn pgm_round_trip() {
        let g = gray(5, 3, 1);
        assert_eq!(decode_netpbm(&encode_pgm(&g), Path::new("x.pgm")).unwrap(), g);
    }

    #[test]
    fn header_comments_and_whitespace() {
        let mut b = b"P5 # comment\n# more\n 2\t1\n255\n".to_vec();
        b.extend([10, 20]);
        let g = decode_netpbm(&b, Path::new("c.pgm")).unwrap();
        assert_eq!(g.samples(), &[10, 20]);
    }

    #[test]
    fn ppm_goes_through_luma() {
        let rgb = RgbFrame {
            width: 2,
            height: 1,
            data: vec![255, 0, 0, 255, 255, 255],
        };
        let g = decode_netpbm(&encode_ppm(&rgb), Path::new("c.ppm")).unwrap();
        assert_eq!(g.samples(), &[76, 255]);
    }

    #[test]
    fn low_maxval_rescaled() {
        let mut b = b"P5\n3 1\n15\n".to_vec();
        b.extend([0, 15, 7]);
        let g = decode_netpbm(&b, Path::new("m.pgm")).unwrap();
        assert_eq!(g.samples(), &[0, 255, 119]);
    }

    #[test]
    fn rejects_sixteen_bit_and_truncation() {
        let e = decode_netpbm(b"P6\n1 1\n65535\n\0\0\0\0\0\0", Path::new("w.ppm")).unwrap_err();
        assert!(e.to_string().contains("unsupported maxval 65535"), "{e}");
        assert!(decode_netpbm(b"P5\n4 4\n255\n\0\0", Path::new("t.pgm")).is_err());
        assert!(decode_netpbm(b"P2\n1 1\n255\n0", Path::new("a.pgm")).is_err());
    }

    #[test]
    fn frame_directory_order_and_gaps() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3u8 {
            write_pgm(&dir.path().join(format!("{i:03}.pgm")), &gray(4, 4, i)).unwrap();
        }
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let frames = read_frames(dir.path()).unwrap();
        assert_eq!(frames, vec![gray(4, 4, 0), gray(4, 4, 1), gray(4, 4, 2)]);

        fs::remove_file(dir.path().join("001.pgm")).unwrap();
        let e = read_frames(dir.path()).unwrap_err();
        assert!(e.to_string().contains("missing frame 1"), "{e}");

        write_pgm(&dir.path().join("001.pgm"), &gray(5, 4, 0)).unwrap();
        assert!(read_frames(dir.path()).is_err());
    }
}
