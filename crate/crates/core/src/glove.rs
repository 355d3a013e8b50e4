//! Colored-glove hand-state heuristic.
//!
//! The capture subject wears gloves colored green on the palm and red on
//! the back. Counting which color dominates a crop around the hand gives a
//! coarse wrist-rotation signal; seeing only palm pixels marks a "palm up"
//! gesture that overrides the elbow yaw downstream.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit chroma margin: a pixel counts as glove-green iff G exceeds both
/// other channels by at least this much (symmetric for red). Keeps the
/// classifier deterministic under mild sensor noise.
pub const CHROMA_MARGIN: u8 = 40;

/// Row-major packed RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// `width * height * 3` bytes, R G B per pixel.
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::Validation(format!(
                "pixel buffer length {} does not match {}x{} RGB image",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    /// Solid-color image, mostly useful for tests and synthetic data.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        RgbImage {
            width,
            height,
            pixels,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Which glove color dominates a hand crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GloveSide {
    Palm,
    Back,
}

/// Pixel-count summary of one hand crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GloveReading {
    pub palm_pixels: usize,
    pub back_pixels: usize,
    /// The larger of the two counts.
    pub max: usize,
    /// Palm wins ties.
    pub dominant: GloveSide,
    /// True iff palm pixels were seen and no back pixels at all.
    pub palm_only: bool,
}

impl GloveReading {
    pub fn from_counts(palm_pixels: usize, back_pixels: usize) -> Self {
        GloveReading {
            palm_pixels,
            back_pixels,
            max: palm_pixels.max(back_pixels),
            dominant: if palm_pixels >= back_pixels {
                GloveSide::Palm
            } else {
                GloveSide::Back
            },
            palm_only: back_pixels == 0 && palm_pixels > 0,
        }
    }

    /// Reading for a frame without any glove observation: zero counts,
    /// which maps to zero wrist yaw and no palm-up override.
    pub fn neutral() -> Self {
        GloveReading::from_counts(0, 0)
    }
}

fn is_green([r, g, b]: [u8; 3]) -> bool {
    g as i32 >= r as i32 + CHROMA_MARGIN as i32 && g as i32 >= b as i32 + CHROMA_MARGIN as i32
}

fn is_red([r, g, b]: [u8; 3]) -> bool {
    r as i32 >= g as i32 + CHROMA_MARGIN as i32 && r as i32 >= b as i32 + CHROMA_MARGIN as i32
}

/// Square crop of side `window` centered at `(cx, cy)`, clipped to the
/// image bounds (edge crops come back smaller).
pub fn extract_hand_subimage(
    image: &RgbImage,
    cx: usize,
    cy: usize,
    window: usize,
) -> Result<RgbImage> {
    if window == 0 {
        return Err(Error::Validation("crop window must be positive".into()));
    }
    if cx >= image.width || cy >= image.height {
        return Err(Error::Validation(format!(
            "hand position ({cx},{cy}) outside {}x{} image",
            image.width, image.height
        )));
    }
    let half = (window / 2) as i64;
    let x0 = (cx as i64 - half).max(0) as usize;
    let y0 = (cy as i64 - half).max(0) as usize;
    let x1 = ((cx as i64 - half) + window as i64).min(image.width as i64) as usize;
    let y1 = ((cy as i64 - half) + window as i64).min(image.height as i64) as usize;
    let (w, h) = (x1 - x0, y1 - y0);
    let mut pixels = Vec::with_capacity(w * h * 3);
    for y in y0..y1 {
        let row = (y * image.width + x0) * 3;
        pixels.extend_from_slice(&image.pixels[row..row + w * 3]);
    }
    RgbImage::new(w, h, pixels)
}

/// Counts green (palm) and red (back) pixels in a crop.
pub fn classify_glove_pixels(sub: &RgbImage) -> GloveReading {
    let mut palm = 0usize;
    let mut back = 0usize;
    for px in sub.pixels.chunks_exact(3) {
        let rgb = [px[0], px[1], px[2]];
        if is_green(rgb) {
            palm += 1;
        } else if is_red(rgb) {
            back += 1;
        }
    }
    GloveReading::from_counts(palm, back)
}

/// Maps a glove reading to wrist yaw in radians.
///
/// With `m = min(max, N)`: palm-dominant readings give `(m/N)·max_wrist_yaw`
/// (in `[0, +max]`), back-dominant readings give `((m−N)/N)·max_wrist_yaw`
/// (in `[−max, 0]`). `N` is the pixel count treated as "hand fully visible".
pub fn wrist_yaw_from_reading(r: GloveReading, n: f64, max_wrist_yaw: f64) -> Result<f64> {
    if !(n > 0.0) {
        return Err(Error::Config(format!(
            "glove normalizing constant must be positive, got {n}"
        )));
    }
    let m = (r.max as f64).min(n);
    let yaw = match r.dominant {
        GloveSide::Palm => (m / n) * max_wrist_yaw,
        GloveSide::Back => ((m - n) / n) * max_wrist_yaw,
    };
    Ok(yaw)
}

/// Reads a binary (P6) PPM file.
pub fn load_ppm(path: &Path) -> Result<RgbImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    // Header tokens may be separated by any whitespace; `#` starts a
    // comment running to end of line.
    let mut header = Vec::new();
    let mut token = String::new();
    let mut in_comment = false;
    while header.len() < 4 {
        let mut byte = [0u8; 1];
        reader
            .read_exact(&mut byte)
            .map_err(|e| Error::io(path, e))?;
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        match c {
            '#' => in_comment = true,
            c if c.is_ascii_whitespace() => {
                if !token.is_empty() {
                    header.push(std::mem::take(&mut token));
                }
            }
            c => token.push(c),
        }
    }

    if header[0] != "P6" {
        return Err(Error::parse(
            path,
            1,
            format!("expected P6 magic, found {:?}", header[0]),
        ));
    }
    let parse_dim = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::parse(path, 1, format!("bad {what}: {s:?}")))
    };
    let width = parse_dim(&header[1], "width")?;
    let height = parse_dim(&header[2], "height")?;
    let maxval = parse_dim(&header[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(
            path,
            1,
            format!("unsupported maxval {maxval} (need 1..=255)"),
        ));
    }

    let mut pixels = vec![0u8; width * height * 3];
    reader
        .read_exact(&mut pixels)
        .map_err(|e| Error::io(path, e))?;
    RgbImage::new(width, height, pixels)
}

/// Writes a binary (P6) PPM file with maxval 255.
pub fn save_ppm(image: &RgbImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P6\n{} {}\n255\n", image.width, image.height).map_err(|e| Error::io(path, e))?;
    w.write_all(&image.pixels).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct SidecarLine {
    frame: usize,
    left: String,
    right: String,
}

/// Loads a `hands.jsonl` sidecar mapping frame indices to per-hand crop
/// files. Relative paths are resolved against the sidecar's directory.
/// Frames absent from the sidecar simply have no glove observation.
pub fn load_hands_sidecar(path: &Path) -> Result<BTreeMap<usize, (PathBuf, PathBuf)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let base = path.parent().unwrap_or(Path::new("."));
    let mut map = BTreeMap::new();
    for (lineno0, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: SidecarLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno0 + 1, format!("bad sidecar line: {e}")))?;
        map.insert(
            entry.frame,
            (base.join(&entry.left), base.join(&entry.right)),
        );
    }
    Ok(map)
}

/// Writes a `hands.jsonl` sidecar; paths are stored as given.
pub fn save_hands_sidecar(
    entries: &BTreeMap<usize, (String, String)>,
    path: &Path,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (&frame, (left, right)) in entries {
        let line = serde_json::to_string(&SidecarLine {
            frame,
            left: left.clone(),
            right: right.clone(),
        })
        .expect("sidecar serialization");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads one hand crop and classifies it.
pub fn read_glove_crop(path: &Path) -> Result<GloveReading> {
    let image = load_ppm(path)?;
    if image.width == 0 || image.height == 0 {
        return Err(Error::Validation(format!(
            "empty glove crop: {}",
            path.display()
        )));
    }
    Ok(classify_glove_pixels(&image))
}
