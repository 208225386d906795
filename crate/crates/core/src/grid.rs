//! The 8×8 button grid: colors, the RGB-X text grammar, and raster I/O.
//!
//! A frame is 64 button colors indexed by coordinate `x` in `[0, 63]`,
//! row-major from the top-left (`row = x / 8`, `col = x % 8`). The textual
//! form of a frame is a list of `(r, g, b, x)` tuples separated by `", "`.
//!
//! Rendering places each button in a 16×16 cell of a 128×128 image as a
//! 14×14 square inset by one pixel; sampling reads back the mean of the
//! central 6×6 patch of every cell, so `sample(render(f)) == f` exactly.

use std::fmt::{self, Write as _};
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Buttons per row and per column.
pub const GRID_SIDE: usize = 8;
/// Buttons per frame.
pub const BUTTONS: usize = GRID_SIDE * GRID_SIDE;
/// Rendered frame width and height in pixels.
pub const IMAGE_SIDE: u32 = 128;
/// Cell width in pixels.
pub const CELL: u32 = IMAGE_SIDE / GRID_SIDE as u32;
/// Inset of the lit square inside its cell.
pub const INSET: u32 = 1;
/// Side of the central patch averaged by [`sample_frame_from_image`].
pub const SAMPLE_PATCH: u32 = 6;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("image is {width}x{height}, expected {IMAGE_SIDE}x{IMAGE_SIDE}")]
    ImageSize { width: u32, height: u32 },
    #[error("coordinate {0} outside [0, 63]")]
    Coordinate(i64),
    #[error("frame has {0} buttons, expected 64")]
    FrameLength(usize),
    #[error("frame sequence is empty")]
    EmptySequence,
    #[error("fps must be positive, got {0}")]
    Fps(f64),
    #[error("image {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ButtonColor {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl ButtonColor {
    pub const BLACK: ButtonColor = ButtonColor { r: 0, g: 0, b: 0 };

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub fn is_lit(self) -> bool {
        self != Self::BLACK
    }

    /// Rec. 601 luma in `[0, 1]`.
    pub fn luminance(self) -> f64 {
        (0.299 * f64::from(self.r) + 0.587 * f64::from(self.g) + 0.114 * f64::from(self.b)) / 255.0
    }

    /// HSV hue in degrees, `[0, 360)`. Greys report 0.
    pub fn hue(self) -> f64 {
        let (r, g, b) = (f64::from(self.r), f64::from(self.g), f64::from(self.b));
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let delta = max - min;
        if delta == 0.0 {
            return 0.0;
        }
        let h = if max == r {
            ((g - b) / delta).rem_euclid(6.0)
        } else if max == g {
            (b - r) / delta + 2.0
        } else {
            (r - g) / delta + 4.0
        };
        (h * 60.0).rem_euclid(360.0)
    }
}

/// Grid coordinate in `[0, 63]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord(u8);

impl Coord {
    pub fn new(x: usize) -> Result<Self, GridError> {
        if x < BUTTONS {
            Ok(Self(x as u8))
        } else {
            Err(GridError::Coordinate(x as i64))
        }
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn row(self) -> usize {
        self.index() / GRID_SIDE
    }

    pub fn col(self) -> usize {
        self.index() % GRID_SIDE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RgbXTuple {
    pub color: ButtonColor,
    pub x: Coord,
}

impl fmt::Display for RgbXTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.color;
        write!(f, "({}, {}, {}, {})", c.r, c.g, c.b, self.x.index())
    }
}

/// One snapshot of all 64 buttons. Unlit buttons are black.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LaunchpadFrame {
    buttons: [ButtonColor; BUTTONS],
}

impl Default for LaunchpadFrame {
    fn default() -> Self {
        Self::black()
    }
}

impl LaunchpadFrame {
    pub fn black() -> Self {
        Self {
            buttons: [ButtonColor::BLACK; BUTTONS],
        }
    }

    pub fn from_buttons(buttons: [ButtonColor; BUTTONS]) -> Self {
        Self { buttons }
    }

    pub fn from_slice(buttons: &[ButtonColor]) -> Result<Self, GridError> {
        let buttons: [ButtonColor; BUTTONS] = buttons
            .try_into()
            .map_err(|_| GridError::FrameLength(buttons.len()))?;
        Ok(Self { buttons })
    }

    pub fn buttons(&self) -> &[ButtonColor; BUTTONS] {
        &self.buttons
    }

    pub fn get(&self, x: Coord) -> ButtonColor {
        self.buttons[x.index()]
    }

    pub fn set(&mut self, x: Coord, color: ButtonColor) {
        self.buttons[x.index()] = color;
    }

    pub fn lit_count(&self) -> usize {
        self.buttons.iter().filter(|c| c.is_lit()).count()
    }

    /// Fraction of lit buttons.
    pub fn activity(&self) -> f64 {
        self.lit_count() as f64 / BUTTONS as f64
    }

    pub fn tuples(&self, mode: SerializeMode) -> impl Iterator<Item = RgbXTuple> + '_ {
        self.buttons
            .iter()
            .enumerate()
            .filter(move |(_, c)| mode == SerializeMode::Dense || c.is_lit())
            .map(|(i, &color)| RgbXTuple {
                color,
                x: Coord(i as u8),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<LaunchpadFrame>,
    fps: f64,
}

impl FrameSequence {
    pub fn new(frames: Vec<LaunchpadFrame>, fps: f64) -> Result<Self, GridError> {
        if frames.is_empty() {
            return Err(GridError::EmptySequence);
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(GridError::Fps(fps));
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[LaunchpadFrame] {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub tuples: Vec<RgbXTuple>,
    pub malformed_count: usize,
    pub duplicate_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SerializeMode {
    /// Only lit buttons, ascending coordinate.
    #[default]
    Sparse,
    /// All 64 buttons, ascending coordinate.
    Dense,
}

pub fn serialize_frame(frame: &LaunchpadFrame, mode: SerializeMode) -> String {
    let mut out = String::new();
    for (i, t) in frame.tuples(mode).enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{t}").expect("writing to a String cannot fail");
    }
    out
}

/// Extract every `(int, int, int, int)` group from `text`.
///
/// Whitespace is allowed around each number. Groups with a channel outside
/// `[0, 255]` or a coordinate outside `[0, 63]` count as malformed and are
/// dropped; a coordinate already seen earlier in the text counts as a
/// duplicate but is still returned. Never fails.
pub fn parse_rgbx_text(text: &str) -> ParseReport {
    let bytes = text.as_bytes();
    let mut report = ParseReport::default();
    let mut seen = [false; BUTTONS];
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'(' {
            i += 1;
            continue;
        }
        match scan_group(bytes, i + 1) {
            Some((values, end)) => {
                match tuple_from_values(values) {
                    Some(t) => {
                        if seen[t.x.index()] {
                            report.duplicate_count += 1;
                        }
                        seen[t.x.index()] = true;
                        report.tuples.push(t);
                    }
                    None => report.malformed_count += 1,
                }
                i = end;
            }
            // Not a tuple; resume right after the '(' so a nested '(' is found.
            None => i += 1,
        }
    }
    report
}

fn tuple_from_values(v: [i64; 4]) -> Option<RgbXTuple> {
    let channel = |c: i64| u8::try_from(c).ok();
    let x = usize::try_from(v[3]).ok().filter(|&x| x < BUTTONS)?;
    Some(RgbXTuple {
        color: ButtonColor::new(channel(v[0])?, channel(v[1])?, channel(v[2])?),
        x: Coord(x as u8),
    })
}

/// Scan `int , int , int , int )` starting just after an opening paren.
/// Returns the four values and the index just past the closing paren.
fn scan_group(bytes: &[u8], mut i: usize) -> Option<([i64; 4], usize)> {
    let mut values = [0i64; 4];
    for (k, slot) in values.iter_mut().enumerate() {
        i = skip_ws(bytes, i);
        let (v, next) = scan_int(bytes, i)?;
        *slot = v;
        i = skip_ws(bytes, next);
        let expected = if k == 3 { b')' } else { b',' };
        if bytes.get(i) != Some(&expected) {
            return None;
        }
        i += 1;
    }
    Some((values, i))
}

fn skip_ws(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    i
}

fn scan_int(bytes: &[u8], start: usize) -> Option<(i64, usize)> {
    let mut i = start;
    let negative = match bytes.get(i) {
        Some(b'-') => {
            i += 1;
            true
        }
        Some(b'+') => {
            i += 1;
            false
        }
        _ => false,
    };
    let digits_start = i;
    let mut value: i64 = 0;
    while let Some(&b) = bytes.get(i) {
        if !b.is_ascii_digit() {
            break;
        }
        // Saturate: anything this large is out of range anyway.
        value = value.saturating_mul(10).saturating_add(i64::from(b - b'0'));
        i += 1;
    }
    if i == digits_start {
        return None;
    }
    Some((if negative { -value } else { value }, i))
}

/// Build a frame from tuples. Unmentioned buttons are black; when a
/// coordinate repeats, the last tuple wins.
pub fn frame_from_tuples(tuples: &[RgbXTuple]) -> LaunchpadFrame {
    let mut frame = LaunchpadFrame::black();
    for t in tuples {
        frame.set(t.x, t.color);
    }
    frame
}

pub fn render_frame(frame: &LaunchpadFrame) -> RgbImage {
    let mut img = RgbImage::new(IMAGE_SIDE, IMAGE_SIDE);
    let side = CELL - 2 * INSET;
    for (i, c) in frame.buttons.iter().enumerate() {
        if !c.is_lit() {
            continue;
        }
        let x0 = (i % GRID_SIDE) as u32 * CELL + INSET;
        let y0 = (i / GRID_SIDE) as u32 * CELL + INSET;
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                img.put_pixel(x, y, Rgb([c.r, c.g, c.b]));
            }
        }
    }
    img
}

pub fn sample_frame_from_image(img: &RgbImage) -> Result<LaunchpadFrame, GridError> {
    if img.width() != IMAGE_SIDE || img.height() != IMAGE_SIDE {
        return Err(GridError::ImageSize {
            width: img.width(),
            height: img.height(),
        });
    }
    let offset = (CELL - SAMPLE_PATCH) / 2;
    let n = f64::from(SAMPLE_PATCH * SAMPLE_PATCH);
    let mut frame = LaunchpadFrame::black();
    for (i, button) in frame.buttons.iter_mut().enumerate() {
        let x0 = (i % GRID_SIDE) as u32 * CELL + offset;
        let y0 = (i / GRID_SIDE) as u32 * CELL + offset;
        let mut sum = [0u32; 3];
        for y in y0..y0 + SAMPLE_PATCH {
            for x in x0..x0 + SAMPLE_PATCH {
                let p = img.get_pixel(x, y).0;
                for (s, v) in sum.iter_mut().zip(p) {
                    *s += u32::from(v);
                }
            }
        }
        let mean = |s: u32| (f64::from(s) / n).round() as u8;
        *button = ButtonColor::new(mean(sum[0]), mean(sum[1]), mean(sum[2]));
    }
    Ok(frame)
}

pub fn save_frame_image(frame: &LaunchpadFrame, path: &Path) -> Result<(), GridError> {
    render_frame(frame)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| GridError::Image {
            path: path.display().to_string(),
            source,
        })
}

pub fn load_frame_image(path: &Path) -> Result<LaunchpadFrame, GridError> {
    let img = image::open(path)
        .map_err(|source| GridError::Image {
            path: path.display().to_string(),
            source,
        })?
        .to_rgb8();
    sample_frame_from_image(&img)
}

/// File name of frame `index` inside a frames directory.
pub fn frame_file_name(index: usize) -> String {
    format!("{index:05}.png")
}
