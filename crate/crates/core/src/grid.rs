//! Environment grid, cell addressing, sensor footprints and the map text format.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("map has zero cells")]
    ZeroCells,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cell ({row},{col}) has value {value} outside [0,1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("window {w}x{h} must have odd dimensions")]
    EvenWindow { w: usize, h: usize },
    #[error("cell ({row},{col}) is outside the {height}x{width} map")]
    OutOfMap { row: i64, col: i64, height: usize, width: usize },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Row/column address of a cell. Serialized as `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn euclidean(&self, other: &CellIndex) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt()
    }

    pub fn chebyshev(&self, other: &CellIndex) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Unit grid moves shared by the Actor and the Sensors. The declaration order
/// is the tie-break order used everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "UP",
            Action::Down => "DOWN",
            Action::Left => "LEFT",
            Action::Right => "RIGHT",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Finest-resolution cell field; values in `[0,1]`, 1 = non-traversable.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GridMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::ZeroCells);
        }
        if values.len() != width * height {
            return Err(GridError::Parse {
                line: 0,
                msg: format!("expected {} values, got {}", width * height, values.len()),
            });
        }
        for (j, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(GridError::OutOfRange { row: j / width, col: j % width, value: v });
            }
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self, GridError> {
        Self::new(height, width, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Total cell count N.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, cell: CellIndex) -> f64 {
        self.values[self.flat(cell)]
    }

    pub fn set(&mut self, cell: CellIndex, value: f64) {
        let j = self.flat(cell);
        self.values[j] = value;
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn flat(&self, cell: CellIndex) -> usize {
        debug_assert!(self.contains(cell));
        cell.row * self.width + cell.col
    }

    pub fn cell(&self, flat: usize) -> CellIndex {
        CellIndex::new(flat / self.width, flat % self.width)
    }

    pub fn check(&self, cell: CellIndex) -> Result<(), GridError> {
        if self.contains(cell) {
            Ok(())
        } else {
            Err(GridError::OutOfMap {
                row: cell.row as i64,
                col: cell.col as i64,
                height: self.height,
                width: self.width,
            })
        }
    }

    /// Signed offset from `cell`, or `None` when it leaves the map.
    pub fn offset(&self, cell: CellIndex, dr: i64, dc: i64) -> Option<CellIndex> {
        let r = cell.row as i64 + dr;
        let c = cell.col as i64 + dc;
        if r < 0 || c < 0 || r >= self.height as i64 || c >= self.width as i64 {
            None
        } else {
            Some(CellIndex::new(r as usize, c as usize))
        }
    }

    pub fn step(&self, cell: CellIndex, action: Action) -> Option<CellIndex> {
        let (dr, dc) = action.delta();
        self.offset(cell, dr, dc)
    }

    pub fn parse(text: &str) -> Result<Self, GridError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(GridError::ZeroCells)?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| GridError::Parse { line: hline, msg: format!("bad header: {e}") })?;
        let [height, width] = dims[..] else {
            return Err(GridError::Parse { line: hline, msg: "header must be `height width`".into() });
        };
        if height == 0 || width == 0 {
            return Err(GridError::ZeroCells);
        }
        let mut values = Vec::with_capacity(height * width);
        for row in 0..height {
            let (ln, line) = lines.next().ok_or_else(|| GridError::Parse {
                line: 0,
                msg: format!("missing row {row}"),
            })?;
            let mut count = 0;
            for (col, tok) in line.split_whitespace().enumerate() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| GridError::Parse { line: ln, msg: format!("bad value `{tok}`") })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(GridError::OutOfRange { row, col, value: v });
                }
                values.push(v);
                count += 1;
            }
            if count != width {
                return Err(GridError::Parse {
                    line: ln,
                    msg: format!("row {row} has {count} values, expected {width}"),
                });
            }
        }
        if let Some((ln, _)) = lines.next() {
            return Err(GridError::Parse { line: ln, msg: "trailing data after last row".into() });
        }
        Self::new(height, width, values)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.height, self.width);
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn format_value(v: f64) -> String {
    if v == 0.0 || v == 1.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

pub fn load_map(path: impl AsRef<Path>) -> Result<GridMap, GridError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| GridError::Io { path: path.display().to_string(), source })?;
    GridMap::parse(&text)
}

pub fn save_map(map: &GridMap, path: impl AsRef<Path>) -> Result<(), GridError> {
    let path = path.as_ref();
    fs::write(path, map.to_text())
        .map_err(|source| GridError::Io { path: path.display().to_string(), source })
}

/// Cells covered by an odd `window_w × window_h` window centred on `center`,
/// clipped to the map, in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Footprint {
    pub center: CellIndex,
    pub window_w: usize,
    pub window_h: usize,
    pub cells: Vec<CellIndex>,
}

impl Footprint {
    pub fn flat_cells<'a>(&'a self, map: &'a GridMap) -> impl Iterator<Item = usize> + 'a {
        self.cells.iter().map(move |c| map.flat(*c))
    }
}

pub fn footprint(map: &GridMap, center: CellIndex, w: usize, h: usize) -> Result<Footprint, GridError> {
    if w.is_multiple_of(2) || h.is_multiple_of(2) {
        return Err(GridError::EvenWindow { w, h });
    }
    map.check(center)?;
    let (hw, hh) = ((w / 2) as i64, (h / 2) as i64);
    let mut cells = Vec::with_capacity(w * h);
    for dr in -hh..=hh {
        for dc in -hw..=hw {
            if let Some(c) = map.offset(center, dr, dc) {
                cells.push(c);
            }
        }
    }
    Ok(Footprint { center, window_w: w, window_h: h, cells })
}
