//! Abstraction templates, window compression into (mean, variance, template)
//! messages, and nominal bit accounting.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellIndex, GridMap};

/// Bundled 10-template 7×7 codebook.
pub const DEFAULT_CODEBOOK: &str = include_str!("../data/default_codebook.txt");

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate template id {0}")]
    DuplicateId(usize),
    #[error("template ids must be 1..={k}, found {id}")]
    IdOutOfRange { id: usize, k: usize },
    #[error("template {id}: group ids must be contiguous 1..={max}, missing {missing}")]
    GroupGap { id: usize, max: u32, missing: u32 },
    #[error("template {0} transmits nothing")]
    Empty(usize),
    #[error("template {id} is {got_h}x{got_w}, codebook windows are {h}x{w}")]
    DimensionMismatch { id: usize, got_h: usize, got_w: usize, h: usize, w: usize },
    #[error("template windows must be odd, got {h}x{w}")]
    EvenWindow { h: usize, w: usize },
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("group {group} references unsensed cell {cell}")]
    Unsensed { group: u32, cell: CellIndex },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A compression template: a `window_h × window_w` grid of group ids,
/// 0 meaning "not transmitted".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: usize,
    window_h: usize,
    window_w: usize,
    group_grid: Vec<u32>,
    k: u32,
}

impl Template {
    pub fn new(id: usize, window_h: usize, window_w: usize, group_grid: Vec<u32>) -> Result<Self, CodecError> {
        if window_h.is_multiple_of(2) || window_w.is_multiple_of(2) {
            return Err(CodecError::EvenWindow { h: window_h, w: window_w });
        }
        if group_grid.len() != window_h * window_w {
            return Err(CodecError::DimensionMismatch {
                id,
                got_h: group_grid.len() / window_w.max(1),
                got_w: window_w,
                h: window_h,
                w: window_w,
            });
        }
        let present: BTreeSet<u32> = group_grid.iter().copied().filter(|&g| g != 0).collect();
        let Some(&k) = present.iter().next_back() else {
            return Err(CodecError::Empty(id));
        };
        if let Some(missing) = (1..=k).find(|g| !present.contains(g)) {
            return Err(CodecError::GroupGap { id, max: k, missing });
        }
        Ok(Self { id, window_h, window_w, group_grid, k })
    }

    /// Every cell its own group.
    pub fn identity(id: usize, window_h: usize, window_w: usize) -> Result<Self, CodecError> {
        Self::new(id, window_h, window_w, (1..=(window_h * window_w) as u32).collect())
    }

    pub fn window_h(&self) -> usize {
        self.window_h
    }

    pub fn window_w(&self) -> usize {
        self.window_w
    }

    /// Number of compressed groups before clipping.
    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn group_at(&self, r: usize, c: usize) -> u32 {
        self.group_grid[r * self.window_w + c]
    }
}

/// A template placed on the map: clipped groups of flat cell indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstantiatedAbstraction {
    pub theta: usize,
    pub center: CellIndex,
    pub groups: Vec<AbstractionGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractionGroup {
    pub id: u32,
    /// Flat indices in row-major order.
    pub cells: Vec<usize>,
}

impl InstantiatedAbstraction {
    /// Retained group count after clipping.
    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.groups.iter().map(|g| g.cells.len())
    }
}

pub fn instantiate(template: &Template, map: &GridMap, center: CellIndex) -> InstantiatedAbstraction {
    let (hh, hw) = ((template.window_h / 2) as i64, (template.window_w / 2) as i64);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); template.k()];
    for r in 0..template.window_h {
        for c in 0..template.window_w {
            let g = template.group_at(r, c);
            if g == 0 {
                continue;
            }
            if let Some(cell) = map.offset(center, r as i64 - hh, c as i64 - hw) {
                members[(g - 1) as usize].push(map.flat(cell));
            }
        }
    }
    let groups = members
        .into_iter()
        .enumerate()
        .filter(|(_, cells)| !cells.is_empty())
        .map(|(i, cells)| AbstractionGroup { id: i as u32 + 1, cells })
        .collect();
    InstantiatedAbstraction { theta: template.id, center, groups }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: u32,
    pub mean: f64,
    pub variance: f64,
}

/// Transmitted triplet plus the sensor position and timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionMessage {
    pub theta: usize,
    pub sensor_position: CellIndex,
    pub groups: Vec<GroupSummary>,
    pub variance_included: bool,
    pub t: usize,
}

impl AbstractionMessage {
    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn at(mut self, t: usize) -> Self {
        self.t = t;
        self
    }

    /// Drops the variances from the payload.
    pub fn without_variance(mut self) -> Self {
        self.variance_included = false;
        for g in &mut self.groups {
            g.variance = 0.0;
        }
        self
    }

    pub fn is_valid(&self) -> bool {
        self.groups.iter().all(|g| {
            (0.0..=1.0).contains(&g.mean)
                && (0.0..=0.25).contains(&g.variance)
                && g.variance <= g.mean * (1.0 - g.mean) + 1e-12
        })
    }
}

/// Group means and mean squared deviations of the sensed values.
pub fn compress(
    values_at: impl Fn(usize) -> Option<f64>,
    abstraction: &InstantiatedAbstraction,
    width: usize,
) -> Result<AbstractionMessage, CodecError> {
    let mut groups = Vec::with_capacity(abstraction.groups.len());
    for g in &abstraction.groups {
        let mut vals = Vec::with_capacity(g.cells.len());
        for &j in &g.cells {
            let v = values_at(j).ok_or(CodecError::Unsensed {
                group: g.id,
                cell: CellIndex::new(j / width, j % width),
            })?;
            vals.push(v);
        }
        let n = vals.len() as f64;
        let mean = (vals.iter().sum::<f64>() / n).clamp(0.0, 1.0);
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        // rounding can push the variance a hair past its [0,1]-support maximum
        let variance = var.clamp(0.0, mean * (1.0 - mean));
        groups.push(GroupSummary { group: g.id, mean, variance });
    }
    Ok(AbstractionMessage {
        theta: abstraction.theta,
        sensor_position: abstraction.center,
        groups,
        variance_included: true,
        t: 0,
    })
}

/// Bits per (mean, variance) pair and per template index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommModel {
    pub n_m: u64,
    pub n_a: u64,
}

impl Default for CommModel {
    fn default() -> Self {
        Self { n_m: 24, n_a: 4 }
    }
}

impl CommModel {
    /// Bits for a value without its variance; rounds up for odd `n_m`.
    pub fn half_n_m(&self) -> u64 {
        self.n_m.div_ceil(2)
    }

    pub fn cost(&self, k: usize, variance_included: bool) -> u64 {
        let per = if variance_included { self.n_m } else { self.half_n_m() };
        k as u64 * per + self.n_a
    }
}

pub fn bit_cost(message: &AbstractionMessage, comm: &CommModel) -> u64 {
    comm.cost(message.k(), message.variance_included)
}

/// Ordered set of templates sharing one window size; ids are 1..=K.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    templates: Vec<Template>,
}

impl Codebook {
    pub fn new(mut templates: Vec<Template>) -> Result<Self, CodecError> {
        let first = templates.first().ok_or(CodecError::EmptyCodebook)?;
        let (h, w) = (first.window_h, first.window_w);
        let k = templates.len();
        let mut seen = BTreeSet::new();
        for t in &templates {
            if !seen.insert(t.id) {
                return Err(CodecError::DuplicateId(t.id));
            }
            if t.id == 0 || t.id > k {
                return Err(CodecError::IdOutOfRange { id: t.id, k });
            }
            if (t.window_h, t.window_w) != (h, w) {
                return Err(CodecError::DimensionMismatch {
                    id: t.id,
                    got_h: t.window_h,
                    got_w: t.window_w,
                    h,
                    w,
                });
            }
        }
        templates.sort_by_key(|t| t.id);
        Ok(Self { templates })
    }

    pub fn default_7x7() -> Self {
        Self::parse(DEFAULT_CODEBOOK).expect("bundled codebook is valid")
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, theta: usize) -> Option<&Template> {
        theta.checked_sub(1).and_then(|i| self.templates.get(i))
    }

    pub fn window(&self) -> (usize, usize) {
        (self.templates[0].window_h, self.templates[0].window_w)
    }

    pub fn parse(text: &str) -> Result<Self, CodecError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(CodecError::EmptyCodebook)?;
        let nums = parse_row(hl, header)?;
        let [count, h, w] = nums[..] else {
            return Err(CodecError::Parse { line: hl, msg: "header must be `K window_h window_w`".into() });
        };
        let (count, h, w) = (count as usize, h as usize, w as usize);
        if count == 0 {
            return Err(CodecError::EmptyCodebook);
        }
        let mut templates = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, line) = lines
                .next()
                .ok_or(CodecError::Parse { line: 0, msg: "missing template block".into() })?;
            let id = line
                .strip_prefix("template")
                .and_then(|rest| rest.trim().parse::<usize>().ok())
                .ok_or_else(|| CodecError::Parse { line: ln, msg: "expected `template <id>`".into() })?;
            let mut grid = Vec::with_capacity(h * w);
            for r in 0..h {
                let (ln, line) = lines.next().ok_or_else(|| CodecError::Parse {
                    line: ln,
                    msg: format!("template {id}: missing row {r}"),
                })?;
                let row = parse_row(ln, line)?;
                if row.len() != w {
                    return Err(CodecError::DimensionMismatch { id, got_h: h, got_w: row.len(), h, w });
                }
                grid.extend(row);
            }
            templates.push(Template::new(id, h, w, grid)?);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(CodecError::Parse { line: ln, msg: "more templates than declared".into() });
        }
        Self::new(templates)
    }

    pub fn to_text(&self) -> String {
        let (h, w) = self.window();
        let mut out = format!("{} {} {}\n", self.len(), h, w);
        for t in &self.templates {
            out.push_str(&format!("template {}\n", t.id));
            for row in t.group_grid.chunks(w) {
                let cells: Vec<String> = row.iter().map(|g| format!("{g:2}")).collect();
                out.push_str(&cells.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

fn parse_row(line: usize, text: &str) -> Result<Vec<u32>, CodecError> {
    text.split_whitespace()
        .map(|t| t.parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|e| CodecError::Parse { line, msg: e.to_string() })
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook, CodecError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| CodecError::Io { path: path.display().to_string(), source })?;
    Codebook::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg_with_k(k: usize) -> AbstractionMessage {
        AbstractionMessage {
            theta: 1,
            sensor_position: CellIndex::new(0, 0),
            groups: (0..k).map(|i| GroupSummary { group: i as u32 + 1, mean: 0.5, variance: 0.0 }).collect(),
            variance_included: true,
            t: 0,
        }
    }

    fn single_group(values: &[f64]) -> GroupSummary {
        let abs = InstantiatedAbstraction {
            theta: 1,
            center: CellIndex::new(0, 0),
            groups: vec![AbstractionGroup { id: 1, cells: (0..values.len()).collect() }],
        };
        compress(|j| values.get(j).copied(), &abs, values.len()).unwrap().groups[0]
    }

    #[test]
    fn two_level_block() {
        let g = single_group(&[0.0, 0.0, 1.0, 1.0]);
        assert_eq!((g.mean, g.variance), (0.5, 0.25));
    }

    #[test]
    fn uniform_block_has_zero_variance() {
        let g = single_group(&[0.3; 4]);
        assert!((g.mean - 0.3).abs() < 1e-15);
        assert!(g.variance.abs() < 1e-15);
    }

    #[test]
    fn ramp_block_variance() {
        // (0.09 + 0.01 + 0.01 + 0.09) / 4
        let g = single_group(&[0.2, 0.4, 0.6, 0.8]);
        assert!((g.mean - 0.5).abs() < 1e-15);
        assert!((g.variance - 0.05).abs() < 1e-15);
    }

    #[test]
    fn unsensed_member_rejected() {
        let abs = InstantiatedAbstraction {
            theta: 1,
            center: CellIndex::new(0, 0),
            groups: vec![AbstractionGroup { id: 1, cells: vec![0, 1] }],
        };
        let err = compress(|j| (j == 0).then_some(0.5), &abs, 4).unwrap_err();
        assert!(matches!(err, CodecError::Unsensed { group: 1, .. }));
    }

    #[test]
    fn bit_costs() {
        let comm = CommModel::default();
        assert_eq!(bit_cost(&msg_with_k(7), &comm), 172);
        assert_eq!(bit_cost(&msg_with_k(7).without_variance(), &comm), 88);
        assert_eq!(bit_cost(&msg_with_k(49), &comm), 1180);
        for k in 1..60 {
            assert!(comm.cost(k + 1, true) > comm.cost(k, true));
        }
    }

    #[test]
    fn instantiate_interior_keeps_template() {
        let map = GridMap::filled(9, 9, 0.0).unwrap();
        let cb = Codebook::default_7x7();
        for t in cb.templates() {
            let inst = instantiate(t, &map, CellIndex::new(4, 4));
            assert_eq!(inst.k(), t.k());
        }
    }

    #[test]
    fn instantiate_corner_single_group() {
        let map = GridMap::filled(9, 9, 0.0).unwrap();
        let t = Template::new(1, 7, 7, vec![1; 49]).unwrap();
        let inst = instantiate(&t, &map, CellIndex::new(0, 0));
        assert_eq!(inst.k(), 1);
        assert_eq!(inst.groups[0].cells.len(), 16);
    }

    #[test]
    fn instantiate_drops_groups_outside_map() {
        let map = GridMap::filled(9, 9, 0.0).unwrap();
        let cb = Codebook::default_7x7();
        let rows = cb.get(8).unwrap();
        let inst = instantiate(rows, &map, CellIndex::new(0, 0));
        // window rows -3..=3 intersect map rows 0..=3 only
        let expected: Vec<u32> = (1..=7u32).filter(|g| (*g as i64 - 4) >= 0).collect();
        assert_eq!(inst.groups.iter().map(|g| g.id).collect::<Vec<_>>(), expected);
        for g in &inst.groups {
            assert_eq!(g.cells.len(), 4);
        }
    }

    #[test]
    fn default_codebook_shape() {
        let cb = Codebook::default_7x7();
        assert_eq!(cb.len(), 10);
        assert_eq!(cb.window(), (7, 7));
        assert_eq!(cb.get(1).unwrap().k(), 49);
        assert_eq!(cb.get(8).unwrap().k(), 7);
        assert_eq!(cb.get(9).unwrap().k(), 7);
        assert_eq!(Codebook::parse(&cb.to_text()).unwrap(), cb);
    }

    #[test]
    fn identity_template_file() {
        let text = "1 3 3\ntemplate 1\n1 2 3\n4 5 6\n7 8 9\n";
        let cb = Codebook::parse(text).unwrap();
        assert_eq!(cb.get(1).unwrap().k(), 9);
    }

    #[test]
    fn codebook_errors() {
        let zero = "1 3 3\ntemplate 1\n0 0 0\n0 0 0\n0 0 0\n";
        let err = Codebook::parse(zero).unwrap_err();
        assert!(err.to_string().contains("transmits nothing"));
        let gap = "1 1 3\ntemplate 1\n1 3 3\n";
        assert!(matches!(Codebook::parse(gap), Err(CodecError::GroupGap { missing: 2, .. })));
        let dup = "2 1 1\ntemplate 1\n1\ntemplate 1\n1\n";
        assert!(matches!(Codebook::parse(dup), Err(CodecError::DuplicateId(1))));
        let dims = Codebook::new(vec![Template::identity(1, 3, 3).unwrap(), Template::identity(2, 5, 5).unwrap()]);
        assert!(matches!(dims, Err(CodecError::DimensionMismatch { .. })));
        assert!(matches!(Codebook::parse("1 3 3\ntemplate 1\n1 1 1\n1 1\n1 1 1\n"), Err(CodecError::DimensionMismatch { .. })));
    }
}
