//! Seeded cluttered-map generator used in place of a surveyed map.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EngineError;
use crate::grid::{CellIndex, GridMap};

const MAX_ATTEMPTS: usize = 200;
/// Bars run up to a third of the shorter map side. Long thin walls force
/// detours that compact blobs of the same density do not.
const BAR_DIVISOR: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapGenParams {
    pub width: usize,
    pub height: usize,
    /// Target fraction of obstacle cells, in `[0,1)`.
    pub density: f64,
    /// Free cells get values uniform in `[0, noise)`; must stay below `epsilon`.
    pub noise: f64,
    pub epsilon: f64,
}

/// Rectangular wall bars (value 1, one or two cells thick) over free space.
/// When `endpoints` is given both cells are forced free and connected
/// through free cells.
pub fn generate_map(
    seed: u64,
    params: &MapGenParams,
    endpoints: Option<(CellIndex, CellIndex)>,
) -> Result<GridMap, EngineError> {
    let MapGenParams { width, height, density, noise, epsilon } = *params;
    if width == 0 || height == 0 {
        return Err(EngineError::Scenario("generated map needs positive dimensions".into()));
    }
    if !(0.0..1.0).contains(&density) {
        return Err(EngineError::Scenario(format!("density {density} must lie in [0,1)")));
    }
    if noise < 0.0 || (noise > 0.0 && noise >= epsilon) {
        return Err(EngineError::Scenario(format!("noise {noise} must lie in [0, epsilon)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = width * height;
    let max_len = (width.min(height) / BAR_DIVISOR).max(2);
    for _ in 0..MAX_ATTEMPTS {
        let mut blocked = vec![false; n];
        let target = (density * n as f64).round() as usize;
        let mut count = 0;
        while count < target {
            let long = rng.gen_range(2..=max_len);
            let thick = rng.gen_range(1..=2);
            let (bh, bw) = if rng.gen_bool(0.5) { (thick, long) } else { (long, thick) };
            let r0 = rng.gen_range(0..height);
            let c0 = rng.gen_range(0..width);
            for r in r0..(r0 + bh).min(height) {
                for c in c0..(c0 + bw).min(width) {
                    let j = r * width + c;
                    if !blocked[j] {
                        blocked[j] = true;
                        count += 1;
                    }
                }
            }
        }
        if let Some((s, g)) = endpoints {
            if s.row >= height || s.col >= width || g.row >= height || g.col >= width {
                return Err(EngineError::Scenario("start/goal outside the generated map".into()));
            }
            blocked[s.row * width + s.col] = false;
            blocked[g.row * width + g.col] = false;
            if !connected(&blocked, width, height, s, g) {
                continue;
            }
        }
        let values = blocked
            .iter()
            .map(|&b| if b { 1.0 } else if noise > 0.0 { rng.gen_range(0.0..noise) } else { 0.0 })
            .collect();
        return GridMap::new(height, width, values).map_err(|e| EngineError::Scenario(e.to_string()));
    }
    Err(EngineError::Scenario(format!(
        "no connected start/goal placement after {MAX_ATTEMPTS} attempts (density {density})"
    )))
}

fn connected(blocked: &[bool], width: usize, height: usize, s: CellIndex, g: CellIndex) -> bool {
    let mut seen = vec![false; blocked.len()];
    let mut queue = VecDeque::from([s]);
    seen[s.row * width + s.col] = true;
    while let Some(c) = queue.pop_front() {
        if c == g {
            return true;
        }
        let nbrs = [
            (c.row.wrapping_sub(1), c.col),
            (c.row + 1, c.col),
            (c.row, c.col.wrapping_sub(1)),
            (c.row, c.col + 1),
        ];
        for (r, col) in nbrs {
            if r < height && col < width {
                let j = r * width + col;
                if !seen[j] && !blocked[j] {
                    seen[j] = true;
                    queue.push_back(CellIndex::new(r, col));
                }
            }
        }
    }
    false
}
