//! Predefined square circuits for the non-adaptive sensor baselines.

use super::scenario::SquareDirection;
use crate::grid::{Action, CellIndex, GridMap};

/// Closed square circuit with `anchor` as one corner, clockwise starting
/// eastward or counterclockwise starting southward. Corners beyond the map
/// are clamped to the border and repeated cells collapsed, so the route stays
/// 4-connected. The anchor is element 0 and is not repeated at the end.
pub fn square_route(map: &GridMap, anchor: CellIndex, side: usize, direction: SquareDirection) -> Vec<CellIndex> {
    let s = side.max(1) as i64 - 1;
    let legs: [(i64, i64); 4] = match direction {
        SquareDirection::Clockwise => [(0, 1), (1, 0), (0, -1), (-1, 0)],
        SquareDirection::Counterclockwise => [(1, 0), (0, 1), (-1, 0), (0, -1)],
    };
    let clamp = |r: i64, c: i64| {
        CellIndex::new(
            r.clamp(0, map.height() as i64 - 1) as usize,
            c.clamp(0, map.width() as i64 - 1) as usize,
        )
    };
    let (mut r, mut c) = (anchor.row as i64, anchor.col as i64);
    let mut route = vec![anchor];
    for (dr, dc) in legs {
        for _ in 0..s {
            r += dr;
            c += dc;
            let cell = clamp(r, c);
            if route.last() != Some(&cell) {
                route.push(cell);
            }
        }
    }
    // the circuit closes on the anchor
    while route.len() > 1 && route.last() == Some(&anchor) {
        route.pop();
    }
    route
}

/// Action that moves `from` to the adjacent `to`; `None` when they coincide.
pub fn action_between(from: CellIndex, to: CellIndex) -> Option<Action> {
    let dr = to.row as i64 - from.row as i64;
    let dc = to.col as i64 - from.col as i64;
    Action::ALL.into_iter().find(|a| a.delta() == (dr, dc))
}
