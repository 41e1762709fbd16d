use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gridworld::{Cell, GridMap};
use crate::mfpt::Landscape;

/// Gray level of a cell with passage time `mu`: 255 at the goal, falling to
/// 0 at `cap` and beyond (including unreachable cells).
pub fn pixel_value(mu: f64, cap: f64) -> u8 {
    let clipped = mu.min(cap).max(0.0);
    (255.0 * (1.0 - clipped / cap)).round() as u8
}

/// Plain (P2) PGM rendering with one pixel per grid cell; obstacles are 0.
pub fn heatmap_pgm(landscape: &Landscape, map: Option<&GridMap>, cap: f64) -> Result<String> {
    let map = map.ok_or(Error::NotAGrid)?;
    if !(cap > 0.0) {
        return Err(Error::Config(format!("heatmap cap must be positive, got {cap}")));
    }
    if landscape.len() != map.n_states() {
        return Err(Error::LengthMismatch {
            expected: map.n_states(),
            actual: landscape.len(),
        });
    }
    let mut out = format!("P2\n{} {}\n255\n", map.width, map.height);
    for row in 0..map.height {
        let line: Vec<String> = (0..map.width)
            .map(|col| match map.state(Cell::new(row, col)) {
                Some(s) => pixel_value(landscape.mu[s], cap).to_string(),
                None => "0".to_string(),
            })
            .collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    Ok(out)
}

pub fn emit_heatmap(
    landscape: &Landscape,
    map: Option<&GridMap>,
    cap: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let text = heatmap_pgm(landscape, map, cap)?;
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
