//! Parkes error grid for type 1 diabetes.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TYPE1_GRID: &str = include_str!("../../data/parkes_type1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PegZone {
    A,
    B,
    C,
    D,
    E,
}

impl PegZone {
    pub const ALL: [PegZone; 5] = [PegZone::A, PegZone::B, PegZone::C, PegZone::D, PegZone::E];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["A", "B", "C", "D", "E"][self.index()]
    }

    pub fn meaning(self) -> &'static str {
        match self {
            PegZone::A => "no effect on clinical action",
            PegZone::B => "altered clinical action, little or no effect on outcome",
            PegZone::C => "altered clinical action, likely to affect outcome",
            PegZone::D => "altered clinical action, significant medical risk",
            PegZone::E => "altered clinical action, could have dangerous consequences",
        }
    }
}

impl fmt::Display for PegZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One nested region: points above `upper` or below `lower` fall into
/// `outside` or worse. Polylines are (reference, prediction) vertices with
/// increasing reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub outside: PegZone,
    pub upper: Vec<[f64; 2]>,
    pub lower: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PegGrid {
    pub version: u32,
    pub name: String,
    pub domain: [f64; 2],
    /// Ordered from the innermost (zone A) region outwards.
    pub boundaries: Vec<Boundary>,
}

/// Side of the polyline a point must not cross; it also decides the value
/// on vertical segments so that points on a boundary stay inside.
#[derive(Clone, Copy)]
enum Side {
    Upper,
    Lower,
}

fn polyline_at(line: &[[f64; 2]], x: f64, side: Side) -> Option<f64> {
    let mut value: Option<f64> = None;
    for w in line.windows(2) {
        let ([x0, y0], [x1, y1]) = (w[0], w[1]);
        if x < x0 || x > x1 {
            continue;
        }
        let y = if x1 == x0 {
            match side {
                Side::Upper => y0.max(y1),
                Side::Lower => y0.min(y1),
            }
        } else {
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        };
        value = Some(match (value, side) {
            (None, _) => y,
            (Some(v), Side::Upper) => v.max(y),
            (Some(v), Side::Lower) => v.min(y),
        });
    }
    value
}

impl Boundary {
    /// Whether (x, y) lies inside or on this region.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let below_upper = polyline_at(&self.upper, x, Side::Upper).is_none_or(|u| y <= u);
        let above_lower = polyline_at(&self.lower, x, Side::Lower).is_none_or(|l| y >= l);
        below_upper && above_lower
    }
}

impl PegGrid {
    pub fn type1() -> &'static PegGrid {
        static GRID: OnceLock<PegGrid> = OnceLock::new();
        GRID.get_or_init(|| PegGrid::from_json(TYPE1_GRID).expect("shipped grid is valid"))
    }

    pub fn from_json(text: &str) -> Result<PegGrid> {
        let grid: PegGrid = serde_json::from_str(text)?;
        grid.check()?;
        Ok(grid)
    }

    fn check(&self) -> Result<()> {
        if !(self.domain[0] < self.domain[1]) {
            return Err(Error::Config("grid domain is empty".into()));
        }
        let mut last = PegZone::A;
        for b in &self.boundaries {
            if b.outside <= last {
                return Err(Error::Config("grid regions must be ordered by zone".into()));
            }
            last = b.outside;
            for line in [&b.upper, &b.lower] {
                if line.len() == 1 || line.windows(2).any(|w| w[1][0] < w[0][0]) {
                    return Err(Error::Config(format!(
                        "boundary of zone {} must have increasing reference values",
                        b.outside
                    )));
                }
            }
        }
        Ok(())
    }

    /// Clamps into the grid domain; negative values are rejected.
    pub fn clamp(&self, value: f64, what: &str) -> Result<f64> {
        if !(value >= self.domain[0]) {
            return Err(Error::Domain(format!("{what} {value} is outside the error grid")));
        }
        if value > self.domain[1] {
            log::warn!("{what} {value} mg/dL clamped to {}", self.domain[1]);
            return Ok(self.domain[1]);
        }
        Ok(value)
    }

    pub fn classify(&self, reference: f64, prediction: f64) -> Result<PegZone> {
        let x = self.clamp(reference, "reference")?;
        let y = self.clamp(prediction, "prediction")?;
        let mut zone = PegZone::A;
        for b in &self.boundaries {
            if !b.contains(x, y) {
                zone = b.outside;
            }
        }
        Ok(zone)
    }
}

pub fn peg_classify(reference: f64, prediction: f64) -> Result<PegZone> {
    PegGrid::type1().classify(reference, prediction)
}
