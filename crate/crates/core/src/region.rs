//! Grid world geometry and static region configuration.
//!
//! A region is an `height x width` grid of cells. Moving between adjacent
//! cells takes one minute, so Manhattan distance doubles as travel time in
//! minutes. A region carries one depot, a set of restaurants with
//! popularity weights, and a per-cell customer demand weight matrix.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A cell position: `row` from the top, `col` from the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCoord {
    pub row: u32,
    pub col: u32,
}

impl GridCoord {
    pub const fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for GridCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.row, self.col)
    }
}

/// Manhattan distance between two cells, in minutes of travel.
pub fn manhattan(a: GridCoord, b: GridCoord) -> u32 {
    a.row.abs_diff(b.row) + a.col.abs_diff(b.col)
}

/// A restaurant cell with a relative order popularity weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Restaurant {
    pub id: usize,
    pub cell: GridCoord,
    pub popularity: f64,
}

/// Static description of a delivery region.
///
/// `customer_weights` is a row-major `height x width` matrix of nonnegative
/// demand weights. Weights may be unnormalized counts; order sampling draws
/// destinations proportional to them, which is equivalent to normalizing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub name: String,
    pub height: u32,
    pub width: u32,
    pub depot: GridCoord,
    pub restaurants: Vec<Restaurant>,
    pub customer_weights: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("failed to read region file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse region file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid region `{region}`: field `{field}`: {message}")]
    Invalid {
        region: String,
        field: String,
        message: String,
    },
    #[error("invalid synthetic region parameters: {0}")]
    BadParams(String),
}

impl RegionConfig {
    /// Longest possible trip in the grid, in minutes. Used to scale
    /// distance features.
    pub fn max_trip_minutes(&self) -> u32 {
        self.height + self.width - 2
    }

    pub fn contains(&self, cell: GridCoord) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn restaurant_cell(&self, id: usize) -> GridCoord {
        self.restaurants[id].cell
    }

    /// Checks every structural invariant, reporting the first violation by
    /// field name.
    pub fn validate(&self) -> Result<(), RegionError> {
        let invalid = |field: &str, message: String| RegionError::Invalid {
            region: self.name.clone(),
            field: field.to_string(),
            message,
        };
        if self.height == 0 || self.width == 0 {
            return Err(invalid(
                "height/width",
                format!("grid must be nonempty, got {}x{}", self.height, self.width),
            ));
        }
        if !self.contains(self.depot) {
            return Err(invalid(
                "depot",
                format!(
                    "depot {} lies outside the {}x{} grid",
                    self.depot, self.height, self.width
                ),
            ));
        }
        if self.restaurants.is_empty() {
            return Err(invalid(
                "restaurants",
                "at least one restaurant required".into(),
            ));
        }
        for (pos, r) in self.restaurants.iter().enumerate() {
            if r.id != pos {
                return Err(invalid(
                    &format!("restaurants[{pos}].id"),
                    format!(
                        "ids must be dense 0..{}, got {}",
                        self.restaurants.len(),
                        r.id
                    ),
                ));
            }
            if !self.contains(r.cell) {
                return Err(invalid(
                    &format!("restaurants[id={}].cell", r.id),
                    format!("cell {} lies outside the grid", r.cell),
                ));
            }
            if !r.popularity.is_finite() || r.popularity < 0.0 {
                return Err(invalid(
                    &format!("restaurants[id={}].popularity", r.id),
                    format!(
                        "popularity weight must be finite and >= 0, got {}",
                        r.popularity
                    ),
                ));
            }
        }
        let pop_sum: f64 = self.restaurants.iter().map(|r| r.popularity).sum();
        if pop_sum <= 0.0 {
            return Err(invalid(
                "restaurants",
                "popularity weights must sum to a positive value".into(),
            ));
        }
        if self.customer_weights.len() != self.height as usize {
            return Err(invalid(
                "customer_weights",
                format!(
                    "expected {} rows, got {}",
                    self.height,
                    self.customer_weights.len()
                ),
            ));
        }
        let mut any_positive = false;
        for (i, row) in self.customer_weights.iter().enumerate() {
            if row.len() != self.width as usize {
                return Err(invalid(
                    &format!("customer_weights[{i}]"),
                    format!("expected {} columns, got {}", self.width, row.len()),
                ));
            }
            for (j, &w) in row.iter().enumerate() {
                if !w.is_finite() || w < 0.0 {
                    return Err(invalid(
                        &format!("customer_weights[{i}][{j}]"),
                        format!("weight must be finite and >= 0, got {w}"),
                    ));
                }
                any_positive |= w > 0.0;
            }
        }
        if !any_positive {
            return Err(invalid(
                "customer_weights",
                "at least one cell must have positive demand weight".into(),
            ));
        }
        Ok(())
    }
}

/// Generates a synthetic region: depot in the middle cell, `n_restaurants`
/// distinct non-depot cells, long-tailed popularity weights (squared
/// uniform), uniform customer demand. Deterministic for a given seed.
pub fn generate_synthetic_region(
    height: u32,
    width: u32,
    n_restaurants: u32,
    seed: u64,
) -> Result<RegionConfig, RegionError> {
    if height == 0 || width == 0 {
        return Err(RegionError::BadParams(format!(
            "grid must be nonempty, got {height}x{width}"
        )));
    }
    let cells = (height as u64) * (width as u64);
    if n_restaurants == 0 {
        return Err(RegionError::BadParams(
            "need at least one restaurant".into(),
        ));
    }
    if u64::from(n_restaurants) > cells - 1 {
        return Err(RegionError::BadParams(format!(
            "{n_restaurants} restaurants do not fit in a {height}x{width} grid with a depot"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depot = GridCoord::new(height / 2, width / 2);

    // Partial Fisher-Yates over all non-depot cells.
    let mut pool: Vec<GridCoord> = (0..height)
        .flat_map(|r| (0..width).map(move |c| GridCoord::new(r, c)))
        .filter(|&c| c != depot)
        .collect();
    let mut restaurants = Vec::with_capacity(n_restaurants as usize);
    for id in 0..n_restaurants as usize {
        let pick = rng.random_range(id..pool.len());
        pool.swap(id, pick);
        // Squared uniform on (0, 1]: unequal, long-tailed, strictly positive.
        let u = 1.0 - rng.random::<f64>();
        restaurants.push(Restaurant {
            id,
            cell: pool[id],
            popularity: u * u,
        });
    }

    let config = RegionConfig {
        name: format!("synthetic-{height}x{width}-r{n_restaurants}-s{seed}"),
        height,
        width,
        depot,
        restaurants,
        customer_weights: vec![vec![1.0; width as usize]; height as usize],
    };
    config.validate()?;
    Ok(config)
}

/// Serializes a region to a human-readable TOML document.
pub fn save_region(config: &RegionConfig, path: &Path) -> Result<(), RegionError> {
    let text = toml::to_string_pretty(config).map_err(|e| RegionError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| RegionError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Loads and validates a region file.
pub fn load_region(path: &Path) -> Result<RegionConfig, RegionError> {
    let text = std::fs::read_to_string(path).map_err(|e| RegionError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let config: RegionConfig = toml::from_str(&text).map_err(|e| RegionError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}
