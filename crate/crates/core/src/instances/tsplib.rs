//! TSPLIB reader for `EUC_2D` instances.
//!
//! Coordinates are mapped into the unit square by subtracting the minimum
//! and dividing by the larger of the x/y extents; `scale` keeps the factor
//! so objectives can be reported in original units.

use std::fmt::Write as _;
use std::path::Path;

use super::{InstanceError, TspInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct TsplibInstance {
    pub name: String,
    pub instance: TspInstance,
    /// Multiply unit-square lengths by this to recover TSPLIB units.
    pub scale: f64,
}

pub fn load_tsplib(path: impl AsRef<Path>) -> Result<TsplibInstance, InstanceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_tsplib(&text, &path.display().to_string())
}

pub fn parse_tsplib(text: &str, origin: &str) -> Result<TsplibInstance, InstanceError> {
    let err = |line: usize, message: String| InstanceError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut name = String::new();
    let mut dimension: Option<usize> = None;
    let mut raw: Vec<[f64; 2]> = Vec::new();
    let mut in_coords = false;

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if in_coords {
            if line == "EOF" || line.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                in_coords = false;
                if line == "EOF" {
                    break;
                }
            } else {
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != 3 {
                    return Err(err(lineno, format!("expected `index x y`, got `{line}`")));
                }
                let parse = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| err(lineno, format!("bad coordinate `{s}`")))
                };
                raw.push([parse(fields[1])?, parse(fields[2])?]);
                continue;
            }
        }
        if line == "NODE_COORD_SECTION" {
            in_coords = true;
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            if line == "EOF" {
                break;
            }
            return Err(err(lineno, format!("malformed header line `{line}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "NAME" => name = value.to_string(),
            "DIMENSION" => {
                dimension = Some(
                    value
                        .parse()
                        .map_err(|_| err(lineno, format!("bad DIMENSION `{value}`")))?,
                )
            }
            "EDGE_WEIGHT_TYPE" if value != "EUC_2D" => {
                return Err(InstanceError::UnsupportedEdgeWeight(value.to_string()))
            }
            "TYPE" if value != "TSP" => {
                return Err(err(lineno, format!("unsupported problem TYPE `{value}`")))
            }
            _ => {}
        }
    }

    let dimension = dimension.ok_or_else(|| err(0, "missing DIMENSION".into()))?;
    if raw.len() != dimension {
        return Err(err(
            0,
            format!("DIMENSION is {dimension} but {} coordinates were read", raw.len()),
        ));
    }
    let (min_x, max_x) = min_max(raw.iter().map(|p| p[0]));
    let (min_y, max_y) = min_max(raw.iter().map(|p| p[1]));
    let extent = (max_x - min_x).max(max_y - min_y);
    let scale = if extent > 0.0 { extent } else { 1.0 };
    let coords = raw
        .iter()
        .map(|p| [(p[0] - min_x) / scale, (p[1] - min_y) / scale])
        .collect();
    let instance = TspInstance::new(name.clone(), coords)?;
    Ok(TsplibInstance { name, instance, scale })
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Writes an instance in TSPLIB `EUC_2D` form (unit-square coordinates).
pub fn save_tsplib(inst: &TspInstance, path: impl AsRef<Path>) -> Result<(), InstanceError> {
    let mut out = String::new();
    let _ = writeln!(out, "NAME : {}", inst.id);
    let _ = writeln!(out, "TYPE : TSP");
    let _ = writeln!(out, "DIMENSION : {}", inst.n());
    let _ = writeln!(out, "EDGE_WEIGHT_TYPE : EUC_2D");
    let _ = writeln!(out, "NODE_COORD_SECTION");
    for (i, p) in inst.coords().iter().enumerate() {
        let _ = writeln!(out, "{} {:?} {:?}", i + 1, p[0], p[1]);
    }
    out.push_str("EOF\n");
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}
