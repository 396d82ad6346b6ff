//! Reader for the floating-car-data (FCD) export written by SUMO.
//!
//! Only the subset needed for positions is interpreted:
//!
//! ```xml
//! <fcd-export>
//!   <timestep time="0.00">
//!     <vehicle id="veh0" x="12.5" y="3.2" speed="13.9" angle="90" .../>
//!   </timestep>
//! </fcd-export>
//! ```
//!
//! Unknown elements and attributes are ignored.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use super::{Position, TraceSample};
use crate::engine::SimTime;

#[derive(Debug, Error)]
pub enum FcdError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed XML: {message}")]
    Xml { line: u32, message: String },
    #[error("line {line}: expected root element <fcd-export>, found <{found}>")]
    Root { line: u32, found: String },
    #[error("line {line}: <{element}> is missing mandatory attribute `{attribute}`")]
    MissingAttribute {
        line: u32,
        element: &'static str,
        attribute: &'static str,
    },
    #[error("line {line}: <{element}> attribute `{attribute}` is not a finite decimal number: {value:?}")]
    BadNumber {
        line: u32,
        element: &'static str,
        attribute: &'static str,
        value: String,
    },
    #[error("line {line}: <vehicle id={vehicle:?}> timestamp {time}s does not advance past its previous sample at {previous}s")]
    NonMonotonic {
        line: u32,
        vehicle: String,
        previous: f64,
        time: f64,
    },
}

impl FcdError {
    /// 1-based line of the offending element, when known.
    pub fn line(&self) -> Option<u32> {
        match self {
            FcdError::Io { .. } => None,
            FcdError::Xml { line, .. }
            | FcdError::Root { line, .. }
            | FcdError::MissingAttribute { line, .. }
            | FcdError::BadNumber { line, .. }
            | FcdError::NonMonotonic { line, .. } => Some(*line),
        }
    }
}

pub fn parse_fcd(path: &Path) -> Result<Vec<TraceSample>, FcdError> {
    let text = std::fs::read_to_string(path).map_err(|source| FcdError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_fcd_str(&text)
}

/// Parses FCD XML text into samples in document order.
pub fn parse_fcd_str(text: &str) -> Result<Vec<TraceSample>, FcdError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| FcdError::Xml {
        line: e.pos().row,
        message: e.to_string(),
    })?;
    let line_of = |node: roxmltree::Node| doc.text_pos_at(node.range().start).row;

    let root = doc.root_element();
    if root.tag_name().name() != "fcd-export" {
        return Err(FcdError::Root {
            line: line_of(root),
            found: root.tag_name().name().to_owned(),
        });
    }

    let mut samples = Vec::new();
    let mut last_time: HashMap<String, f64> = HashMap::new();
    for step in root.children().filter(|n| n.has_tag_name("timestep")) {
        let step_line = line_of(step);
        let time = number_attr(step, "timestep", "time", step_line)?;
        if time < 0.0 {
            return Err(FcdError::BadNumber {
                line: step_line,
                element: "timestep",
                attribute: "time",
                value: step.attribute("time").unwrap_or_default().to_owned(),
            });
        }
        for veh in step.children().filter(|n| n.has_tag_name("vehicle")) {
            let line = line_of(veh);
            let id = veh.attribute("id").ok_or(FcdError::MissingAttribute {
                line,
                element: "vehicle",
                attribute: "id",
            })?;
            let x = number_attr(veh, "vehicle", "x", line)?;
            let y = number_attr(veh, "vehicle", "y", line)?;
            let speed = number_attr(veh, "vehicle", "speed", line)?;
            if let Some(&previous) = last_time.get(id) {
                if time <= previous {
                    return Err(FcdError::NonMonotonic {
                        line,
                        vehicle: id.to_owned(),
                        previous,
                        time,
                    });
                }
            }
            last_time.insert(id.to_owned(), time);
            samples.push(TraceSample {
                time: SimTime::from_secs_f64(time),
                vehicle_id: id.to_owned(),
                pos: Position::new(x, y),
                speed,
            });
        }
    }
    Ok(samples)
}

fn number_attr(
    node: roxmltree::Node,
    element: &'static str,
    attribute: &'static str,
    line: u32,
) -> Result<f64, FcdError> {
    let raw = node.attribute(attribute).ok_or(FcdError::MissingAttribute {
        line,
        element,
        attribute,
    })?;
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(FcdError::BadNumber {
            line,
            element,
            attribute,
            value: raw.to_owned(),
        }),
    }
}
