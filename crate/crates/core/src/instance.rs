//! Feasible point sets and their JSON file format.
//!
//! ```json
//! {"format":"chord-bench/1","mode":"rational","m":2,
//!  "points":[["1/1","2/1"],["2/1","1/1"]],"meta":{"family":"manual"}}
//! ```
//!
//! Rational coordinates are `"p/q"` strings, float coordinates are JSON
//! numbers in shortest round-trip form. Points are stored by increasing x.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{cmp_xy, Point};
use crate::scalar::{Mode, Rational, Scalar, ScalarError};

pub const FORMAT_TAG: &str = "chord-bench/1";

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("instance has no points")]
    Empty,
    #[error("point {0} lies outside [2^-{1}, 2^{1}]^2")]
    OutOfRange(String, u32),
    #[error("unsupported format tag {0:?}")]
    Format(String),
    #[error("instance mode is {found}, expected {expected}")]
    ModeMismatch { found: Mode, expected: Mode },
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Finite objective space: points in `[2^-m, 2^m]²` plus construction metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    points: Vec<Point<T>>,
    m: u32,
    pub meta: BTreeMap<String, String>,
}

impl<T: Scalar> Instance<T> {
    /// Validates the bounds and sorts the points by x, then y.
    pub fn new(
        mut points: Vec<Point<T>>,
        m: u32,
        meta: BTreeMap<String, String>,
    ) -> Result<Self, InstanceError> {
        if points.is_empty() {
            return Err(InstanceError::Empty);
        }
        let lo = T::pow2(-(m as i32));
        let hi = T::pow2(m as i32);
        for p in &points {
            if p.x < lo || p.y < lo || p.x > hi || p.y > hi {
                return Err(InstanceError::OutOfRange(p.to_string(), m));
            }
        }
        points.sort_by(cmp_xy);
        Ok(Instance { points, m, meta })
    }

    /// Uses the smallest `m >= 1` that contains every point.
    pub fn with_auto_m(
        points: Vec<Point<T>>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self, InstanceError> {
        let mut m = 1u32;
        while m < 4096 {
            let lo = T::pow2(-(m as i32));
            let hi = T::pow2(m as i32);
            if points
                .iter()
                .all(|p| p.x >= lo && p.y >= lo && p.x <= hi && p.y <= hi)
            {
                break;
            }
            m += 1;
        }
        Self::new(points, m, meta)
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    fn to_file(&self) -> InstanceFile {
        InstanceFile {
            format: FORMAT_TAG.to_string(),
            mode: T::MODE,
            m: self.m,
            points: self
                .points
                .iter()
                .map(|p| [p.x.to_json(), p.y.to_json()])
                .collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(self.to_file()).expect("instance serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(s)?;
        file.into_instance()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    format: String,
    mode: Mode,
    m: u32,
    points: Vec<[Value; 2]>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

impl InstanceFile {
    fn into_instance<T: Scalar>(self) -> Result<Instance<T>, InstanceError> {
        if self.format != FORMAT_TAG {
            return Err(InstanceError::Format(self.format));
        }
        if self.mode != T::MODE {
            return Err(InstanceError::ModeMismatch {
                found: self.mode,
                expected: T::MODE,
            });
        }
        let points = self
            .points
            .iter()
            .map(|[x, y]| Ok(Point::new(T::from_json(x)?, T::from_json(y)?)))
            .collect::<Result<Vec<_>, ScalarError>>()?;
        Instance::new(points, self.m, self.meta)
    }
}

/// An instance of either arithmetic mode, as read from a file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyInstance {
    Rational(Instance<Rational>),
    Float(Instance<f64>),
}

impl AnyInstance {
    pub fn from_json(s: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(s)?;
        match file.mode {
            Mode::Rational => Ok(AnyInstance::Rational(file.into_instance()?)),
            Mode::Float => Ok(AnyInstance::Float(file.into_instance()?)),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        match self {
            AnyInstance::Rational(i) => i.to_json(),
            AnyInstance::Float(i) => i.to_json(),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            AnyInstance::Rational(_) => Mode::Rational,
            AnyInstance::Float(_) => Mode::Float,
        }
    }
}

impl From<Instance<Rational>> for AnyInstance {
    fn from(i: Instance<Rational>) -> Self {
        AnyInstance::Rational(i)
    }
}

impl From<Instance<f64>> for AnyInstance {
    fn from(i: Instance<f64>) -> Self {
        AnyInstance::Float(i)
    }
}

/// Parses a JSON array of `[x, y]` pairs, or an object with a `points` field.
pub fn parse_point_list<T: Scalar>(s: &str) -> Result<Vec<Point<T>>, InstanceError> {
    let v: Value = serde_json::from_str(s)?;
    let arr = match &v {
        Value::Array(a) => a,
        Value::Object(o) => match o.get("points") {
            Some(Value::Array(a)) => a,
            _ => return Err(InstanceError::Malformed("missing points array".into())),
        },
        _ => {
            return Err(InstanceError::Malformed(
                "expected an array or object".into(),
            ))
        }
    };
    arr.iter()
        .map(|pair| match pair {
            Value::Array(xy) if xy.len() == 2 => {
                Ok(Point::new(T::from_json(&xy[0])?, T::from_json(&xy[1])?))
            }
            other => Err(InstanceError::Malformed(format!("bad point {other}"))),
        })
        .collect()
}
