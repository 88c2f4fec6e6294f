//! Verdicts: witness-bearing outcomes of the structural checks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::atlas::{fmt_index, IndexSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Undetermined,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub charts: Vec<IndexSet>,
    pub points: Vec<Vec<f64>>,
    #[serde(with = "extended")]
    pub margin: f64,
    pub detail: String,
}

impl Witness {
    pub fn new(charts: Vec<IndexSet>, points: Vec<Vec<f64>>, margin: f64, detail: impl Into<String>) -> Self {
        Witness { charts, points, margin, detail: detail.into() }
    }
}

/// Outcome of one check. `margin` is the worst value of the check's
/// monitored quantity (a residual for identities, a singular value or a
/// distance for open conditions); its meaning is given by `note`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub status: Status,
    #[serde(with = "extended")]
    pub margin: f64,
    pub witnesses: Vec<Witness>,
    #[serde(with = "extended")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// JSON has no infinities; non-finite floats are written as strings.
pub mod extended {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("expected a number, got {t:?}"))),
            },
        }
    }
}

const MAX_WITNESSES: usize = 8;

impl Verdict {
    pub fn pass(check: impl Into<String>, margin: f64, tolerance: f64) -> Self {
        Verdict {
            check: check.into(),
            status: Status::Pass,
            margin,
            witnesses: Vec::new(),
            tolerance,
            note: String::new(),
        }
    }

    pub fn fail(check: impl Into<String>, margin: f64, tolerance: f64, w: Witness) -> Self {
        Verdict {
            check: check.into(),
            status: Status::Fail,
            margin,
            witnesses: vec![w],
            tolerance,
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }

    /// Record a failure witness, keeping at most a handful.
    pub fn push_failure(&mut self, w: Witness) {
        self.status = Status::Fail;
        if self.witnesses.len() < MAX_WITNESSES {
            self.witnesses.push(w);
        }
    }

    pub fn mark_undetermined(&mut self, w: Witness) {
        if self.status == Status::Pass {
            self.status = Status::Undetermined;
        }
        if self.witnesses.len() < MAX_WITNESSES {
            self.witnesses.push(w);
        }
    }

    /// Worst-case merge; `worse_is_larger` tells which margin direction is bad.
    pub fn merge(mut self, o: Verdict, worse_is_larger: bool) -> Verdict {
        self.status = self.status.max(o.status);
        self.margin = if worse_is_larger { self.margin.max(o.margin) } else { self.margin.min(o.margin) };
        for w in o.witnesses {
            if self.witnesses.len() < MAX_WITNESSES {
                self.witnesses.push(w);
            }
        }
        self
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Undetermined => "UNDETERMINED",
        };
        write!(f, "{:<28} {:<12} margin={:.3e}", self.check, s, self.margin)?;
        if let Some(w) = self.witnesses.first() {
            let charts: Vec<String> = w.charts.iter().map(|c| fmt_index(c)).collect();
            write!(f, "  witness [{}] {}", charts.join(" "), w.detail)?;
        }
        if !self.note.is_empty() {
            write!(f, "  ({})", self.note)?;
        }
        Ok(())
    }
}
